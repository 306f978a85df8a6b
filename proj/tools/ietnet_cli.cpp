// Command-line front end: dataset generation and ingestion, training,
// evaluation, per-instance explanation, and channel-drop ablation. Every
// command echoes its fully resolved configuration and writes it into the
// output directory, so any artifact can be reproduced from the directory
// alone. Exit codes: 0 success, 2 usage error, 3 runtime failure.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ietnet/dataset.hpp"
#include "ietnet/evalx.hpp"
#include "ietnet/metrics.hpp"
#include "ietnet/serialize.hpp"
#include "ietnet/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ietnet;

// ---------------------------------------------------------------------------
// Small file and formatting helpers
// ---------------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os.good()) throw std::runtime_error("cannot write " + path.string());
}

json load_json_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is.good()) throw std::invalid_argument("cannot open config file " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + std::string(e.what()));
    }
}

// Shortest float-ish decimal form that still round-trips float32 exactly,
// so CSV consumers can recompute aggregates bit-for-bit.
std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string safe_name(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run configuration: defaults < config file < flags
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string split = "test";
    std::string threshold = "auto";  // "auto" = Youden optimum on the validation split
    std::string ap_norm = "clipped";  // "clipped" | "full" ground-truth-count denominator
};

struct RunConfig {
    NBodyDatasetConfig data;
    IETNetConfig model;
    TrainConfig train;
    EvalOptions eval;
    // Model channels/classes normally come from the dataset; an explicit
    // value (flag or config file) is honored but must agree with it.
    bool channels_pinned = false;
    bool classes_pinned = false;
};

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) {
            throw std::invalid_argument(std::string(what) + ": unknown key '" + it.key() + "'");
        }
    }
}

json sim_config_to_json(const NBodyConfig& s) {
    return {{"g", s.G},
            {"steps", s.steps},
            {"dt", s.dt},
            {"substeps", s.substeps},
            {"softening", s.softening},
            {"init_range", s.init_range},
            {"resample_budget", s.resample_budget},
            {"energy_tol", s.energy_tol}};
}

void sim_config_from_json(NBodyConfig& s, const json& j) {
    reject_unknown(j,
                   {"g", "steps", "dt", "substeps", "softening", "init_range", "resample_budget",
                    "energy_tol"},
                   "sim config");
    if (j.contains("g")) s.G = j["g"].get<double>();
    if (j.contains("steps")) s.steps = j["steps"].get<std::int64_t>();
    if (j.contains("dt")) s.dt = j["dt"].get<double>();
    if (j.contains("substeps")) s.substeps = j["substeps"].get<std::int64_t>();
    if (j.contains("softening")) s.softening = j["softening"].get<double>();
    if (j.contains("init_range")) s.init_range = j["init_range"].get<double>();
    if (j.contains("resample_budget")) s.resample_budget = j["resample_budget"].get<std::int64_t>();
    if (j.contains("energy_tol")) s.energy_tol = j["energy_tol"].get<double>();
}

json data_config_to_json(const NBodyDatasetConfig& d) {
    return {{"n_train", d.n_train},
            {"n_val", d.n_val},
            {"n_test", d.n_test},
            {"seed", d.seed},
            {"normalize", d.normalize},
            {"masses_2body", d.masses_2body},
            {"masses_4body", d.masses_4body},
            {"sim", sim_config_to_json(d.sim)}};
}

void data_config_from_json(NBodyDatasetConfig& d, const json& j) {
    reject_unknown(j,
                   {"n_train", "n_val", "n_test", "seed", "normalize", "masses_2body",
                    "masses_4body", "sim"},
                   "data config");
    if (j.contains("n_train")) d.n_train = j["n_train"].get<std::int64_t>();
    if (j.contains("n_val")) d.n_val = j["n_val"].get<std::int64_t>();
    if (j.contains("n_test")) d.n_test = j["n_test"].get<std::int64_t>();
    if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("normalize")) d.normalize = j["normalize"].get<bool>();
    if (j.contains("masses_2body")) d.masses_2body = j["masses_2body"].get<std::vector<double>>();
    if (j.contains("masses_4body")) d.masses_4body = j["masses_4body"].get<std::vector<double>>();
    if (j.contains("sim")) sim_config_from_json(d.sim, j["sim"]);
}

json eval_options_to_json(const EvalOptions& e) {
    return {{"split", e.split}, {"threshold", e.threshold}, {"ap_norm", e.ap_norm}};
}

void eval_options_from_json(EvalOptions& e, const json& j) {
    reject_unknown(j, {"split", "threshold", "ap_norm"}, "eval config");
    if (j.contains("split")) e.split = j["split"].get<std::string>();
    if (j.contains("threshold")) e.threshold = j["threshold"].get<std::string>();
    if (j.contains("ap_norm")) e.ap_norm = j["ap_norm"].get<std::string>();
}

/// The config file is one JSON object with optional "data", "model",
/// "train", and "eval" sections. Flags parsed afterwards win.
void apply_config_file(RunConfig& rc, const std::string& path) {
    const json j = load_json_file(path);
    reject_unknown(j, {"data", "model", "train", "eval"}, "config file");
    if (j.contains("data")) data_config_from_json(rc.data, j["data"]);
    if (j.contains("model")) {
        rc.channels_pinned = rc.channels_pinned || j["model"].contains("channels");
        rc.classes_pinned = rc.classes_pinned || j["model"].contains("classes");
        rc.model = model_config_from_json(j["model"]);
    }
    if (j.contains("train")) rc.train = train_config_from_json(j["train"]);
    if (j.contains("eval")) eval_options_from_json(rc.eval, j["eval"]);
}

/// The config file must be applied before flag parsing, so it is located
/// with a plain scan instead of waiting for the option parser.
std::string find_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

void echo_resolved(const json& resolved, const fs::path& out_dir) {
    const std::string text = resolved.dump(2) + "\n";
    std::printf("resolved config:\n%s", text.c_str());
    std::fflush(stdout);
    fs::create_directories(out_dir);
    write_text(out_dir / "resolved_config.json", text);
}

// ---------------------------------------------------------------------------
// Flag registration shared between subcommands
// ---------------------------------------------------------------------------

void add_config_flag(CLI::App* cmd, std::string& path) {
    cmd->add_option("--config", path, "JSON config file; flags take precedence over it");
}

void add_data_flags(CLI::App* cmd, NBodyDatasetConfig& d) {
    cmd->add_option("--seed", d.seed, "dataset seed");
    cmd->add_option("--train", d.n_train, "training samples");
    cmd->add_option("--val", d.n_val, "validation samples");
    cmd->add_option("--test", d.n_test, "test samples");
    cmd->add_flag("--normalize,!--no-normalize", d.normalize,
                  "z-score channels by training-split statistics");
    cmd->add_option("--masses-2body", d.masses_2body, "masses for the 2-body runs")
        ->delimiter(',');
    cmd->add_option("--masses-4body", d.masses_4body, "masses for the 4-body runs")
        ->delimiter(',');
    cmd->add_option("--steps", d.sim.steps, "recorded steps per run");
    cmd->add_option("--dt", d.sim.dt, "time between recorded steps");
    cmd->add_option("--substeps", d.sim.substeps, "integrator sub-steps per recorded step");
    cmd->add_option("--softening", d.sim.softening, "Plummer softening length");
    cmd->add_option("--g", d.sim.G, "gravitational constant");
    cmd->add_option("--init-range", d.sim.init_range, "half-width of the initial-condition box");
    cmd->add_option("--energy-tol", d.sim.energy_tol, "relative energy-drift tolerance");
    cmd->add_option("--resample-budget", d.sim.resample_budget,
                    "initial-condition draws before giving up");
}

void add_model_flags(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--channels", rc.model.channels, "input channels (default: from the dataset)")
        ->each([&rc](const std::string&) { rc.channels_pinned = true; });
    cmd->add_option("--classes", rc.model.classes, "output classes (default: from the dataset)")
        ->each([&rc](const std::string&) { rc.classes_pinned = true; });
    cmd->add_option("--filters", rc.model.tcn_filters, "convolution filters per layer");
    cmd->add_option("--kernel", rc.model.kernel_size, "convolution kernel size");
    cmd->add_option("--dilations", rc.model.dilations, "comma-separated dilation stack")
        ->delimiter(',');
    cmd->add_option("--d-model", rc.model.d_model, "attention width (must equal --filters)");
    cmd->add_option("--heads", rc.model.heads, "attention heads");
    cmd->add_option("--dropout", rc.model.dropout, "dropout rate during training");
    cmd->add_option("--ln-eps", rc.model.ln_eps, "layer-norm epsilon");
}

void add_train_flags(CLI::App* cmd, TrainConfig& t) {
    cmd->add_option("--epochs", t.epochs, "maximum training epochs");
    cmd->add_option("--batch", t.batch_size, "optimizer batch size");
    cmd->add_option("--micro-batch", t.micro_batch, "examples per forward/backward pass");
    cmd->add_option("--patience", t.patience,
                    "epochs without validation improvement before stopping");
    cmd->add_option("--lr-min", t.lr.lr_min, "learning-rate floor");
    cmd->add_option("--lr-max", t.lr.lr_max, "learning-rate peak");
    cmd->add_option("--warmup", t.lr.warmup, "optimizer steps to reach the peak rate");
    cmd->add_option("--restart-every", t.lr.restart_every,
                    "steps per warm-restart cycle (0 disables restarts)");
    cmd->add_option("--seed", t.seed, "weight-init and shuffling seed");
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces
// ---------------------------------------------------------------------------

struct SplitView {
    std::vector<std::size_t> idx;
    Tensor<float> x;
    std::vector<int> y;
};

SplitView take_split(const MVTSDataset& d, const std::string& split) {
    SplitView v;
    v.idx = d.indices_of(split);
    if (v.idx.empty()) throw std::invalid_argument("split '" + split + "' has no samples");
    v.x = d.rows_of(v.idx);
    v.y = d.labels_of(v.idx);
    return v;
}

std::vector<double> positive_scores(const Tensor<float>& probs) {
    const std::int64_t n = probs.shape[0], k = probs.shape[1];
    std::vector<double> s(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = probs[i * k + 1];
    return s;
}

void print_dataset_summary(const MVTSDataset& d) {
    const std::int64_t N = d.X.shape[0], C = d.X.shape[1], T = d.X.shape[2];
    const int K = static_cast<int>(d.class_names.size());
    std::printf("samples %" PRId64 "  (%" PRId64 " channels x %" PRId64 " steps)\n", N, C, T);
    for (const char* split : {"train", "val", "test"}) {
        std::vector<std::int64_t> per_class(static_cast<std::size_t>(K), 0);
        std::int64_t total = 0;
        for (std::int64_t i = 0; i < N; ++i) {
            if (d.split[static_cast<std::size_t>(i)] == split) {
                ++per_class[static_cast<std::size_t>(d.y[static_cast<std::size_t>(i)])];
                ++total;
            }
        }
        std::printf("  %-5s %" PRId64 "  (", split, total);
        for (int k = 0; k < K; ++k) {
            std::printf("%s%s %" PRId64, k ? ", " : "", d.class_names[static_cast<std::size_t>(k)].c_str(),
                        per_class[static_cast<std::size_t>(k)]);
        }
        std::printf(")\n");
    }
    for (const auto& [cls, chans] : d.ground_truth) {
        std::printf("ground truth %s:", d.class_names[static_cast<std::size_t>(cls)].c_str());
        for (int c : chans) std::printf(" %s", d.channel_names[static_cast<std::size_t>(c)].c_str());
        std::printf("\n");
    }
    std::printf("normalization: %s\n",
                d.norm_mean.empty() ? "none" : "per-channel z-score from the training split");
}

void resolve_model_shape(RunConfig& rc, const MVTSDataset& d) {
    const std::int64_t C = d.X.shape[1];
    const std::int64_t K = static_cast<std::int64_t>(d.class_names.size());
    if (rc.channels_pinned && rc.model.channels != C) {
        throw std::invalid_argument("--channels " + std::to_string(rc.model.channels) +
                                    " does not match the dataset's " + std::to_string(C) +
                                    " channels");
    }
    if (rc.classes_pinned && rc.model.classes != K) {
        throw std::invalid_argument("--classes " + std::to_string(rc.model.classes) +
                                    " does not match the dataset's " + std::to_string(K) +
                                    " classes");
    }
    rc.model.channels = C;
    rc.model.classes = K;
}

/// Trains on the dataset's train/val splits, streaming one JSON record per
/// epoch to <out>/train_log.jsonl and saving the best-validation-loss
/// checkpoint to <out>/model.ckpt.
FitResult train_into_dir(const IETNetConfig& mcfg, const TrainConfig& tcfg, const MVTSDataset& d,
                         const fs::path& out) {
    const SplitView tr = take_split(d, "train");
    const SplitView va = take_split(d, "val");
    {
        const NamedParams<float> probe = init_params<float>(mcfg, tcfg.seed);
        std::printf("parameters: %" PRId64 " (reference implementation: 27,648)\n",
                    probe.total_size());
        std::fflush(stdout);
    }

    std::ofstream log(out / "train_log.jsonl", std::ios::binary);
    if (!log.good()) throw std::runtime_error("cannot write " + (out / "train_log.jsonl").string());
    FitResult fr = fit(mcfg, tcfg, tr.x, tr.y, va.x, va.y, [&](const EpochStats& s) {
        const json rec{{"epoch", s.epoch},           {"step", s.step},
                       {"lr", s.lr},                 {"train_loss", s.train_loss},
                       {"val_loss", s.val_loss},     {"val_auc", s.val_auc}};
        log << rec.dump() << "\n";
        log.flush();
        std::printf("epoch %3" PRId64 "  step %5" PRId64 "  lr %.2e  train %.4f  val %.4f  auc %.4f\n",
                    s.epoch, s.step, s.lr, s.train_loss, s.val_loss, s.val_auc);
        std::fflush(stdout);
    });
    if (!log.good()) throw std::runtime_error("training log write failed");

    Checkpoint ck;
    ck.model = mcfg;
    ck.params = fr.best_params;
    ck.opt = fr.best_opt;
    ck.best_epoch = fr.best_epoch;
    ck.val_loss = fr.best_val_loss;
    for (const EpochStats& s : fr.history) {
        if (s.epoch == fr.best_epoch) ck.val_auc = s.val_auc;
    }
    ck.seed = tcfg.seed;
    save_checkpoint((out / "model.ckpt").string(), ck);
    std::printf("stopped: %s (best epoch %" PRId64 ", val loss %.6f)\n", fr.stop_reason.c_str(),
                fr.best_epoch, fr.best_val_loss);
    return fr;
}

double parse_threshold(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw std::invalid_argument("--threshold must be 'auto' or a number, got '" + s + "'");
    }
    return v;
}

struct EvalResult {
    json report;
    std::vector<int> predicted;
    RocCurve roc;  // populated for binary datasets only
    GateHeatmap heatmap;
    bool binary = false;
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Full evaluation of a checkpoint on one split: threshold selection,
/// confusion counts, ROC, the AP@k table, and per-predicted-class gate
/// heatmaps, assembled into one report object.
EvalResult evaluate(const Checkpoint& ck, const MVTSDataset& d, const EvalOptions& opt) {
    if (ck.model.channels != d.X.shape[1]) {
        throw std::invalid_argument("checkpoint expects " + std::to_string(ck.model.channels) +
                                    " channels but the dataset has " +
                                    std::to_string(d.X.shape[1]));
    }
    if (opt.ap_norm != "clipped" && opt.ap_norm != "full") {
        throw std::invalid_argument("--ap-norm must be 'clipped' or 'full', got '" + opt.ap_norm +
                                    "'");
    }
    const int K = static_cast<int>(d.class_names.size());
    const SplitView ev = take_split(d, opt.split);
    const EvalOutputs eo = run_eval(ck.model, ck.params, ev.x, 4);

    EvalResult r;
    r.binary = K == 2;
    std::vector<std::string> warnings;
    json& report = r.report;
    report["format"] = "ietnet-eval-report";
    report["version"] = 1;
    report["split"] = opt.split;
    report["samples"] = static_cast<std::int64_t>(ev.idx.size());
    report["classes"] = d.class_names;
    report["channels"] = d.channel_names;

    if (r.binary) {
        double thr = 0.0;
        if (opt.threshold == "auto") {
            const SplitView va = take_split(d, "val");
            const EvalOutputs vo = run_eval(ck.model, ck.params, va.x, 4);
            thr = youden_threshold(positive_scores(vo.probs), va.y);
        } else {
            thr = parse_threshold(opt.threshold);
        }
        const std::vector<double> scores = positive_scores(eo.probs);
        const Confusion c = confusion_at(scores, ev.y, thr);
        r.roc = roc_curve(scores, ev.y);
        r.predicted.resize(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) r.predicted[i] = scores[i] >= thr;

        report["threshold"] = {{"mode", opt.threshold == "auto" ? "auto" : "fixed"},
                               {"value", thr}};
        report["auc"] = finite_or_null(r.roc.auc);
        report["accuracy"] = c.accuracy();
        report["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
        json points = json::array();
        for (std::size_t i = 0; i < r.roc.thresholds.size(); ++i) {
            points.push_back({{"threshold", finite_or_null(r.roc.thresholds[i])},
                              {"fpr", r.roc.fpr[i]},
                              {"tpr", r.roc.tpr[i]}});
        }
        report["roc"] = points;
    } else {
        if (opt.threshold != "auto") {
            throw std::invalid_argument("--threshold requires a binary dataset");
        }
        r.predicted = predict_labels(eo.probs);
        std::int64_t hits = 0;
        for (std::size_t i = 0; i < r.predicted.size(); ++i) hits += r.predicted[i] == ev.y[i];
        report["threshold"] = nullptr;
        report["auc"] = finite_or_null(macro_auc(eo.probs, ev.y));
        report["accuracy"] = static_cast<double>(hits) / static_cast<double>(r.predicted.size());
        report["confusion"] = nullptr;
        report["roc"] = nullptr;
        warnings.push_back("threshold analysis requires a binary dataset; using argmax predictions");
    }

    report["confusion_matrix"] = confusion_matrix(ev.y, r.predicted, K);

    if (d.ground_truth.empty()) {
        report["ap"] = nullptr;
        warnings.push_back("dataset declares no ground-truth channels; AP table disabled");
    } else {
        try {
            const APReport ap = map_at_k_report(eo.gate, r.predicted, d.ground_truth,
                                                opt.ap_norm == "clipped");
            report["ap"] = {{"norm", opt.ap_norm}, {"ks", ap.ks},
                            {"mean", ap.mean},     {"stddev", ap.stddev},
                            {"counts", ap.counts}, {"samples", ap.samples}};
        } catch (const std::exception& e) {
            report["ap"] = nullptr;
            warnings.push_back(e.what());
        }
    }

    r.heatmap = aggregate_gate(eo.gate, r.predicted, K);
    json hm = json::array();
    for (std::size_t row = 0; row < r.heatmap.classes.size(); ++row) {
        const int cls = r.heatmap.classes[row];
        hm.push_back({{"class", cls},
                      {"class_name", d.class_names[static_cast<std::size_t>(cls)]},
                      {"count", r.heatmap.group_sizes[row]},
                      {"mean_gate", r.heatmap.mean_gate[row]}});
    }
    report["heatmaps"] = hm;
    for (int cls : r.heatmap.empty_classes) {
        warnings.push_back("no sample was predicted as class '" +
                           d.class_names[static_cast<std::size_t>(cls)] + "'");
    }
    report["warnings"] = warnings;
    return r;
}

/// Writes report.json (or the explicit --report path), roc.csv for binary
/// datasets, and heatmap.csv next to it.
void write_eval_files(const EvalResult& r, const MVTSDataset& d, const fs::path& out,
                      const fs::path& report_path) {
    fs::create_directories(out);
    write_text(report_path, r.report.dump(2) + "\n");
    if (r.binary) {
        std::string csv = "threshold,fpr,tpr\n";
        for (std::size_t i = 0; i < r.roc.thresholds.size(); ++i) {
            csv += fmt_g(r.roc.thresholds[i]) + "," + fmt_g(r.roc.fpr[i]) + "," +
                   fmt_g(r.roc.tpr[i]) + "\n";
        }
        write_text(out / "roc.csv", csv);
    }
    std::string hm = "class,channel,mean_gate\n";
    for (std::size_t row = 0; row < r.heatmap.classes.size(); ++row) {
        const std::string& cls = d.class_names[static_cast<std::size_t>(r.heatmap.classes[row])];
        for (std::size_t c = 0; c < r.heatmap.mean_gate[row].size(); ++c) {
            hm += cls + "," + d.channel_names[c] + "," + fmt_g(r.heatmap.mean_gate[row][c]) + "\n";
        }
    }
    write_text(out / "heatmap.csv", hm);
}

void print_eval_summary(const EvalResult& r, const MVTSDataset& d) {
    const json& rep = r.report;
    std::printf("split %s: %" PRId64 " samples\n", rep["split"].get<std::string>().c_str(),
                rep["samples"].get<std::int64_t>());
    if (!rep["threshold"].is_null()) {
        std::printf("threshold %.6g (%s)\n", rep["threshold"]["value"].get<double>(),
                    rep["threshold"]["mode"].get<std::string>().c_str());
    }
    std::printf("accuracy %.4f", rep["accuracy"].get<double>());
    if (!rep["auc"].is_null()) std::printf("  auc %.4f", rep["auc"].get<double>());
    std::printf("\n");
    if (!rep["ap"].is_null()) {
        std::printf("AP@k (%s):", rep["ap"]["norm"].get<std::string>().c_str());
        const auto& ks = rep["ap"]["ks"];
        const auto& mean = rep["ap"]["mean"];
        for (std::size_t i = 0; i < ks.size(); ++i) {
            std::printf("  k=%" PRId64 " %.4f", ks[i].get<std::int64_t>(), mean[i].get<double>());
        }
        std::printf("\n");
    }
    for (std::size_t row = 0; row < r.heatmap.classes.size(); ++row) {
        const int cls = r.heatmap.classes[row];
        std::printf("gate for predicted %s (n=%" PRId64 "):",
                    d.class_names[static_cast<std::size_t>(cls)].c_str(),
                    r.heatmap.group_sizes[row]);
        for (std::size_t c = 0; c < r.heatmap.mean_gate[row].size(); ++c) {
            std::printf(" %s %.3f", d.channel_names[c].c_str(), r.heatmap.mean_gate[row][c]);
        }
        std::printf("\n");
    }
    for (const auto& w : rep["warnings"]) {
        std::printf("warning: %s\n", w.get<std::string>().c_str());
    }
}

/// Channel names ordered by descending mean gate, one ranking per emitted
/// heatmap row, keyed by class name.
std::map<std::string, std::vector<std::string>> rankings_of(const GateHeatmap& h,
                                                            const MVTSDataset& d) {
    std::map<std::string, std::vector<std::string>> out;
    for (std::size_t row = 0; row < h.classes.size(); ++row) {
        const std::vector<double>& g = h.mean_gate[row];
        std::vector<std::size_t> order(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&g](std::size_t a, std::size_t b) { return g[a] > g[b]; });
        std::vector<std::string> names;
        names.reserve(order.size());
        for (std::size_t i : order) names.push_back(d.channel_names[i]);
        out[d.class_names[static_cast<std::size_t>(h.classes[row])]] = std::move(names);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct Args {
    std::string out, data, model, csv, sidecar, report, baseline, config;
    std::vector<std::string> drop;
    std::int64_t instance = -1;
    bool import_normalize = false;
};

int run_gen(RunConfig& rc, const Args& a) {
    json resolved{{"command", "gen-nbody"}, {"data", data_config_to_json(rc.data)}};
    echo_resolved(resolved, a.out);
    const MVTSDataset d = build_nbody_dataset(rc.data);
    save_dataset(d, a.out);
    std::printf("wrote dataset to %s\n", a.out.c_str());
    print_dataset_summary(d);
    return 0;
}

int run_import(const Args& a) {
    json resolved{{"command", "import-csv"},
                  {"csv", a.csv},
                  {"sidecar", a.sidecar},
                  {"normalize", a.import_normalize}};
    echo_resolved(resolved, a.out);
    const MVTSDataset d = import_csv(a.csv, a.sidecar, a.import_normalize);
    save_dataset(d, a.out);
    std::printf("wrote dataset to %s\n", a.out.c_str());
    print_dataset_summary(d);
    return 0;
}

int run_train(RunConfig& rc, const Args& a) {
    const MVTSDataset d = load_dataset(a.data);
    resolve_model_shape(rc, d);
    rc.model.validate();
    json resolved{{"command", "train"},
                  {"data", a.data},
                  {"model", model_config_to_json(rc.model)},
                  {"train", train_config_to_json(rc.train)}};
    echo_resolved(resolved, a.out);
    const FitResult fr = train_into_dir(rc.model, rc.train, d, a.out);
    if (fr.stop_reason == "diverged") {
        std::fprintf(stderr,
                     "error: training diverged (non-finite loss); the best weights so far (epoch "
                     "%" PRId64 ") were kept in the checkpoint\n",
                     fr.best_epoch);
        return 3;
    }
    return 0;
}

int run_eval(RunConfig& rc, Args& a) {
    if (a.out.empty() && a.report.empty()) {
        throw std::invalid_argument("eval needs --out or --report to know where to write");
    }
    if (a.out.empty()) a.out = fs::path(a.report).parent_path().string();
    if (a.out.empty()) a.out = ".";
    if (a.report.empty()) a.report = (fs::path(a.out) / "report.json").string();
    json resolved{{"command", "eval"},
                  {"model", a.model},
                  {"data", a.data},
                  {"eval", eval_options_to_json(rc.eval)}};
    echo_resolved(resolved, a.out);
    const Checkpoint ck = load_checkpoint(a.model);
    const MVTSDataset d = load_dataset(a.data);
    const EvalResult r = evaluate(ck, d, rc.eval);
    write_eval_files(r, d, a.out, a.report);
    print_eval_summary(r, d);
    std::printf("wrote %s\n", a.report.c_str());
    return 0;
}

int run_explain(RunConfig& rc, const Args& a) {
    json resolved{{"command", "explain"},
                  {"model", a.model},
                  {"data", a.data},
                  {"split", rc.eval.split},
                  {"instance", a.instance}};
    echo_resolved(resolved, a.out);
    const Checkpoint ck = load_checkpoint(a.model);
    const MVTSDataset d = load_dataset(a.data);
    if (ck.model.channels != d.X.shape[1]) {
        throw std::invalid_argument("checkpoint expects " + std::to_string(ck.model.channels) +
                                    " channels but the dataset has " +
                                    std::to_string(d.X.shape[1]));
    }
    const SplitView ev = take_split(d, rc.eval.split);
    const std::int64_t n = static_cast<std::int64_t>(ev.idx.size());
    if (a.instance >= 0 && a.instance >= n) {
        throw std::invalid_argument("unknown instance id " + std::to_string(a.instance) +
                                    " (split '" + rc.eval.split + "' has " + std::to_string(n) +
                                    " samples)");
    }
    const EvalOutputs eo = run_eval(ck.model, ck.params, ev.x, 4);
    const std::vector<int> predicted = predict_labels(eo.probs);
    const std::int64_t C = d.X.shape[1];
    const int K = static_cast<int>(d.class_names.size());

    const std::int64_t first = a.instance >= 0 ? a.instance : 0;
    const std::int64_t last = a.instance >= 0 ? a.instance + 1 : n;
    for (std::int64_t i = first; i < last; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        std::string csv = "# instance " + std::to_string(i) + "  split " + rc.eval.split +
                          "  true " + d.class_names[static_cast<std::size_t>(ev.y[si])] +
                          "  predicted " +
                          d.class_names[static_cast<std::size_t>(predicted[si])] + "\n";
        csv += "channel";
        for (const auto& name : d.class_names) csv += "," + name;
        csv += "\n";
        for (std::int64_t c = 0; c < C; ++c) {
            csv += d.channel_names[static_cast<std::size_t>(c)];
            for (int k = 0; k < K; ++k) csv += "," + fmt_g(eo.gate[(i * C + c) * K + k]);
            csv += "\n";
        }
        char name[40];
        std::snprintf(name, sizeof(name), "instance_%05" PRId64 ".csv", i);
        write_text(fs::path(a.out) / name, csv);
    }

    if (a.instance < 0) {
        const GateHeatmap h = aggregate_gate(eo.gate, predicted, K);
        for (std::size_t row = 0; row < h.classes.size(); ++row) {
            const std::string& cls = d.class_names[static_cast<std::size_t>(h.classes[row])];
            std::string csv = "# predicted " + cls + "  count " +
                              std::to_string(h.group_sizes[row]) + "\n";
            csv += "channel,mean_gate\n";
            for (std::size_t c = 0; c < h.mean_gate[row].size(); ++c) {
                csv += d.channel_names[c] + "," + fmt_g(h.mean_gate[row][c]) + "\n";
            }
            write_text(fs::path(a.out) / ("aggregate_" + safe_name(cls) + ".csv"), csv);
        }
        for (int cls : h.empty_classes) {
            std::printf("warning: no sample was predicted as class '%s'; no aggregate written\n",
                        d.class_names[static_cast<std::size_t>(cls)].c_str());
        }
        std::printf("wrote %" PRId64 " instance files and %zu aggregates to %s\n", n,
                    h.classes.size(), a.out.c_str());
    } else {
        std::printf("wrote instance %" PRId64 " to %s\n", a.instance, a.out.c_str());
    }
    return 0;
}

int run_ablate(RunConfig& rc, const Args& a) {
    const MVTSDataset original = load_dataset(a.data);
    const MVTSDataset dropped = drop_channels(original, a.drop);

    std::vector<std::string> gt_lost;
    for (const auto& [cls, chans] : original.ground_truth) {
        const auto it = dropped.ground_truth.find(cls);
        if (!chans.empty() && (it == dropped.ground_truth.end() || it->second.empty())) {
            gt_lost.push_back(original.class_names[static_cast<std::size_t>(cls)]);
        }
    }
    for (const auto& cls : gt_lost) {
        std::printf("warning: every ground-truth channel for class '%s' was dropped\n",
                    cls.c_str());
    }

    resolve_model_shape(rc, dropped);
    rc.model.validate();
    json resolved{{"command", "ablate"},
                  {"data", a.data},
                  {"drop", a.drop},
                  {"baseline", a.baseline.empty() ? json(nullptr) : json(a.baseline)},
                  {"model", model_config_to_json(rc.model)},
                  {"train", train_config_to_json(rc.train)},
                  {"eval", eval_options_to_json(rc.eval)}};
    echo_resolved(resolved, a.out);

    const FitResult fr = train_into_dir(rc.model, rc.train, dropped, a.out);
    if (fr.stop_reason == "diverged") {
        std::fprintf(stderr,
                     "error: training diverged (non-finite loss); the best weights so far (epoch "
                     "%" PRId64 ") were kept in the checkpoint\n",
                     fr.best_epoch);
        return 3;
    }

    Checkpoint ck;
    ck.model = rc.model;
    ck.params = fr.best_params;
    ck.opt = fr.best_opt;
    ck.best_epoch = fr.best_epoch;
    ck.val_loss = fr.best_val_loss;
    ck.seed = rc.train.seed;
    const EvalResult ablated = evaluate(ck, dropped, rc.eval);
    write_eval_files(ablated, dropped, a.out, fs::path(a.out) / "report.json");
    print_eval_summary(ablated, dropped);

    json gt_after = json::object();
    for (const auto& [cls, chans] : dropped.ground_truth) {
        std::vector<std::string> names;
        for (int c : chans) names.push_back(dropped.channel_names[static_cast<std::size_t>(c)]);
        gt_after[dropped.class_names[static_cast<std::size_t>(cls)]] = names;
    }
    json report{{"format", "ietnet-ablation-report"},
                {"version", 1},
                {"dropped", a.drop},
                {"remaining", dropped.channel_names},
                {"ground_truth_after", gt_after},
                {"ground_truth_dropped_entirely", gt_lost},
                {"ablated",
                 {{"accuracy", ablated.report["accuracy"]},
                  {"auc", ablated.report["auc"]},
                  {"rankings", rankings_of(ablated.heatmap, dropped)}}},
                {"baseline", nullptr}};

    if (!a.baseline.empty()) {
        const Checkpoint base = load_checkpoint(a.baseline);
        const EvalResult br = evaluate(base, original, rc.eval);
        report["baseline"] = {{"checkpoint", a.baseline},
                              {"accuracy", br.report["accuracy"]},
                              {"auc", br.report["auc"]},
                              {"rankings", rankings_of(br.heatmap, original)}};
        for (const auto& [cls, after] : report["ablated"]["rankings"].items()) {
            std::printf("ranking %s:", cls.c_str());
            if (report["baseline"]["rankings"].contains(cls)) {
                std::printf(" baseline");
                for (const auto& ch : report["baseline"]["rankings"][cls]) {
                    std::printf(" %s", ch.get<std::string>().c_str());
                }
                std::printf("  ->");
            }
            for (const auto& ch : after) std::printf(" %s", ch.get<std::string>().c_str());
            std::printf("\n");
        }
    }
    write_text(fs::path(a.out) / "ablation_report.json", report.dump(2) + "\n");
    std::printf("wrote %s\n", (fs::path(a.out) / "ablation_report.json").string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

void check_thread_env() {
    const char* v = std::getenv("IETNET_THREADS");
    if (v == nullptr) return;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*v == '\0' || *end != '\0' || n <= 0) {
        throw std::invalid_argument("IETNET_THREADS must be a positive integer, got '" +
                                    std::string(v) + "'");
    }
    if (n != 1) {
        std::fprintf(stderr, "note: this build computes on a single thread; IETNET_THREADS=%ld "
                             "has no effect\n",
                     n);
    }
}

int dispatch(int argc, char** argv) {
    check_thread_env();

    RunConfig rc;
    Args a;
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) apply_config_file(rc, config_path);

    CLI::App app{"time-series classifier with per-channel attribution"};
    app.require_subcommand(1);

    CLI::App* gen = app.add_subcommand("gen-nbody",
                                       "generate the two-class gravitational benchmark");
    gen->add_option("--out", a.out, "output dataset directory")->required();
    add_data_flags(gen, rc.data);
    add_config_flag(gen, a.config);

    CLI::App* imp = app.add_subcommand("import-csv",
                                       "convert a CSV + sidecar pair into a dataset directory");
    imp->add_option("--csv", a.csv, "CSV file of stacked samples")->required();
    imp->add_option("--sidecar", a.sidecar, "JSON sidecar with labels and splits")->required();
    imp->add_option("--out", a.out, "output dataset directory")->required();
    imp->add_flag("--normalize", a.import_normalize,
                  "z-score by the imported training split");
    add_config_flag(imp, a.config);

    CLI::App* trn = app.add_subcommand("train", "train a classifier on a dataset directory");
    trn->add_option("--data", a.data, "dataset directory")->required();
    trn->add_option("--out", a.out, "output directory for checkpoint and log")->required();
    add_model_flags(trn, rc);
    add_train_flags(trn, rc.train);
    add_config_flag(trn, a.config);

    CLI::App* evl = app.add_subcommand("eval", "evaluate a checkpoint and write a report");
    evl->add_option("--model", a.model, "checkpoint file")->required();
    evl->add_option("--data", a.data, "dataset directory")->required();
    evl->add_option("--split", rc.eval.split, "split to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}));
    evl->add_option("--threshold", rc.eval.threshold,
                    "'auto' (validation optimum) or a fixed score cutoff");
    evl->add_option("--ap-norm", rc.eval.ap_norm, "AP@k denominator: min(k, truth) or truth size")
        ->check(CLI::IsMember({"clipped", "full"}));
    evl->add_option("--report", a.report, "report JSON path (default <out>/report.json)");
    evl->add_option("--out", a.out, "output directory for CSV artifacts");
    add_config_flag(evl, a.config);

    CLI::App* exp = app.add_subcommand(
        "explain", "write per-instance channel gates and per-class aggregates");
    exp->add_option("--model", a.model, "checkpoint file")->required();
    exp->add_option("--data", a.data, "dataset directory")->required();
    exp->add_option("--out", a.out, "output directory")->required();
    exp->add_option("--split", rc.eval.split, "split to explain")
        ->check(CLI::IsMember({"train", "val", "test"}));
    exp->add_option("--instance", a.instance, "explain a single instance (index within the split)");
    add_config_flag(exp, a.config);

    CLI::App* abl = app.add_subcommand(
        "ablate", "drop channels, retrain, and contrast channel rankings");
    abl->add_option("--data", a.data, "dataset directory")->required();
    abl->add_option("--out", a.out, "output directory")->required();
    abl->add_option("--drop", a.drop, "comma-separated channel names to remove")->delimiter(',');
    abl->add_option("--baseline", a.baseline,
                    "checkpoint trained on the full dataset, for the before/after contrast");
    abl->add_option("--threshold", rc.eval.threshold,
                    "'auto' (validation optimum) or a fixed score cutoff");
    abl->add_option("--ap-norm", rc.eval.ap_norm, "AP@k denominator: min(k, truth) or truth size")
        ->check(CLI::IsMember({"clipped", "full"}));
    add_model_flags(abl, rc);
    add_train_flags(abl, rc.train);
    add_config_flag(abl, a.config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (gen->parsed()) return run_gen(rc, a);
    if (imp->parsed()) return run_import(a);
    if (trn->parsed()) return run_train(rc, a);
    if (evl->parsed()) return run_eval(rc, a);
    if (exp->parsed()) return run_explain(rc, a);
    return run_ablate(rc, a);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
