#include "ietnet/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ietnet/serialize.hpp"

namespace ietnet {

using nlohmann::json;

namespace {

const char* const kSplits[] = {"train", "val", "test"};

bool valid_split(const std::string& s) {
    for (const char* k : kSplits)
        if (s == k) return true;
    return false;
}

/// Copies one planar trajectory into interleaved channel layout: for the
/// body pair (a, b), writes [x_a, x_b, y_a, y_b] into channels
/// [base .. base+3] of sample row `out`.
void fill_pair_channels(float* out, std::int64_t T, std::int64_t base,
                        const Tensor<double>& pos, std::int64_t a, std::int64_t b) {
    const std::int64_t n = pos.shape[1];
    for (std::int64_t t = 0; t < T; ++t) {
        const double* row = pos.data.data() + (t * n) * 2;
        out[(base + 0) * T + t] = static_cast<float>(row[a * 2 + 0]);
        out[(base + 1) * T + t] = static_cast<float>(row[b * 2 + 0]);
        out[(base + 2) * T + t] = static_cast<float>(row[a * 2 + 1]);
        out[(base + 3) * T + t] = static_cast<float>(row[b * 2 + 1]);
    }
}

json ground_truth_to_json(const std::map<int, std::vector<int>>& gt) {
    json j = json::object();
    for (const auto& [cls, chans] : gt) j[std::to_string(cls)] = chans;
    return j;
}

std::map<int, std::vector<int>> ground_truth_from_json(const json& j, const std::string& what) {
    std::map<int, std::vector<int>> gt;
    if (!j.is_object()) throw std::runtime_error(what + ": ground_truth must be an object");
    for (const auto& [key, val] : j.items()) {
        int cls = 0;
        try {
            std::size_t used = 0;
            cls = std::stoi(key, &used);
            if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw std::runtime_error(what + ": ground_truth key '" + key + "' is not a class index");
        }
        gt[cls] = val.get<std::vector<int>>();
    }
    return gt;
}

std::string format_f32(float v) {
    char buf[32];
    // %.9g prints enough digits that strtof recovers the exact float32.
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

void MVTSDataset::validate() const {
    if (X.rank() != 3) throw std::invalid_argument("dataset: X must be (samples, channels, time), got " + shape_str(X.shape));
    const std::int64_t N = X.shape[0], C = X.shape[1];
    if (static_cast<std::int64_t>(y.size()) != N)
        throw std::invalid_argument("dataset: " + std::to_string(y.size()) + " labels for " + std::to_string(N) + " samples");
    if (static_cast<std::int64_t>(split.size()) != N)
        throw std::invalid_argument("dataset: " + std::to_string(split.size()) + " split tags for " + std::to_string(N) + " samples");
    if (static_cast<std::int64_t>(channel_names.size()) != C)
        throw std::invalid_argument("dataset: " + std::to_string(channel_names.size()) + " channel names for " + std::to_string(C) + " channels");
    const int K = static_cast<int>(class_names.size());
    if (K < 2) throw std::invalid_argument("dataset: need at least two class names");
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || y[i] >= K)
            throw std::invalid_argument("dataset: sample " + std::to_string(i) + " has label " + std::to_string(y[i]) + " outside [0, " + std::to_string(K) + ")");
        if (!valid_split(split[i]))
            throw std::invalid_argument("dataset: sample " + std::to_string(i) + " has unknown split '" + split[i] + "'");
    }
    for (const auto& [cls, chans] : ground_truth) {
        if (cls < 0 || cls >= K)
            throw std::invalid_argument("dataset: ground truth refers to class " + std::to_string(cls) + " outside [0, " + std::to_string(K) + ")");
        for (int c : chans)
            if (c < 0 || c >= C)
                throw std::invalid_argument("dataset: ground truth for class " + std::to_string(cls) + " refers to channel " + std::to_string(c) + " outside [0, " + std::to_string(C) + ")");
    }
    if (!norm_mean.empty() &&
        (static_cast<std::int64_t>(norm_mean.size()) != C || static_cast<std::int64_t>(norm_std.size()) != C))
        throw std::invalid_argument("dataset: normalization stats do not cover all channels");
}

std::vector<std::size_t> MVTSDataset::indices_of(const std::string& split_name) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == split_name) idx.push_back(i);
    return idx;
}

std::vector<int> MVTSDataset::labels_of(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(y.at(i));
    return out;
}

Tensor<float> MVTSDataset::rows_of(const std::vector<std::size_t>& idx) const {
    const std::int64_t C = X.shape[1], T = X.shape[2];
    Tensor<float> out({static_cast<std::int64_t>(idx.size()), C, T});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(X.data.data() + static_cast<std::int64_t>(idx[r]) * C * T, C * T,
                    out.data.data() + static_cast<std::int64_t>(r) * C * T);
    return out;
}

MVTSDataset build_nbody_dataset(const NBodyDatasetConfig& cfg) {
    if (cfg.n_train <= 0 || cfg.n_val <= 0 || cfg.n_test <= 0)
        throw std::invalid_argument("dataset: every split needs at least one sample");
    if (cfg.masses_2body.size() != 2 || cfg.masses_4body.size() != 4)
        throw std::invalid_argument("dataset: class recipes need 2 and 4 masses");

    const std::int64_t T = cfg.sim.steps;
    const std::int64_t N = cfg.n_train + cfg.n_val + cfg.n_test;

    MVTSDataset d;
    d.X = Tensor<float>({N, 8, T});
    d.y.resize(N);
    d.split.resize(N);
    d.channel_names = {"x1", "x2", "y1", "y2", "x3", "x4", "y3", "y4"};
    d.class_names = {"4body", "2body"};
    d.ground_truth[1] = {0, 1, 2, 3};

    // Splits are laid out as contiguous blocks; labels alternate within each
    // block starting at 0, so class 0 takes the extra sample when a block
    // has odd size.
    std::int64_t i = 0;
    const std::int64_t block_sizes[] = {cfg.n_train, cfg.n_val, cfg.n_test};
    for (int b = 0; b < 3; ++b)
        for (std::int64_t k = 0; k < block_sizes[b]; ++k, ++i) {
            d.split[i] = kSplits[b];
            d.y[i] = static_cast<int>(k % 2);
        }

    for (i = 0; i < N; ++i) {
        const std::uint64_t sample_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        float* out = d.X.data.data() + i * 8 * T;

        NBodyConfig run = cfg.sim;
        if (d.y[i] == 0) {
            // One 4-body system provides all eight channels.
            run.masses = cfg.masses_4body;
            run.seed = derive_seed(sample_seed, 0);
            const TrajectoryRecord rec = simulate_nbody(run);
            fill_pair_channels(out, T, 0, rec.positions, 0, 1);
            fill_pair_channels(out, T, 4, rec.positions, 2, 3);
        } else {
            // A 2-body system fills x1,x2,y1,y2; bodies 3 and 4 of an
            // independent 4-body system fill x3,x4,y3,y4, so only the first
            // four channels distinguish the class.
            run.masses = cfg.masses_2body;
            run.seed = derive_seed(sample_seed, 0);
            const TrajectoryRecord two = simulate_nbody(run);
            fill_pair_channels(out, T, 0, two.positions, 0, 1);

            run.masses = cfg.masses_4body;
            run.seed = derive_seed(sample_seed, 1);
            const TrajectoryRecord four = simulate_nbody(run);
            fill_pair_channels(out, T, 4, four.positions, 2, 3);
        }
    }

    if (cfg.normalize) normalize_by_train(d);
    d.validate();
    return d;
}

void normalize_by_train(MVTSDataset& d) {
    if (!d.norm_mean.empty()) throw std::invalid_argument("dataset: already normalized");
    const std::vector<std::size_t> train = d.indices_of("train");
    if (train.empty()) throw std::invalid_argument("dataset: cannot normalize without a training split");

    const std::int64_t C = d.X.shape[1], T = d.X.shape[2];
    d.norm_mean.assign(C, 0.0);
    d.norm_std.assign(C, 0.0);
    const double count = static_cast<double>(train.size()) * static_cast<double>(T);
    for (std::int64_t c = 0; c < C; ++c) {
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t i : train) {
            const float* row = d.X.data.data() + (static_cast<std::int64_t>(i) * C + c) * T;
            for (std::int64_t t = 0; t < T; ++t) {
                sum += row[t];
                sumsq += static_cast<double>(row[t]) * row[t];
            }
        }
        const double mean = sum / count;
        const double var = std::max(sumsq / count - mean * mean, 0.0);
        d.norm_mean[c] = mean;
        d.norm_std[c] = std::max(std::sqrt(var), 1e-8);
    }

    const std::int64_t N = d.X.shape[0];
    for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t c = 0; c < C; ++c) {
            float* row = d.X.data.data() + (i * C + c) * T;
            const float mean = static_cast<float>(d.norm_mean[c]);
            const float inv = static_cast<float>(1.0 / d.norm_std[c]);
            for (std::int64_t t = 0; t < T; ++t) row[t] = (row[t] - mean) * inv;
        }
}

MVTSDataset drop_channels(const MVTSDataset& d, const std::vector<std::string>& names) {
    d.validate();
    const std::int64_t C = d.X.shape[1];
    std::set<std::int64_t> dropped;
    for (const std::string& name : names) {
        const auto it = std::find(d.channel_names.begin(), d.channel_names.end(), name);
        if (it == d.channel_names.end()) {
            std::string valid;
            for (const std::string& n : d.channel_names) valid += (valid.empty() ? "" : ", ") + n;
            throw std::invalid_argument("dataset: no channel named '" + name + "' (channels: " + valid + ")");
        }
        dropped.insert(it - d.channel_names.begin());
    }
    if (static_cast<std::int64_t>(dropped.size()) == C)
        throw std::invalid_argument("dataset: cannot drop every channel");

    std::vector<std::int64_t> keep;
    std::vector<std::int64_t> new_index(C, -1);
    for (std::int64_t c = 0; c < C; ++c)
        if (!dropped.count(c)) {
            new_index[c] = static_cast<std::int64_t>(keep.size());
            keep.push_back(c);
        }

    MVTSDataset out;
    const std::int64_t N = d.X.shape[0], T = d.X.shape[2];
    out.X = Tensor<float>({N, static_cast<std::int64_t>(keep.size()), T});
    for (std::int64_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < keep.size(); ++k)
            std::copy_n(d.X.data.data() + (i * C + keep[k]) * T, T,
                        out.X.data.data() + (i * static_cast<std::int64_t>(keep.size()) + static_cast<std::int64_t>(k)) * T);
    out.y = d.y;
    out.split = d.split;
    out.class_names = d.class_names;
    for (std::int64_t c : keep) out.channel_names.push_back(d.channel_names[c]);
    if (!d.norm_mean.empty())
        for (std::int64_t c : keep) {
            out.norm_mean.push_back(d.norm_mean[c]);
            out.norm_std.push_back(d.norm_std[c]);
        }
    for (const auto& [cls, chans] : d.ground_truth) {
        std::vector<int> remapped;
        for (int c : chans)
            if (new_index[c] >= 0) remapped.push_back(static_cast<int>(new_index[c]));
        // A class whose every ground-truth channel was dropped simply has no
        // ground truth any more; keeping an empty entry would poison AP runs.
        if (!remapped.empty()) out.ground_truth[cls] = remapped;
    }
    out.validate();
    return out;
}

void save_dataset(const MVTSDataset& d, const std::string& dir) {
    d.validate();
    std::filesystem::create_directories(dir);

    json meta;
    meta["format"] = "ietnet-dataset";
    meta["version"] = 1;
    meta["shape"] = d.X.shape;
    meta["channels"] = d.channel_names;
    meta["classes"] = d.class_names;
    meta["labels"] = d.y;
    meta["splits"] = d.split;
    meta["ground_truth"] = ground_truth_to_json(d.ground_truth);
    if (d.norm_mean.empty())
        meta["normalization"] = nullptr;
    else
        meta["normalization"] = {{"mean", d.norm_mean}, {"std", d.norm_std}};

    const std::string meta_path = dir + "/meta.json";
    std::ofstream mf(meta_path);
    if (!mf) throw std::runtime_error("dataset: cannot write " + meta_path);
    mf << meta.dump(2) << "\n";
    if (!mf.flush()) throw std::runtime_error("dataset: failed writing " + meta_path);

    const std::string blob_path = dir + "/X.bin";
    std::ofstream bf(blob_path, std::ios::binary);
    if (!bf) throw std::runtime_error("dataset: cannot write " + blob_path);
    write_tensor(bf, d.X);
    if (!bf.flush()) throw std::runtime_error("dataset: failed writing " + blob_path);
}

MVTSDataset load_dataset(const std::string& dir) {
    const std::string meta_path = dir + "/meta.json";
    std::ifstream mf(meta_path);
    if (!mf)
        throw std::runtime_error("dataset: missing " + meta_path + " (expected a dataset directory with meta.json and X.bin)");
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: " + meta_path + " is not valid JSON: " + e.what());
    }
    if (meta.value("format", "") != "ietnet-dataset")
        throw std::runtime_error("dataset: " + meta_path + " is not an ietnet-dataset manifest");
    if (meta.value("version", 0) != 1)
        throw std::runtime_error("dataset: unsupported version " + meta["version"].dump() + " in " + meta_path);

    MVTSDataset d;
    try {
        d.channel_names = meta.at("channels").get<std::vector<std::string>>();
        d.class_names = meta.at("classes").get<std::vector<std::string>>();
        d.y = meta.at("labels").get<std::vector<int>>();
        d.split = meta.at("splits").get<std::vector<std::string>>();
        d.ground_truth = ground_truth_from_json(meta.at("ground_truth"), "dataset");
        if (!meta.at("normalization").is_null()) {
            d.norm_mean = meta["normalization"].at("mean").get<std::vector<double>>();
            d.norm_std = meta["normalization"].at("std").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: malformed " + meta_path + ": " + e.what());
    }

    const std::string blob_path = dir + "/X.bin";
    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) throw std::runtime_error("dataset: missing " + blob_path);
    d.X = read_tensor<float>(bf);

    const Shape declared = meta.at("shape").get<Shape>();
    if (declared != d.X.shape)
        throw std::runtime_error("dataset: meta.json declares shape " + shape_str(declared) + " but X.bin holds " + shape_str(d.X.shape));
    d.validate();
    return d;
}

void export_csv(const MVTSDataset& d, const std::string& csv_path, const std::string& sidecar_path) {
    d.validate();
    const std::int64_t N = d.X.shape[0], C = d.X.shape[1], T = d.X.shape[2];

    json side;
    side["format"] = "ietnet-csv";
    side["version"] = 1;
    side["channels"] = d.channel_names;
    side["classes"] = d.class_names;
    side["ground_truth"] = ground_truth_to_json(d.ground_truth);
    json samples = json::array();
    for (std::int64_t i = 0; i < N; ++i)
        samples.push_back({{"label", d.y[i]}, {"split", d.split[i]}, {"rows", T}});
    side["samples"] = samples;
    if (d.norm_mean.empty())
        side["normalization"] = nullptr;
    else
        side["normalization"] = {{"mean", d.norm_mean}, {"std", d.norm_std}};

    std::ofstream sf(sidecar_path);
    if (!sf) throw std::runtime_error("dataset: cannot write " + sidecar_path);
    sf << side.dump(2) << "\n";
    if (!sf.flush()) throw std::runtime_error("dataset: failed writing " + sidecar_path);

    std::ofstream cf(csv_path);
    if (!cf) throw std::runtime_error("dataset: cannot write " + csv_path);
    for (std::int64_t c = 0; c < C; ++c) cf << (c ? "," : "") << d.channel_names[c];
    cf << "\n";
    std::string line;
    for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t t = 0; t < T; ++t) {
            line.clear();
            for (std::int64_t c = 0; c < C; ++c) {
                if (c) line += ',';
                line += format_f32(d.X.data[(i * C + c) * T + t]);
            }
            line += '\n';
            cf << line;
        }
    if (!cf.flush()) throw std::runtime_error("dataset: failed writing " + csv_path);
}

MVTSDataset import_csv(const std::string& csv_path, const std::string& sidecar_path, bool normalize) {
    std::ifstream sf(sidecar_path);
    if (!sf) throw std::runtime_error("dataset: cannot open sidecar " + sidecar_path);
    json side;
    try {
        sf >> side;
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: " + sidecar_path + " is not valid JSON: " + e.what());
    }
    if (side.value("format", "") != "ietnet-csv")
        throw std::runtime_error("dataset: " + sidecar_path + " is not an ietnet-csv sidecar");
    if (side.value("version", 0) != 1)
        throw std::runtime_error("dataset: unsupported sidecar version " + side["version"].dump());

    MVTSDataset d;
    std::int64_t T = -1;
    try {
        d.channel_names = side.at("channels").get<std::vector<std::string>>();
        d.class_names = side.at("classes").get<std::vector<std::string>>();
        d.ground_truth = ground_truth_from_json(side.at("ground_truth"), "dataset");
        for (const json& s : side.at("samples")) {
            d.y.push_back(s.at("label").get<int>());
            d.split.push_back(s.at("split").get<std::string>());
            const std::int64_t rows = s.at("rows").get<std::int64_t>();
            if (rows <= 0)
                throw std::runtime_error("dataset: sample " + std::to_string(d.y.size() - 1) + " declares " + std::to_string(rows) + " rows");
            if (T < 0) T = rows;
            if (rows != T)
                throw std::runtime_error("dataset: sample " + std::to_string(d.y.size() - 1) + " has " + std::to_string(rows) + " rows but earlier samples have " + std::to_string(T));
        }
        if (!side.at("normalization").is_null()) {
            d.norm_mean = side["normalization"].at("mean").get<std::vector<double>>();
            d.norm_std = side["normalization"].at("std").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: malformed " + sidecar_path + ": " + e.what());
    }
    if (d.y.empty()) throw std::runtime_error("dataset: sidecar lists no samples");

    const std::int64_t N = static_cast<std::int64_t>(d.y.size());
    const std::int64_t C = static_cast<std::int64_t>(d.channel_names.size());

    std::ifstream cf(csv_path);
    if (!cf) throw std::runtime_error("dataset: cannot open " + csv_path);
    std::string line;
    if (!std::getline(cf, line)) throw std::runtime_error("dataset: " + csv_path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream header(line);
        std::string col;
        std::int64_t c = 0;
        while (std::getline(header, col, ',')) {
            if (c >= C || col != d.channel_names[c])
                throw std::runtime_error("dataset: csv header column " + std::to_string(c) + " is '" + col + "', sidecar expects '" + (c < C ? d.channel_names[c] : std::string("<nothing>")) + "'");
            ++c;
        }
        if (c != C)
            throw std::runtime_error("dataset: csv header has " + std::to_string(c) + " columns, sidecar declares " + std::to_string(C));
    }

    d.X = Tensor<float>({N, C, T});
    for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t t = 0; t < T; ++t) {
            if (!std::getline(cf, line))
                throw std::runtime_error("dataset: csv ends at sample " + std::to_string(i) + " row " + std::to_string(t) + " (expected " + std::to_string(T) + " rows per sample)");
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const char* p = line.c_str();
            for (std::int64_t c = 0; c < C; ++c) {
                char* end = nullptr;
                const float v = std::strtof(p, &end);
                if (end == p)
                    throw std::runtime_error("dataset: sample " + std::to_string(i) + " row " + std::to_string(t) + " column " + std::to_string(c) + ": cannot parse '" + std::string(p) + "'");
                p = end;
                if (c + 1 < C) {
                    if (*p != ',')
                        throw std::runtime_error("dataset: sample " + std::to_string(i) + " row " + std::to_string(t) + " has " + std::to_string(c + 1) + " fields, expected " + std::to_string(C));
                    ++p;
                }
                d.X.data[(i * C + c) * T + t] = v;
            }
            if (*p != '\0')
                throw std::runtime_error("dataset: sample " + std::to_string(i) + " row " + std::to_string(t) + " has trailing text '" + std::string(p) + "'");
        }
    while (std::getline(cf, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty())
            throw std::runtime_error("dataset: csv has rows beyond the " + std::to_string(N) + " samples declared by the sidecar");
    }

    if (normalize) {
        if (!d.norm_mean.empty())
            throw std::invalid_argument("dataset: csv is already normalized (sidecar has stats); import with normalize=false");
        normalize_by_train(d);
    }
    d.validate();
    return d;
}

}  // namespace ietnet
