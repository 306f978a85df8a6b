// Python bindings for the core operations: the simulator, dataset
// construction and persistence, training, evaluation, and the retrieval
// metrics. Tensors cross the boundary as numpy arrays (copied, C-order).

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ietnet/dataset.hpp"
#include "ietnet/evalx.hpp"
#include "ietnet/metrics.hpp"
#include "ietnet/serialize.hpp"
#include "ietnet/trainer.hpp"

namespace py = pybind11;
using namespace ietnet;

namespace {

template <typename T>
Tensor<T> tensor_from(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
    std::vector<T> data(a.data(), a.data() + a.size());
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
py::array_t<T> numpy_from(const Tensor<T>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<T> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

py::dict heatmap_dict(const GateHeatmap& h) {
    py::dict out;
    out["classes"] = h.classes;
    out["mean_gate"] = h.mean_gate;
    out["group_sizes"] = h.group_sizes;
    out["empty_classes"] = h.empty_classes;
    return out;
}

py::dict ap_report_dict(const APReport& r) {
    py::dict out;
    out["ks"] = r.ks;
    out["mean"] = r.mean;
    out["stddev"] = r.stddev;
    out["counts"] = r.counts;
    out["samples"] = r.samples;
    out["clip_norm"] = r.clip_norm;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Time-series classifier with per-channel attribution: simulator, "
              "datasets, training, and retrieval metrics.";

    // ---- configuration types -------------------------------------------
    py::class_<IETNetConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("channels", &IETNetConfig::channels)
        .def_readwrite("classes", &IETNetConfig::classes)
        .def_readwrite("tcn_filters", &IETNetConfig::tcn_filters)
        .def_readwrite("kernel_size", &IETNetConfig::kernel_size)
        .def_readwrite("dilations", &IETNetConfig::dilations)
        .def_readwrite("d_model", &IETNetConfig::d_model)
        .def_readwrite("heads", &IETNetConfig::heads)
        .def_readwrite("dropout", &IETNetConfig::dropout)
        .def_readwrite("ln_eps", &IETNetConfig::ln_eps)
        .def("validate", &IETNetConfig::validate)
        .def("receptive_field", &IETNetConfig::receptive_field)
        .def("param_count",
             [](const IETNetConfig& cfg) { return init_params<float>(cfg, 0).total_size(); },
             "Number of trainable parameters for this configuration.");

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("micro_batch", &TrainConfig::micro_batch)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_property(
            "lr_min", [](const TrainConfig& t) { return t.lr.lr_min; },
            [](TrainConfig& t, double v) { t.lr.lr_min = v; })
        .def_property(
            "lr_max", [](const TrainConfig& t) { return t.lr.lr_max; },
            [](TrainConfig& t, double v) { t.lr.lr_max = v; })
        .def_property(
            "warmup", [](const TrainConfig& t) { return t.lr.warmup; },
            [](TrainConfig& t, std::int64_t v) { t.lr.warmup = v; })
        .def_property(
            "restart_every", [](const TrainConfig& t) { return t.lr.restart_every; },
            [](TrainConfig& t, std::int64_t v) { t.lr.restart_every = v; });

    // ---- simulator ------------------------------------------------------
    m.def(
        "simulate_nbody",
        [](std::vector<double> masses, double g, std::int64_t steps, double dt,
           std::int64_t substeps, double softening, double init_range,
           std::vector<double> init_positions, std::vector<double> init_velocities,
           std::uint64_t seed, std::int64_t resample_budget, double energy_tol) {
            NBodyConfig cfg;
            cfg.masses = std::move(masses);
            cfg.G = g;
            cfg.steps = steps;
            cfg.dt = dt;
            cfg.substeps = substeps;
            cfg.softening = softening;
            cfg.init_range = init_range;
            cfg.init_positions = std::move(init_positions);
            cfg.init_velocities = std::move(init_velocities);
            cfg.seed = seed;
            cfg.resample_budget = resample_budget;
            cfg.energy_tol = energy_tol;
            const TrajectoryRecord rec = simulate_nbody(cfg);
            py::dict out;
            out["positions"] = numpy_from(rec.positions);
            out["velocities"] = numpy_from(rec.velocities);
            out["momentum_x"] = rec.momentum_x;
            out["momentum_y"] = rec.momentum_y;
            out["energy"] = rec.energy;
            out["attempts"] = rec.attempts;
            out["momentum_drift"] = rec.momentum_drift(cfg.masses);
            out["energy_drift"] = rec.energy_drift();
            return out;
        },
        py::arg("masses"), py::arg("g") = 1.0, py::arg("steps") = 2000, py::arg("dt") = 1e-3,
        py::arg("substeps") = 16, py::arg("softening") = 1e-2, py::arg("init_range") = 1.0,
        py::arg("init_positions") = std::vector<double>{},
        py::arg("init_velocities") = std::vector<double>{}, py::arg("seed") = 0,
        py::arg("resample_budget") = 10, py::arg("energy_tol") = 1e-2,
        "Planar gravitational run with Plummer-softened pairwise forces and "
        "kick-drift-kick integration. Returns positions/velocities of shape "
        "(steps, bodies, 2) plus per-step momentum and energy diagnostics.");

    // ---- datasets -------------------------------------------------------
    py::class_<MVTSDataset>(m, "Dataset")
        .def_property_readonly("X", [](const MVTSDataset& d) { return numpy_from(d.X); })
        .def_readonly("y", &MVTSDataset::y)
        .def_readonly("channel_names", &MVTSDataset::channel_names)
        .def_readonly("class_names", &MVTSDataset::class_names)
        .def_readonly("split", &MVTSDataset::split)
        .def_readonly("ground_truth", &MVTSDataset::ground_truth)
        .def_readonly("norm_mean", &MVTSDataset::norm_mean)
        .def_readonly("norm_std", &MVTSDataset::norm_std)
        .def("indices_of", &MVTSDataset::indices_of, py::arg("split"))
        .def("__len__", [](const MVTSDataset& d) { return d.X.shape[0]; });

    m.def(
        "build_nbody_dataset",
        [](std::int64_t n_train, std::int64_t n_val, std::int64_t n_test, std::uint64_t seed,
           std::int64_t steps, double dt, std::int64_t substeps, double softening,
           bool normalize) {
            NBodyDatasetConfig cfg;
            cfg.n_train = n_train;
            cfg.n_val = n_val;
            cfg.n_test = n_test;
            cfg.seed = seed;
            cfg.sim.steps = steps;
            cfg.sim.dt = dt;
            cfg.sim.substeps = substeps;
            cfg.sim.softening = softening;
            cfg.normalize = normalize;
            return build_nbody_dataset(cfg);
        },
        py::arg("n_train") = 183, py::arg("n_val") = 183, py::arg("n_test") = 244,
        py::arg("seed") = 0, py::arg("steps") = 2000, py::arg("dt") = 1e-3,
        py::arg("substeps") = 16, py::arg("softening") = 1e-2, py::arg("normalize") = true,
        "Two-class gravitational benchmark: one 4-body system against a "
        "2-body system paired with an independent 4-body system.");

    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("dir"));
    m.def("load_dataset", &load_dataset, py::arg("dir"));
    m.def("export_csv", &export_csv, py::arg("dataset"), py::arg("csv_path"),
          py::arg("sidecar_path"));
    m.def("import_csv", &import_csv, py::arg("csv_path"), py::arg("sidecar_path"),
          py::arg("normalize") = false);
    m.def("drop_channels", &drop_channels, py::arg("dataset"), py::arg("names"));
    m.def("normalize_by_train", &normalize_by_train, py::arg("dataset"));

    // ---- training and inference ----------------------------------------
    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("model", [](const Checkpoint& c) { return c.model; })
        .def_readonly("best_epoch", &Checkpoint::best_epoch)
        .def_readonly("val_loss", &Checkpoint::val_loss)
        .def_readonly("val_auc", &Checkpoint::val_auc)
        .def_readonly("seed", &Checkpoint::seed)
        .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(path, c); },
             py::arg("path"));

    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    m.def(
        "fit",
        [](const IETNetConfig& mcfg, const TrainConfig& tcfg,
           py::array_t<float, py::array::c_style | py::array::forcecast> x_train,
           std::vector<int> y_train,
           py::array_t<float, py::array::c_style | py::array::forcecast> x_val,
           std::vector<int> y_val, const py::object& on_epoch) {
            const std::function<void(const EpochStats&)> cb =
                on_epoch.is_none() ? std::function<void(const EpochStats&)>()
                                   : [on_epoch](const EpochStats& s) {
                                         py::dict rec;
                                         rec["epoch"] = s.epoch;
                                         rec["step"] = s.step;
                                         rec["lr"] = s.lr;
                                         rec["train_loss"] = s.train_loss;
                                         rec["val_loss"] = s.val_loss;
                                         rec["val_auc"] = s.val_auc;
                                         on_epoch(rec);
                                     };
            const FitResult fr =
                fit(mcfg, tcfg, tensor_from(x_train), y_train, tensor_from(x_val), y_val, cb);
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
            py::list history;
            for (const EpochStats& s : fr.history) {
                py::dict rec;
                rec["epoch"] = s.epoch;
                rec["step"] = s.step;
                rec["lr"] = s.lr;
                rec["train_loss"] = s.train_loss;
                rec["val_loss"] = s.val_loss;
                rec["val_auc"] = s.val_auc;
                history.append(rec);
            }
            return py::make_tuple(ck, history, fr.stop_reason);
        },
        py::arg("model_config"), py::arg("train_config"), py::arg("x_train"), py::arg("y_train"),
        py::arg("x_val"), py::arg("y_val"), py::arg("on_epoch") = py::none(),
        "Train from fresh weights; returns (checkpoint, history, stop_reason) "
        "with the best-validation-loss weights in the checkpoint.");

    m.def(
        "run_eval",
        [](const Checkpoint& ck,
           py::array_t<float, py::array::c_style | py::array::forcecast> x,
           std::int64_t micro_batch) {
            const EvalOutputs out = run_eval(ck.model, ck.params, tensor_from(x), micro_batch);
            return py::make_tuple(numpy_from(out.probs), numpy_from(out.gate),
                                  numpy_from(out.features));
        },
        py::arg("checkpoint"), py::arg("x"), py::arg("micro_batch") = 4,
        "Eval-mode forward pass; returns (probs, gate, features).");

    // ---- metrics ---------------------------------------------------------
    m.def("roc_auc", &roc_auc, py::arg("scores"), py::arg("labels"));
    m.def(
        "roc_curve",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            const RocCurve c = roc_curve(scores, labels);
            py::dict out;
            out["thresholds"] = c.thresholds;
            out["tpr"] = c.tpr;
            out["fpr"] = c.fpr;
            out["auc"] = c.auc;
            return out;
        },
        py::arg("scores"), py::arg("labels"));
    m.def("youden_threshold", &youden_threshold, py::arg("scores"), py::arg("labels"));
    m.def(
        "confusion_at",
        [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
            const Confusion c = confusion_at(scores, labels, threshold);
            py::dict out;
            out["tp"] = c.tp;
            out["fp"] = c.fp;
            out["tn"] = c.tn;
            out["fn"] = c.fn;
            out["accuracy"] = c.accuracy();
            return out;
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold"));
    m.def("ap_at_k", &ap_at_k, py::arg("channel_scores"), py::arg("ground_truth"), py::arg("k"),
          py::arg("clip_norm") = true);

    m.def(
        "predict_labels",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> probs) {
            return predict_labels(tensor_from(probs));
        },
        py::arg("probs"));
    m.def("confusion_matrix", &confusion_matrix, py::arg("truth"), py::arg("predicted"),
          py::arg("num_classes"));
    m.def(
        "aggregate_gate",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> gate,
           const std::vector<int>& predicted, int num_classes) {
            return heatmap_dict(aggregate_gate(tensor_from(gate), predicted, num_classes));
        },
        py::arg("gate"), py::arg("predicted"), py::arg("num_classes"));
    m.def(
        "map_at_k_report",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> gate,
           const std::vector<int>& predicted, const std::map<int, std::vector<int>>& ground_truth,
           bool clip_norm) {
            return ap_report_dict(map_at_k_report(tensor_from(gate), predicted, ground_truth,
                                                  clip_norm));
        },
        py::arg("gate"), py::arg("predicted"), py::arg("ground_truth"),
        py::arg("clip_norm") = true);
}
