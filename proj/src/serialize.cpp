#include "ietnet/serialize.hpp"

#include <bit>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

namespace ietnet {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swapping");

namespace {

template <typename T>
constexpr const char* dtype_tag() {
    if constexpr (std::is_same_v<T, float>) {
        return "f32";
    } else {
        static_assert(std::is_same_v<T, double>, "only f32/f64 tensors are serializable");
        return "f64";
    }
}

// Rejects unknown keys so config typos fail loudly instead of silently
// falling back to defaults.
void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::runtime_error(std::string(what) + ": unknown key '" + it.key() + "'");
        }
    }
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    nlohmann::json header;
    header["shape"] = t.shape;
    header["dtype"] = dtype_tag<T>();
    os << header.dump() << '\n';
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (!os.good()) throw std::runtime_error("write_tensor: stream failure");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("read_tensor: truncated stream, missing tensor header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("read_tensor: malformed tensor header: ") + e.what());
    }
    if (!header.contains("shape") || !header.contains("dtype")) {
        throw std::runtime_error("read_tensor: tensor header missing shape/dtype");
    }
    const std::string dtype = header["dtype"].get<std::string>();
    if (dtype != dtype_tag<T>()) {
        throw std::runtime_error("read_tensor: expected dtype " + std::string(dtype_tag<T>()) +
                                 ", file has " + dtype);
    }
    const Shape shape = header["shape"].get<Shape>();
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (is.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(T))) {
        throw std::runtime_error("read_tensor: truncated payload for tensor of shape " +
                                 shape_str(shape));
    }
    return t;
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);

nlohmann::json model_config_to_json(const IETNetConfig& cfg) {
    return {{"channels", cfg.channels},     {"classes", cfg.classes},
            {"tcn_filters", cfg.tcn_filters}, {"kernel_size", cfg.kernel_size},
            {"dilations", cfg.dilations},   {"d_model", cfg.d_model},
            {"heads", cfg.heads},           {"dropout", cfg.dropout},
            {"ln_eps", cfg.ln_eps}};
}

IETNetConfig model_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"channels", "classes", "tcn_filters", "kernel_size", "dilations", "d_model", "heads",
                "dropout", "ln_eps"},
               "model config");
    IETNetConfig cfg;
    if (j.contains("channels")) cfg.channels = j["channels"].get<std::int64_t>();
    if (j.contains("classes")) cfg.classes = j["classes"].get<std::int64_t>();
    if (j.contains("tcn_filters")) cfg.tcn_filters = j["tcn_filters"].get<std::int64_t>();
    if (j.contains("kernel_size")) cfg.kernel_size = j["kernel_size"].get<std::int64_t>();
    if (j.contains("dilations")) cfg.dilations = j["dilations"].get<std::vector<std::int64_t>>();
    if (j.contains("d_model")) cfg.d_model = j["d_model"].get<std::int64_t>();
    if (j.contains("heads")) cfg.heads = j["heads"].get<std::int64_t>();
    if (j.contains("dropout")) cfg.dropout = j["dropout"].get<double>();
    if (j.contains("ln_eps")) cfg.ln_eps = j["ln_eps"].get<double>();
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"micro_batch", cfg.micro_batch},
            {"patience", cfg.patience},
            {"lr_min", cfg.lr.lr_min},
            {"lr_max", cfg.lr.lr_max},
            {"warmup", cfg.lr.warmup},
            {"restart_every", cfg.lr.restart_every},
            {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"epochs", "batch_size", "micro_batch", "patience", "lr_min", "lr_max", "warmup",
                "restart_every", "seed"},
               "train config");
    TrainConfig cfg;
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<std::int64_t>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::int64_t>();
    if (j.contains("micro_batch")) cfg.micro_batch = j["micro_batch"].get<std::int64_t>();
    if (j.contains("patience")) cfg.patience = j["patience"].get<std::int64_t>();
    if (j.contains("lr_min")) cfg.lr.lr_min = j["lr_min"].get<double>();
    if (j.contains("lr_max")) cfg.lr.lr_max = j["lr_max"].get<double>();
    if (j.contains("warmup")) cfg.lr.warmup = j["warmup"].get<std::int64_t>();
    if (j.contains("restart_every")) cfg.lr.restart_every = j["restart_every"].get<std::int64_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    return cfg;
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    if (c.params.tensors.size() != c.opt.m.size() || c.params.tensors.size() != c.opt.v.size()) {
        throw std::invalid_argument("save_checkpoint: optimizer state does not match parameters");
    }
    nlohmann::json manifest;
    manifest["format"] = "ietnet-checkpoint";
    manifest["version"] = kCheckpointVersion;
    manifest["model"] = model_config_to_json(c.model);
    manifest["meta"] = {{"best_epoch", c.best_epoch},
                        {"val_loss", c.val_loss},
                        {"val_auc", c.val_auc},
                        {"seed", c.seed}};
    manifest["adam"] = {{"beta1", c.opt.beta1},
                        {"beta2", c.opt.beta2},
                        {"eps", c.opt.eps},
                        {"step", c.opt.step}};
    nlohmann::json index = nlohmann::json::array();
    for (std::size_t i = 0; i < c.params.tensors.size(); ++i) {
        index.push_back({{"name", c.params.names[i]}, {"shape", c.params.tensors[i].shape}});
    }
    manifest["tensors"] = index;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
    os << manifest.dump() << '\n';
    for (const auto& t : c.params.tensors) write_tensor(os, t);
    for (const auto& t : c.opt.m) write_tensor(os, t);
    for (const auto& t : c.opt.v) write_tensor(os, t);
    if (!os.good()) throw std::runtime_error("save_checkpoint: write failure on '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("load_checkpoint: empty file '" + path + "'");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint (" + e.what() + ")");
    }
    if (manifest.value("format", "") != "ietnet-checkpoint") {
        throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint file");
    }
    const int version = manifest.value("version", -1);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: version " + std::to_string(version) +
                                 " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint c;
    c.model = model_config_from_json(manifest.at("model"));
    c.model.validate();
    const auto& meta = manifest.at("meta");
    c.best_epoch = meta.at("best_epoch").get<std::int64_t>();
    c.val_loss = meta.at("val_loss").get<double>();
    c.val_auc = meta.at("val_auc").get<double>();
    c.seed = meta.at("seed").get<std::uint64_t>();

    // The manifest must name each trainable tensor of this architecture
    // exactly once, in canonical order.
    const NamedParams<float> canon = init_params<float>(c.model, 0);
    const auto& index = manifest.at("tensors");
    if (index.size() != canon.names.size()) {
        throw std::runtime_error("load_checkpoint: manifest lists " + std::to_string(index.size()) +
                                 " tensors, architecture has " + std::to_string(canon.names.size()));
    }
    for (std::size_t i = 0; i < canon.names.size(); ++i) {
        const std::string name = index[i].at("name").get<std::string>();
        if (name != canon.names[i]) {
            throw std::runtime_error("load_checkpoint: tensor " + std::to_string(i) + " is '" + name +
                                     "', expected '" + canon.names[i] + "'");
        }
        if (index[i].at("shape").get<Shape>() != canon.tensors[i].shape) {
            throw std::runtime_error("load_checkpoint: manifest shape for '" + name +
                                     "' does not match the architecture");
        }
    }

    auto read_aligned = [&](const char* which) {
        std::vector<Tensor<float>> out;
        out.reserve(canon.names.size());
        for (std::size_t i = 0; i < canon.names.size(); ++i) {
            Tensor<float> t = read_tensor<float>(is);
            if (t.shape != canon.tensors[i].shape) {
                throw std::runtime_error("load_checkpoint: " + std::string(which) + " tensor '" +
                                         canon.names[i] + "' has shape " + shape_str(t.shape) +
                                         ", manifest says " + shape_str(canon.tensors[i].shape));
            }
            out.push_back(std::move(t));
        }
        return out;
    };

    c.params.names = canon.names;
    c.params.tensors = read_aligned("parameter");
    const auto& adam = manifest.at("adam");
    c.opt.beta1 = adam.at("beta1").get<double>();
    c.opt.beta2 = adam.at("beta2").get<double>();
    c.opt.eps = adam.at("eps").get<double>();
    c.opt.step = adam.at("step").get<std::int64_t>();
    c.opt.m = read_aligned("adam m");
    c.opt.v = read_aligned("adam v");

    if (is.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error("load_checkpoint: trailing bytes after optimizer state in '" + path + "'");
    }
    return c;
}

}  // namespace ietnet
