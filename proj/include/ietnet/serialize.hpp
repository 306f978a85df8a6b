#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "ietnet/model.hpp"
#include "ietnet/trainer.hpp"

namespace ietnet {

/// Framed tensor stream format: one JSON header line
///   {"shape": [...], "dtype": "f32"|"f64"}\n
/// followed by the row-major element bytes, little-endian. Checkpoint and
/// dataset files are built from these frames.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads one framed tensor; the stored dtype must match T exactly.
/// Throws std::runtime_error on malformed headers or truncated payloads.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

nlohmann::json model_config_to_json(const IETNetConfig& cfg);
IETNetConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Everything needed to resume or serve a trained model.
struct Checkpoint {
    IETNetConfig model;
    NamedParams<float> params;
    AdamState<float> opt;
    // Training metadata.
    std::int64_t best_epoch = 0;
    double val_loss = 0.0;
    double val_auc = 0.0;
    std::uint64_t seed = 0;
};

/// Single file: manifest JSON line (format, version, config, metadata, and
/// the tensor index) followed by framed tensors for every parameter, then
/// the Adam m and v moments in the same order.
void save_checkpoint(const std::string& path, const Checkpoint& c);

/// Throws std::runtime_error on unknown format, newer version, truncation,
/// or any shape disagreeing with the manifest. Never returns partial state.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ietnet
