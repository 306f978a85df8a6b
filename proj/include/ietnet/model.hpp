#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ietnet/graph.hpp"
#include "ietnet/layers.hpp"
#include "ietnet/rng.hpp"
#include "ietnet/tensor.hpp"

namespace ietnet {

/// Architecture hyperparameters. The temporal encoder is shared across
/// channels: every input channel is run through the same stack of residual
/// dilated-conv blocks and mean-pooled over time, giving one feature row per
/// channel. Attention then mixes information across channels, and a softmax
/// over the channel axis produces a per-class channel gate.
struct IETNetConfig {
    std::int64_t channels = 8;
    std::int64_t classes = 2;
    std::int64_t tcn_filters = 16;
    std::int64_t kernel_size = 2;
    std::vector<std::int64_t> dilations = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512};
    std::int64_t d_model = 16;  // attention width; must equal tcn_filters
    std::int64_t heads = 1;
    double dropout = 0.5;
    double ln_eps = 1e-6;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    /// Longest input span (in steps) that can influence one output step:
    /// 1 + 2*(kernel_size-1)*sum(dilations), two convolutions per block.
    std::int64_t receptive_field() const;
};

/// Ordered, named parameter tensors. Order is the canonical identity used
/// by the optimizer state and the checkpoint format.
template <typename T>
struct NamedParams {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;

    std::size_t add(std::string name, Tensor<T> t) {
        names.push_back(std::move(name));
        tensors.push_back(std::move(t));
        return names.size() - 1;
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return i;
        }
        throw std::invalid_argument("no parameter named '" + name + "'");
    }

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    template <typename U>
    NamedParams<U> cast() const {
        NamedParams<U> out;
        out.names = names;
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
};

/// Fresh glorot-normal weights (zero biases, unit layer-norm gain) in the
/// canonical order. Deterministic for a given seed and config.
template <typename T>
NamedParams<T> init_params(const IETNetConfig& cfg, std::uint64_t seed);

/// Node ids of interest after building one forward pass.
struct ModelNodes {
    std::vector<NodeId> params;  // aligned with NamedParams order
    NodeId features;             // (B, channels, tcn_filters)
    NodeId gate;                 // (B, channels, classes); each class column sums to 1
    NodeId logits;               // (B, classes)
};

/// Wires the full network onto `g` for input x (B, channels, T). `rng`
/// drives dropout when training; it is untouched in eval mode.
template <typename T>
ModelNodes build_model(Graph<T>& g, const IETNetConfig& cfg, const NamedParams<T>& params, NodeId x,
                       bool training, Rng& rng);

}  // namespace ietnet
