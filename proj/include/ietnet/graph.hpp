#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "ietnet/rng.hpp"
#include "ietnet/tensor.hpp"

namespace ietnet {

using NodeId = std::int32_t;

/// Gradients keyed by node id, populated by Graph::backward. Every tensor
/// has the same shape as the value of the node it belongs to.
template <typename T>
class GradientMap {
public:
    explicit GradientMap(std::size_t n_nodes) : grads_(n_nodes) {}

    bool has(NodeId id) const { return !grads_[static_cast<std::size_t>(id)].data.empty(); }

    const Tensor<T>& at(NodeId id) const {
        const auto& g = grads_[static_cast<std::size_t>(id)];
        if (g.data.empty()) {
            throw std::invalid_argument("no gradient recorded for node " + std::to_string(id));
        }
        return g;
    }

    Tensor<T>& slot(NodeId id) { return grads_[static_cast<std::size_t>(id)]; }

private:
    std::vector<Tensor<T>> grads_;
};

/// Define-by-run tape over the primitive operations the model needs.
/// Nodes are appended in execution order, so the tape is topologically
/// ordered by construction. backward() never mutates the graph; calling
/// it twice on the same forward pass yields identical gradient maps.
template <typename T>
class Graph {
public:
    struct Node {
        std::string op;
        std::vector<NodeId> inputs;
        Tensor<T> value;
        bool trainable = false;
        // Accumulates into the input slots of `grads` given this node's
        // output gradient. Null for leaves.
        std::function<void(const Graph&, const Tensor<T>&, GradientMap<T>&)> backward;
    };

    /// Constant leaf (inputs, labels).
    NodeId input(Tensor<T> v);
    /// Trainable leaf (parameters).
    NodeId param(Tensor<T> v);

    const Tensor<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

    // -- primitives -------------------------------------------------------

    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, T c);
    NodeId relu(NodeId a);
    /// log(max(x, floor)); gradient is zero where the clamp is active.
    NodeId log_clamped(NodeId a, T floor);
    NodeId softmax(NodeId a, std::int64_t axis);
    /// Mean over the given axes; reduced axes are removed from the shape.
    NodeId mean(NodeId a, std::vector<std::int64_t> axes);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose_last2(NodeId a);
    NodeId reshape(NodeId a, Shape new_shape);
    NodeId slice_last(NodeId a, std::int64_t lo, std::int64_t hi);
    NodeId concat_last(const std::vector<NodeId>& parts);
    /// Causal dilated 1D convolution: x (N, C_in, T), kernel (C_out, C_in, K),
    /// bias (C_out). Output (N, C_out, T); left zero-padding of (K-1)*dilation.
    NodeId conv1d_causal(NodeId x, NodeId kernel, NodeId bias, std::int64_t dilation);
    /// Inverted dropout; identity when !training or rate == 0.
    NodeId dropout(NodeId x, double rate, bool training, Rng& rng);
    /// Layer normalization over the last axis with learned gain and bias.
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, T eps);
    /// x (N, K) -> (N,), picking x[i, index[i]].
    NodeId select_index(NodeId x, const std::vector<int>& index);

    /// Reverse-mode sweep from a scalar loss node. The graph itself is not
    /// modified; gradients for every node reachable from the loss are
    /// returned (trainable leaves included).
    GradientMap<T> backward(NodeId loss) const;

private:
    NodeId push(Node n);
    const Tensor<T>& in(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    // Deque, not vector: references returned by value() stay valid while
    // further nodes are appended.
    std::deque<Node> nodes_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace ietnet
