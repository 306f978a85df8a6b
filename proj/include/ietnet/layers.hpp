#pragma once

#include <cstdint>

#include "ietnet/graph.hpp"
#include "ietnet/rng.hpp"
#include "ietnet/tensor.hpp"

namespace ietnet {

/// Glorot-normal initializer: zero-mean gaussian with
/// stddev = sqrt(2 / (fan_in + fan_out)). Fans follow the usual
/// conventions: (in, out) for a rank-2 weight, and receptive-field
/// scaled channel counts for a rank-3 conv kernel (out, in, k).
template <typename T>
Tensor<T> glorot_normal(const Shape& shape, Rng& rng);

/// y = x @ w + b over the last axis; x (..., in), w (in, out), b (out).
template <typename T>
NodeId dense(Graph<T>& g, NodeId x, NodeId w, NodeId b);

/// Parameter node ids for one residual TCN block. `skip_kernel`/`skip_bias`
/// are ignored unless `project` is set (input width != filter count).
struct ResidualBlockParams {
    NodeId conv1_kernel, conv1_bias;
    NodeId conv2_kernel, conv2_bias;
    bool project = false;
    NodeId skip_kernel = -1, skip_bias = -1;
};

/// Two causal dilated convolutions with relu + dropout after each, added to
/// an identity (or width-matching 1x1 conv) shortcut, then a final relu.
/// x (N, C_in, T) -> (N, F, T).
template <typename T>
NodeId residual_block(Graph<T>& g, NodeId x, const ResidualBlockParams& p, std::int64_t dilation,
                      double dropout_rate, bool training, Rng& rng);

/// Parameter node ids for one multi-head self-attention layer with a
/// residual connection and layer norm on the output.
struct AttentionParams {
    NodeId wq, bq, wk, bk, wv, bv, wo, bo;
    NodeId ln_gain, ln_bias;
};

/// Scaled dot-product self-attention over the channel axis.
/// m (B, C, d) -> (B, C, d):
///   per head: A = softmax(Q K^T / sqrt(d_head)) over the key axis
///   out = layer_norm(m + dropout(concat(A V) @ Wo + bo))
template <typename T>
NodeId attention_block(Graph<T>& g, NodeId m, const AttentionParams& p, std::int64_t heads,
                       double dropout_rate, bool training, Rng& rng, T ln_eps);

}  // namespace ietnet
