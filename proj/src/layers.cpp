#include "ietnet/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ietnet {

template <typename T>
Tensor<T> glorot_normal(const Shape& shape, Rng& rng) {
    std::int64_t fan_in = 0, fan_out = 0;
    if (shape.size() == 2) {
        fan_in = shape[0];
        fan_out = shape[1];
    } else if (shape.size() == 3) {
        // Conv kernel (out_channels, in_channels, k).
        fan_in = shape[1] * shape[2];
        fan_out = shape[0] * shape[2];
    } else {
        throw std::invalid_argument("glorot_normal: unsupported weight shape " + shape_str(shape));
    }
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

template <typename T>
NodeId dense(Graph<T>& g, NodeId x, NodeId w, NodeId b) {
    return g.add(g.matmul(x, w), b);
}

template <typename T>
NodeId residual_block(Graph<T>& g, NodeId x, const ResidualBlockParams& p, std::int64_t dilation,
                      double dropout_rate, bool training, Rng& rng) {
    NodeId h = g.dropout(g.relu(g.conv1d_causal(x, p.conv1_kernel, p.conv1_bias, dilation)),
                         dropout_rate, training, rng);
    NodeId h2 = g.dropout(g.relu(g.conv1d_causal(h, p.conv2_kernel, p.conv2_bias, dilation)),
                          dropout_rate, training, rng);
    NodeId shortcut = p.project ? g.conv1d_causal(x, p.skip_kernel, p.skip_bias, 1) : x;
    return g.relu(g.add(shortcut, h2));
}

template <typename T>
NodeId attention_block(Graph<T>& g, NodeId m, const AttentionParams& p, std::int64_t heads,
                       double dropout_rate, bool training, Rng& rng, T ln_eps) {
    const Shape& ms = g.value(m).shape;
    if (ms.size() != 3) {
        throw std::invalid_argument("attention_block: expected (batch, channels, d), got " + shape_str(ms));
    }
    const std::int64_t d = ms[2];
    if (heads < 1 || d % heads != 0) {
        throw std::invalid_argument("attention_block: " + std::to_string(heads) +
                                    " heads do not divide feature width " + std::to_string(d));
    }
    const std::int64_t dh = d / heads;
    const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    NodeId q = dense(g, m, p.wq, p.bq);
    NodeId k = dense(g, m, p.wk, p.bk);
    NodeId v = dense(g, m, p.wv, p.bv);

    std::vector<NodeId> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (std::int64_t h = 0; h < heads; ++h) {
        NodeId qh = g.slice_last(q, h * dh, (h + 1) * dh);
        NodeId kh = g.slice_last(k, h * dh, (h + 1) * dh);
        NodeId vh = g.slice_last(v, h * dh, (h + 1) * dh);
        NodeId scores = g.scale(g.matmul(qh, g.transpose_last2(kh)), inv_sqrt_dh);
        NodeId attn = g.softmax(scores, 2);  // normalize over keys
        head_outs.push_back(g.matmul(attn, vh));
    }
    NodeId merged = heads == 1 ? head_outs[0] : g.concat_last(head_outs);
    NodeId projected = g.dropout(dense(g, merged, p.wo, p.bo), dropout_rate, training, rng);
    return g.layer_norm(g.add(m, projected), p.ln_gain, p.ln_bias, ln_eps);
}

template Tensor<float> glorot_normal<float>(const Shape&, Rng&);
template Tensor<double> glorot_normal<double>(const Shape&, Rng&);
template NodeId dense<float>(Graph<float>&, NodeId, NodeId, NodeId);
template NodeId dense<double>(Graph<double>&, NodeId, NodeId, NodeId);
template NodeId residual_block<float>(Graph<float>&, NodeId, const ResidualBlockParams&, std::int64_t,
                                      double, bool, Rng&);
template NodeId residual_block<double>(Graph<double>&, NodeId, const ResidualBlockParams&, std::int64_t,
                                       double, bool, Rng&);
template NodeId attention_block<float>(Graph<float>&, NodeId, const AttentionParams&, std::int64_t,
                                       double, bool, Rng&, float);
template NodeId attention_block<double>(Graph<double>&, NodeId, const AttentionParams&, std::int64_t,
                                        double, bool, Rng&, double);

}  // namespace ietnet
