#include "ietnet/model.hpp"

#include <stdexcept>

namespace ietnet {

void IETNetConfig::validate() const {
    if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
    if (classes < 2) throw std::invalid_argument("config: classes must be >= 2");
    if (tcn_filters < 1) throw std::invalid_argument("config: tcn_filters must be >= 1");
    if (kernel_size < 1) throw std::invalid_argument("config: kernel_size must be >= 1");
    if (dilations.empty()) throw std::invalid_argument("config: dilations must not be empty");
    std::int64_t prev = 0;
    for (auto d : dilations) {
        if (d < 1 || (d & (d - 1)) != 0) {
            throw std::invalid_argument("config: dilation " + std::to_string(d) + " is not a power of two");
        }
        if (d <= prev) {
            throw std::invalid_argument("config: dilations must be strictly increasing");
        }
        prev = d;
    }
    if (d_model != tcn_filters) {
        throw std::invalid_argument("config: d_model (" + std::to_string(d_model) +
                                    ") must equal tcn_filters (" + std::to_string(tcn_filters) +
                                    "); the pooled conv features feed attention directly");
    }
    if (heads < 1 || d_model % heads != 0) {
        throw std::invalid_argument("config: heads (" + std::to_string(heads) +
                                    ") must divide d_model (" + std::to_string(d_model) + ")");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw std::invalid_argument("config: dropout must be in [0, 1)");
    }
    if (ln_eps <= 0.0) {
        throw std::invalid_argument("config: ln_eps must be positive");
    }
}

std::int64_t IETNetConfig::receptive_field() const {
    std::int64_t sum = 0;
    for (auto d : dilations) sum += d;
    return 1 + 2 * (kernel_size - 1) * sum;
}

template <typename T>
NamedParams<T> init_params(const IETNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    NamedParams<T> p;
    const std::int64_t F = cfg.tcn_filters;
    const std::int64_t K = cfg.kernel_size;

    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        const std::string base = "tcn.block" + std::to_string(i) + ".";
        const std::int64_t in_ch = i == 0 ? 1 : F;  // channels enter one at a time
        p.add(base + "conv1.kernel", glorot_normal<T>({F, in_ch, K}, rng));
        p.add(base + "conv1.bias", Tensor<T>::zeros({F}));
        p.add(base + "conv2.kernel", glorot_normal<T>({F, F, K}, rng));
        p.add(base + "conv2.bias", Tensor<T>::zeros({F}));
        if (in_ch != F) {
            p.add(base + "skip.kernel", glorot_normal<T>({F, in_ch, 1}, rng));
            p.add(base + "skip.bias", Tensor<T>::zeros({F}));
        }
    }

    const std::int64_t d = cfg.d_model;
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
        p.add(std::string("attn.") + w, glorot_normal<T>({d, d}, rng));
        p.add(std::string("attn.b") + (w + 1), Tensor<T>::zeros({d}));
    }
    p.add("attn.ln.gain", Tensor<T>::ones({d}));
    p.add("attn.ln.bias", Tensor<T>::zeros({d}));

    p.add("gate.weight", glorot_normal<T>({d, cfg.classes}, rng));
    p.add("gate.bias", Tensor<T>::zeros({cfg.classes}));
    return p;
}

template <typename T>
ModelNodes build_model(Graph<T>& g, const IETNetConfig& cfg, const NamedParams<T>& params, NodeId x,
                       bool training, Rng& rng) {
    cfg.validate();
    const Shape xs = g.value(x).shape;
    if (xs.size() != 3 || xs[1] != cfg.channels) {
        throw std::invalid_argument("build_model: input must be (batch, " + std::to_string(cfg.channels) +
                                    ", time), got " + shape_str(xs));
    }
    const std::int64_t B = xs[0], C = xs[1], L = xs[2];

    ModelNodes out;
    out.params.reserve(params.tensors.size());
    for (const auto& t : params.tensors) out.params.push_back(g.param(t));
    auto pid = [&](const std::string& name) { return out.params[params.index_of(name)]; };

    // Shared temporal encoder: fold channels into the batch so every channel
    // runs through the same weights, then pool over time.
    NodeId h = g.reshape(x, {B * C, 1, L});
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        const std::string base = "tcn.block" + std::to_string(i) + ".";
        ResidualBlockParams rp;
        rp.conv1_kernel = pid(base + "conv1.kernel");
        rp.conv1_bias = pid(base + "conv1.bias");
        rp.conv2_kernel = pid(base + "conv2.kernel");
        rp.conv2_bias = pid(base + "conv2.bias");
        rp.project = i == 0 && cfg.tcn_filters != 1;
        if (rp.project) {
            rp.skip_kernel = pid(base + "skip.kernel");
            rp.skip_bias = pid(base + "skip.bias");
        }
        h = residual_block(g, h, rp, cfg.dilations[i], cfg.dropout, training, rng);
    }
    out.features = g.reshape(g.mean(h, {2}), {B, C, cfg.tcn_filters});

    // Channel gate: attention across channels, then a per-class softmax over
    // the channel axis, so each class column is a distribution over channels.
    AttentionParams ap;
    ap.wq = pid("attn.wq");
    ap.bq = pid("attn.bq");
    ap.wk = pid("attn.wk");
    ap.bk = pid("attn.bk");
    ap.wv = pid("attn.wv");
    ap.bv = pid("attn.bv");
    ap.wo = pid("attn.wo");
    ap.bo = pid("attn.bo");
    ap.ln_gain = pid("attn.ln.gain");
    ap.ln_bias = pid("attn.ln.bias");
    NodeId mixed = attention_block(g, out.features, ap, cfg.heads, cfg.dropout, training, rng,
                                   static_cast<T>(cfg.ln_eps));
    NodeId scores = dense(g, mixed, pid("gate.weight"), pid("gate.bias"));
    out.gate = g.softmax(scores, 1);

    // logits[b,k] = mean_c gate[b,c,k] * mean_f features[b,c,f]
    NodeId channel_mean = g.reshape(g.mean(out.features, {2}), {B, C, 1});
    NodeId gated = g.matmul(g.transpose_last2(out.gate), channel_mean);  // (B, classes, 1)
    out.logits = g.scale(g.reshape(gated, {B, cfg.classes}), static_cast<T>(1.0 / static_cast<double>(C)));
    return out;
}

template NamedParams<float> init_params<float>(const IETNetConfig&, std::uint64_t);
template NamedParams<double> init_params<double>(const IETNetConfig&, std::uint64_t);
template ModelNodes build_model<float>(Graph<float>&, const IETNetConfig&, const NamedParams<float>&,
                                       NodeId, bool, Rng&);
template ModelNodes build_model<double>(Graph<double>&, const IETNetConfig&, const NamedParams<double>&,
                                        NodeId, bool, Rng&);

}  // namespace ietnet
