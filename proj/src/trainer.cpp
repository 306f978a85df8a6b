#include "ietnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ietnet/metrics.hpp"

namespace ietnet {

namespace {

// Gathers sample rows into a contiguous (m, C, T) batch.
Tensor<float> take_rows(const Tensor<float>& x, const std::vector<std::size_t>& order,
                        std::size_t begin, std::size_t end) {
    const std::int64_t C = x.shape[1], T = x.shape[2];
    const std::int64_t m = static_cast<std::int64_t>(end - begin);
    Tensor<float> out({m, C, T});
    for (std::size_t i = begin; i < end; ++i) {
        const float* src = x.data.data() + static_cast<std::int64_t>(order[i]) * C * T;
        float* dst = out.data.data() + static_cast<std::int64_t>(i - begin) * C * T;
        std::copy(src, src + C * T, dst);
    }
    return out;
}

}  // namespace

template <typename T>
NodeId cross_entropy(Graph<T>& g, NodeId logits, const std::vector<int>& labels) {
    const Shape& s = g.value(logits).shape;
    if (s.size() != 2 || s[0] != static_cast<std::int64_t>(labels.size())) {
        throw std::invalid_argument("cross_entropy: logits " + shape_str(s) + " do not match " +
                                    std::to_string(labels.size()) + " labels");
    }
    NodeId probs = g.softmax(logits, 1);
    NodeId picked = g.select_index(probs, labels);
    return g.scale(g.mean(g.log_clamped(picked, static_cast<T>(1e-12)), {0}), T(-1));
}

double LrSchedule::at(std::int64_t step) const {
    if (step < 1) throw std::invalid_argument("LrSchedule: step must be >= 1");
    if (restart_every > 0) step = (step - 1) % restart_every + 1;
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    const double raw = lr_max * std::min(s / w, std::sqrt(w / s));
    return std::min(lr_max, std::max(lr_min, raw));
}

template <typename T>
void adam_step(NamedParams<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& st,
               double lr) {
    if (grads.size() != params.tensors.size() || st.m.size() != params.tensors.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state counts disagree");
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t p = 0; p < params.tensors.size(); ++p) {
        Tensor<T>& w = params.tensors[p];
        const Tensor<T>& g = grads[p];
        if (g.shape != w.shape) {
            throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape) +
                                        " does not match parameter '" + params.names[p] + "' " +
                                        shape_str(w.shape));
        }
        if (!g.all_finite()) {
            throw std::runtime_error("adam_step: non-finite gradient for parameter '" +
                                     params.names[p] + "' at optimizer step " + std::to_string(st.step));
        }
        Tensor<T>& m = st.m[p];
        Tensor<T>& v = st.v[p];
        for (std::int64_t i = 0; i < w.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = st.beta1 * static_cast<double>(m[i]) + (1.0 - st.beta1) * gi;
            const double vi = st.beta2 * static_cast<double>(v[i]) + (1.0 - st.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + st.eps));
        }
    }
}

double nll_from_probs(const Tensor<float>& probs, const std::vector<int>& labels) {
    const std::int64_t N = probs.shape[0], K = probs.shape[1];
    if (N != static_cast<std::int64_t>(labels.size())) {
        throw std::invalid_argument("nll_from_probs: size mismatch");
    }
    double sum = 0.0;
    for (std::int64_t i = 0; i < N; ++i) {
        const double p = static_cast<double>(probs[i * K + labels[static_cast<std::size_t>(i)]]);
        sum += -std::log(std::max(p, 1e-12));
    }
    return sum / static_cast<double>(N);
}

double macro_auc(const Tensor<float>& probs, const std::vector<int>& labels) {
    const std::int64_t N = probs.shape[0], K = probs.shape[1];
    double total = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
        std::vector<double> scores(static_cast<std::size_t>(N));
        std::vector<int> binary(static_cast<std::size_t>(N));
        for (std::int64_t i = 0; i < N; ++i) {
            scores[static_cast<std::size_t>(i)] = static_cast<double>(probs[i * K + k]);
            binary[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == k ? 1 : 0;
        }
        try {
            total += roc_auc(scores, binary);
        } catch (const std::invalid_argument&) {
            return std::numeric_limits<double>::quiet_NaN();  // class missing from labels
        }
    }
    return total / static_cast<double>(K);
}

EvalOutputs run_eval(const IETNetConfig& mcfg, const NamedParams<float>& params,
                     const Tensor<float>& x, std::int64_t micro_batch) {
    if (x.rank() != 3) {
        throw std::invalid_argument("run_eval: input must be (N, channels, T), got " + shape_str(x.shape));
    }
    if (micro_batch < 1) throw std::invalid_argument("run_eval: micro_batch must be >= 1");
    const std::int64_t N = x.shape[0], C = x.shape[1];
    EvalOutputs out{Tensor<float>({N, mcfg.classes}), Tensor<float>({N, C, mcfg.classes}),
                    Tensor<float>({N, C, mcfg.tcn_filters})};
    std::vector<std::size_t> identity(static_cast<std::size_t>(N));
    std::iota(identity.begin(), identity.end(), 0);
    Rng unused(0);  // dropout is inactive in eval mode
    for (std::int64_t at = 0; at < N; at += micro_batch) {
        const std::int64_t m = std::min(micro_batch, N - at);
        Tensor<float> xb = take_rows(x, identity, static_cast<std::size_t>(at),
                                     static_cast<std::size_t>(at + m));
        Graph<float> g;
        ModelNodes nodes = build_model(g, mcfg, params, g.input(std::move(xb)), false, unused);
        const Tensor<float> probs = g.value(g.softmax(nodes.logits, 1));
        const Tensor<float>& gate = g.value(nodes.gate);
        const Tensor<float>& feats = g.value(nodes.features);
        std::copy(probs.data.begin(), probs.data.end(),
                  out.probs.data.begin() + at * mcfg.classes);
        std::copy(gate.data.begin(), gate.data.end(),
                  out.gate.data.begin() + at * C * mcfg.classes);
        std::copy(feats.data.begin(), feats.data.end(),
                  out.features.data.begin() + at * C * mcfg.tcn_filters);
    }
    return out;
}

FitResult fit(const IETNetConfig& mcfg, const TrainConfig& tcfg, const Tensor<float>& x_train,
              const std::vector<int>& y_train, const Tensor<float>& x_val,
              const std::vector<int>& y_val,
              const std::function<void(const EpochStats&)>& on_epoch) {
    mcfg.validate();
    if (x_train.rank() != 3 || x_train.shape[0] != static_cast<std::int64_t>(y_train.size())) {
        throw std::invalid_argument("fit: training set shape " + shape_str(x_train.shape) +
                                    " does not match " + std::to_string(y_train.size()) + " labels");
    }
    if (x_val.rank() != 3 || x_val.shape[0] != static_cast<std::int64_t>(y_val.size())) {
        throw std::invalid_argument("fit: validation set shape " + shape_str(x_val.shape) +
                                    " does not match " + std::to_string(y_val.size()) + " labels");
    }
    if (tcfg.epochs < 1 || tcfg.batch_size < 1 || tcfg.micro_batch < 1 || tcfg.patience < 1) {
        throw std::invalid_argument("fit: epochs, batch_size, micro_batch, patience must be >= 1");
    }
    for (int y : y_train) {
        if (y < 0 || y >= mcfg.classes) {
            throw std::invalid_argument("fit: training label " + std::to_string(y) + " out of range");
        }
    }

    NamedParams<float> params = init_params<float>(mcfg, derive_seed(tcfg.seed, 1));
    AdamState<float> opt = AdamState<float>::zeros_like(params);
    Rng shuffle_rng(derive_seed(tcfg.seed, 2));
    Rng dropout_rng(derive_seed(tcfg.seed, 3));

    FitResult result;
    result.best_params = params;
    result.best_opt = opt;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    result.stop_reason = "max_epochs";

    const std::size_t n_train = y_train.size();
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::int64_t epochs_since_best = 0;

    for (std::int64_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double train_loss_sum = 0.0;
        double last_lr = 0.0;

        for (std::size_t at = 0; at < n_train; at += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t stop = std::min(n_train, at + static_cast<std::size_t>(tcfg.batch_size));
            const double batch_n = static_cast<double>(stop - at);

            std::vector<Tensor<float>> grads;
            grads.reserve(params.tensors.size());
            for (const auto& t : params.tensors) grads.push_back(Tensor<float>::zeros(t.shape));

            for (std::size_t mb = at; mb < stop; mb += static_cast<std::size_t>(tcfg.micro_batch)) {
                const std::size_t mb_stop = std::min(stop, mb + static_cast<std::size_t>(tcfg.micro_batch));
                const std::size_t m = mb_stop - mb;
                Tensor<float> xb = take_rows(x_train, order, mb, mb_stop);
                std::vector<int> yb(m);
                for (std::size_t i = 0; i < m; ++i) yb[i] = y_train[order[mb + i]];

                Graph<float> g;
                ModelNodes nodes = build_model(g, mcfg, params, g.input(std::move(xb)), true, dropout_rng);
                NodeId loss = cross_entropy(g, nodes.logits, yb);
                const double loss_val = static_cast<double>(g.value(loss).item());
                train_loss_sum += loss_val * static_cast<double>(m);

                GradientMap<float> gm = g.backward(loss);
                const float w = static_cast<float>(static_cast<double>(m) / batch_n);
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    if (!gm.has(nodes.params[p])) continue;  // e.g. unused skip weights
                    const Tensor<float>& gp = gm.at(nodes.params[p]);
                    for (std::int64_t i = 0; i < gp.size(); ++i) grads[p][i] += w * gp[i];
                }
            }

            last_lr = tcfg.lr.at(opt.step + 1);
            adam_step(params, grads, opt, last_lr);
        }

        EvalOutputs vo = run_eval(mcfg, params, x_val, tcfg.micro_batch);
        EpochStats stats;
        stats.epoch = epoch;
        stats.step = opt.step;
        stats.lr = last_lr;
        stats.train_loss = train_loss_sum / static_cast<double>(n_train);
        stats.val_loss = nll_from_probs(vo.probs, y_val);
        stats.val_auc = macro_auc(vo.probs, y_val);
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);

        if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
            result.stop_reason = "diverged";
            break;
        }
        if (stats.val_loss < result.best_val_loss) {
            result.best_val_loss = stats.val_loss;
            result.best_epoch = epoch;
            result.best_params = params;
            result.best_opt = opt;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if (epochs_since_best >= tcfg.patience) {
                result.stop_reason = "early_stop";
                break;
            }
        }
    }
    return result;
}

template NodeId cross_entropy<float>(Graph<float>&, NodeId, const std::vector<int>&);
template NodeId cross_entropy<double>(Graph<double>&, NodeId, const std::vector<int>&);
template void adam_step<float>(NamedParams<float>&, const std::vector<Tensor<float>>&,
                               AdamState<float>&, double);
template void adam_step<double>(NamedParams<double>&, const std::vector<Tensor<double>>&,
                                AdamState<double>&, double);

}  // namespace ietnet
