#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ietnet/model.hpp"

namespace ietnet {

/// Mean over the batch of -log(softmax(logits)[i, labels[i]]), with the
/// selected probability floored at 1e-12 before the log.
template <typename T>
NodeId cross_entropy(Graph<T>& g, NodeId logits, const std::vector<int>& labels);

/// Warmup-then-inverse-sqrt learning rate, clamped to [lr_min, lr_max]:
///   lr(s) = clamp(lr_max * min(s / warmup, sqrt(warmup / s)))
/// peaking exactly at s = warmup. With restart_every > 0 the step count
/// wraps, giving periodic warm restarts.
struct LrSchedule {
    double lr_min = 1e-4;
    double lr_max = 1e-3;
    std::int64_t warmup = 200;
    std::int64_t restart_every = 0;

    double at(std::int64_t step) const;
};

/// Adam first/second moment estimates, aligned with a NamedParams order.
template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor<T>> m, v;

    static AdamState zeros_like(const NamedParams<T>& params) {
        AdamState st;
        st.m.reserve(params.tensors.size());
        st.v.reserve(params.tensors.size());
        for (const auto& t : params.tensors) {
            st.m.push_back(Tensor<T>::zeros(t.shape));
            st.v.push_back(Tensor<T>::zeros(t.shape));
        }
        return st;
    }
};

/// One bias-corrected Adam update in place. Throws std::runtime_error naming
/// the offending parameter if a gradient is not finite.
template <typename T>
void adam_step(NamedParams<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& st,
               double lr);

struct TrainConfig {
    std::int64_t epochs = 200;
    std::int64_t batch_size = 32;
    /// Examples per forward/backward pass; gradients are accumulated across
    /// micro batches (weighted by their share of the batch) before each
    /// optimizer step, trading speed for a flat memory profile.
    std::int64_t micro_batch = 4;
    std::int64_t patience = 20;
    LrSchedule lr;
    std::uint64_t seed = 0;
};

struct EpochStats {
    std::int64_t epoch = 0;  // 1-based
    std::int64_t step = 0;   // optimizer steps taken so far
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auc = 0.0;  // NaN when the validation labels are one-class
};

struct FitResult {
    NamedParams<float> best_params;
    AdamState<float> best_opt;
    std::int64_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::vector<EpochStats> history;
    std::string stop_reason;  // "max_epochs" | "early_stop" | "diverged"
};

/// Trains from fresh glorot weights. X tensors are (N, channels, T) with
/// integer class labels. Per-epoch stats are passed to `on_epoch` (may be
/// null). The best validation-loss weights are retained and returned; a
/// non-finite loss stops training without discarding them.
FitResult fit(const IETNetConfig& mcfg, const TrainConfig& tcfg, const Tensor<float>& x_train,
              const std::vector<int>& y_train, const Tensor<float>& x_val,
              const std::vector<int>& y_val,
              const std::function<void(const EpochStats&)>& on_epoch);

struct EvalOutputs {
    Tensor<float> probs;     // (N, classes)
    Tensor<float> gate;      // (N, channels, classes)
    Tensor<float> features;  // (N, channels, tcn_filters)
};

/// Eval-mode forward over a whole set, a few samples at a time. Every
/// sample is processed independently, so outputs do not depend on
/// micro_batch.
EvalOutputs run_eval(const IETNetConfig& mcfg, const NamedParams<float>& params,
                     const Tensor<float>& x, std::int64_t micro_batch);

/// Macro-averaged one-vs-rest ROC AUC from (N, classes) probabilities.
/// Returns NaN if any class is absent from the labels.
double macro_auc(const Tensor<float>& probs, const std::vector<int>& labels);

/// Mean of -log p(label), floored at 1e-12, straight from probabilities.
double nll_from_probs(const Tensor<float>& probs, const std::vector<int>& labels);

}  // namespace ietnet
