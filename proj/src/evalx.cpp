#include "ietnet/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ietnet {

namespace {

void check_predictions(const std::vector<int>& predicted, std::int64_t n, int num_classes,
                       const char* fn) {
    if (static_cast<std::int64_t>(predicted.size()) != n)
        throw std::invalid_argument(std::string(fn) + ": " + std::to_string(predicted.size()) +
                                    " predictions for " + std::to_string(n) + " samples");
    for (int p : predicted)
        if (p < 0 || p >= num_classes)
            throw std::invalid_argument(std::string(fn) + ": predicted class " + std::to_string(p) +
                                        " outside [0, " + std::to_string(num_classes) + ")");
}

}  // namespace

std::vector<int> predict_labels(const Tensor<float>& probs) {
    if (probs.rank() != 2)
        throw std::invalid_argument("predict_labels: expected (samples, classes), got " +
                                    shape_str(probs.shape));
    const std::int64_t N = probs.shape[0], K = probs.shape[1];
    std::vector<int> out(static_cast<std::size_t>(N));
    for (std::int64_t i = 0; i < N; ++i) {
        const float* row = probs.data.data() + i * K;
        int best = 0;
        for (std::int64_t k = 1; k < K; ++k)
            if (row[k] > row[best]) best = static_cast<int>(k);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<int>& truth,
                                                        const std::vector<int>& predicted,
                                                        int num_classes) {
    if (truth.size() != predicted.size())
        throw std::invalid_argument("confusion_matrix: " + std::to_string(truth.size()) +
                                    " labels vs " + std::to_string(predicted.size()) +
                                    " predictions");
    check_predictions(predicted, static_cast<std::int64_t>(predicted.size()), num_classes,
                      "confusion_matrix");
    std::vector<std::vector<std::int64_t>> m(
        static_cast<std::size_t>(num_classes),
        std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes)
            throw std::invalid_argument("confusion_matrix: label " + std::to_string(truth[i]) +
                                        " outside [0, " + std::to_string(num_classes) + ")");
        m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])] += 1;
    }
    return m;
}

GateHeatmap aggregate_gate(const Tensor<float>& gate, const std::vector<int>& predicted,
                           int num_classes) {
    if (gate.rank() != 3)
        throw std::invalid_argument("aggregate_gate: expected (samples, channels, classes), got " +
                                    shape_str(gate.shape));
    const std::int64_t N = gate.shape[0], C = gate.shape[1], K = gate.shape[2];
    if (K != num_classes)
        throw std::invalid_argument("aggregate_gate: gate has " + std::to_string(K) +
                                    " class columns, expected " + std::to_string(num_classes));
    check_predictions(predicted, N, num_classes, "aggregate_gate");

    GateHeatmap h;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<double> sum(static_cast<std::size_t>(C), 0.0);
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < N; ++i) {
            if (predicted[static_cast<std::size_t>(i)] != k) continue;
            ++count;
            const float* g = gate.data.data() + (i * C) * K;
            for (std::int64_t c = 0; c < C; ++c) sum[static_cast<std::size_t>(c)] += g[c * K + k];
        }
        if (count == 0) {
            h.empty_classes.push_back(k);
            continue;
        }
        for (double& s : sum) s /= static_cast<double>(count);
        h.classes.push_back(k);
        h.mean_gate.push_back(std::move(sum));
        h.group_sizes.push_back(count);
    }
    return h;
}

APReport map_at_k_report(const Tensor<float>& gate, const std::vector<int>& predicted,
                         const std::map<int, std::vector<int>>& ground_truth, bool clip_norm) {
    if (gate.rank() != 3)
        throw std::invalid_argument("map_at_k_report: expected (samples, channels, classes), got " +
                                    shape_str(gate.shape));
    const std::int64_t N = gate.shape[0], C = gate.shape[1], K = gate.shape[2];
    check_predictions(predicted, N, static_cast<int>(K), "map_at_k_report");
    if (ground_truth.empty())
        throw std::invalid_argument("map_at_k_report: no class has ground-truth channels");

    std::int64_t max_k = 0;
    for (const auto& [cls, chans] : ground_truth) {
        if (cls < 0 || cls >= K)
            throw std::invalid_argument("map_at_k_report: ground truth refers to class " +
                                        std::to_string(cls) + " outside [0, " + std::to_string(K) +
                                        ")");
        if (chans.empty())
            throw std::invalid_argument("map_at_k_report: empty ground truth for class " +
                                        std::to_string(cls));
        max_k = std::max(max_k, static_cast<std::int64_t>(chans.size()));
    }

    APReport rep;
    rep.clip_norm = clip_norm;
    rep.ks.resize(static_cast<std::size_t>(max_k));
    for (std::int64_t k = 0; k < max_k; ++k) rep.ks[static_cast<std::size_t>(k)] = k + 1;
    std::vector<double> sum(static_cast<std::size_t>(max_k), 0.0);
    std::vector<double> sumsq(static_cast<std::size_t>(max_k), 0.0);
    rep.counts.assign(static_cast<std::size_t>(max_k), 0);

    std::vector<double> scores(static_cast<std::size_t>(C));
    for (std::int64_t i = 0; i < N; ++i) {
        const int pred = predicted[static_cast<std::size_t>(i)];
        const auto it = ground_truth.find(pred);
        if (it == ground_truth.end()) continue;
        rep.samples += 1;
        const float* g = gate.data.data() + (i * C) * K;
        for (std::int64_t c = 0; c < C; ++c) scores[static_cast<std::size_t>(c)] = g[c * K + pred];
        const std::int64_t top = static_cast<std::int64_t>(it->second.size());
        for (std::int64_t k = 1; k <= top; ++k) {
            const double ap = ap_at_k(scores, it->second, k, clip_norm);
            sum[static_cast<std::size_t>(k - 1)] += ap;
            sumsq[static_cast<std::size_t>(k - 1)] += ap * ap;
            rep.counts[static_cast<std::size_t>(k - 1)] += 1;
        }
    }
    if (rep.samples == 0)
        throw std::runtime_error(
            "map_at_k_report: no sample was predicted as a class with ground-truth channels");

    rep.mean.resize(static_cast<std::size_t>(max_k));
    rep.stddev.resize(static_cast<std::size_t>(max_k));
    for (std::int64_t k = 0; k < max_k; ++k) {
        const std::size_t idx = static_cast<std::size_t>(k);
        const double n = static_cast<double>(rep.counts[idx]);
        if (rep.counts[idx] == 0) {
            rep.mean[idx] = rep.stddev[idx] = 0.0;
            continue;
        }
        const double mean = sum[idx] / n;
        rep.mean[idx] = mean;
        rep.stddev[idx] = std::sqrt(std::max(sumsq[idx] / n - mean * mean, 0.0));
    }
    return rep;
}

}  // namespace ietnet
