#include "ietnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ietnet {

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels, const char* fn) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument(std::string(fn) + ": " + std::to_string(scores.size()) +
                                    " scores vs " + std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) {
        throw std::invalid_argument(std::string(fn) + ": empty input");
    }
    std::int64_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw std::invalid_argument(std::string(fn) + ": labels must be 0 or 1, got " +
                                        std::to_string(labels[i]));
        }
        if (!std::isfinite(scores[i])) {
            throw std::invalid_argument(std::string(fn) + ": non-finite score at index " +
                                        std::to_string(i));
        }
        pos += labels[i];
    }
    if (pos == 0 || pos == static_cast<std::int64_t>(labels.size())) {
        throw std::invalid_argument(std::string(fn) + ": both classes must be present");
    }
}

// Indices sorted by score descending; used by all three ROC routines so
// they walk the curve identically.
std::vector<std::size_t> rank_desc(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_binary(scores, labels, "roc_auc");
    const auto idx = rank_desc(scores);
    std::int64_t P = 0, N = 0;
    for (int l : labels) (l == 1 ? P : N) += 1;

    // Twice the area in units of (positives x negatives); stays integral so
    // the one division below is the only rounding step.
    std::int64_t area2 = 0;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        std::int64_t dtp = 0, dfp = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] == 1 ? dtp : dfp) += 1;
            ++j;
        }
        area2 += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        i = j;
    }
    (void)fp;
    return static_cast<double>(area2) / static_cast<double>(2 * P * N);
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_binary(scores, labels, "roc_curve");
    const auto idx = rank_desc(scores);
    std::int64_t P = 0, N = 0;
    for (int l : labels) (l == 1 ? P : N) += 1;

    RocCurve curve;
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());
    curve.tpr.push_back(0.0);
    curve.fpr.push_back(0.0);

    // Same integral trapezoid accumulation as roc_auc, so the two agree
    // bit for bit.
    std::int64_t area2 = 0;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double thr = scores[idx[i]];
        std::size_t j = i;
        std::int64_t dtp = 0, dfp = 0;
        while (j < idx.size() && scores[idx[j]] == thr) {
            (labels[idx[j]] == 1 ? dtp : dfp) += 1;
            ++j;
        }
        area2 += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        curve.thresholds.push_back(thr);
        curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(P));
        curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(N));
        i = j;
    }
    curve.auc = static_cast<double>(area2) / static_cast<double>(2 * P * N);
    return curve;
}

double youden_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_binary(scores, labels, "youden_threshold");
    const auto idx = rank_desc(scores);
    std::int64_t P = 0, N = 0;
    for (int l : labels) (l == 1 ? P : N) += 1;

    double best_j = -1.0;
    double best_thr = std::numeric_limits<double>::infinity();
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double thr = scores[idx[i]];
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == thr) {
            (labels[idx[j]] == 1 ? tp : fp) += 1;
            ++j;
        }
        const double jstat = static_cast<double>(tp) / static_cast<double>(P) -
                             static_cast<double>(fp) / static_cast<double>(N);
        // Strict improvement only: earlier (higher) cutoffs win ties.
        if (jstat > best_j) {
            best_j = jstat;
            best_thr = thr;
        }
        i = j;
    }
    return best_thr;
}

Confusion confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold) {
    check_binary(scores, labels, "confusion_at");
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1) {
            (predicted ? c.tp : c.fn) += 1;
        } else {
            (predicted ? c.fp : c.tn) += 1;
        }
    }
    return c;
}

double ap_at_k(const std::vector<double>& channel_scores, const std::vector<int>& ground_truth,
               std::int64_t k, bool clip_norm) {
    const std::int64_t C = static_cast<std::int64_t>(channel_scores.size());
    if (C == 0) throw std::invalid_argument("ap_at_k: no channels");
    if (k < 1 || k > C) {
        throw std::invalid_argument("ap_at_k: k = " + std::to_string(k) + " out of range for " +
                                    std::to_string(C) + " channels");
    }
    if (ground_truth.empty()) throw std::invalid_argument("ap_at_k: empty ground truth");
    std::vector<bool> is_gt(static_cast<std::size_t>(C), false);
    for (int c : ground_truth) {
        if (c < 0 || c >= C) {
            throw std::invalid_argument("ap_at_k: ground-truth channel " + std::to_string(c) +
                                        " out of range");
        }
        if (is_gt[static_cast<std::size_t>(c)]) {
            throw std::invalid_argument("ap_at_k: duplicate ground-truth channel " + std::to_string(c));
        }
        is_gt[static_cast<std::size_t>(c)] = true;
    }

    // Descending by score; stable_sort keeps lower channel index first on ties.
    std::vector<std::size_t> order(static_cast<std::size_t>(C));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&channel_scores](std::size_t a, std::size_t b) {
        return channel_scores[a] > channel_scores[b];
    });

    double sum = 0.0;
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < k; ++i) {
        if (is_gt[order[static_cast<std::size_t>(i)]]) {
            hits += 1;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    const std::int64_t gtp = static_cast<std::int64_t>(ground_truth.size());
    const std::int64_t norm = clip_norm ? std::min(k, gtp) : gtp;
    return sum / static_cast<double>(norm);
}

}  // namespace ietnet
