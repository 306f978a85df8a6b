#pragma once

#include <cstdint>
#include <vector>

namespace ietnet {

/// Area under the ROC curve for binary labels (0/1) and arbitrary scores.
/// Computed by trapezoidal accumulation over tied-score groups with a single
/// final division, which makes it exactly the Mann-Whitney statistic
/// (concordant + 0.5 * tied pairs) / (positives * negatives).
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// ROC operating points, one per distinct score walked in descending order,
/// where a sample is predicted positive when score >= threshold. The first
/// point is (+inf, 0, 0); the last is (min score, 1, 1).
struct RocCurve {
    std::vector<double> thresholds;
    std::vector<double> tpr, fpr;
    double auc = 0.0;  // trapezoidal area; identical to roc_auc()
};

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

/// Score cutoff maximizing Youden's J = tpr - fpr, where a sample is
/// predicted positive when score >= cutoff. Ties in J resolve to the higher
/// cutoff.
double youden_threshold(const std::vector<double>& scores, const std::vector<int>& labels);

struct Confusion {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy() const {
        return static_cast<double>(tp + tn) / static_cast<double>(tp + tn + fp + fn);
    }
};

/// Confusion counts when predicting positive at score >= threshold.
Confusion confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold);

/// Average precision over the top k of a ranked channel list.
///
/// Channels are ranked by score, descending; equal scores rank the lower
/// channel index first. Precision is summed at each of the top-k positions
/// holding a ground-truth channel. The sum is divided by |ground_truth|
/// when `clip_norm` is false, or by min(k, |ground_truth|) when true (so a
/// perfect top-k ranking always scores 1).
double ap_at_k(const std::vector<double>& channel_scores, const std::vector<int>& ground_truth,
               std::int64_t k, bool clip_norm);

}  // namespace ietnet
