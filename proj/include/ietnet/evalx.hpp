#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ietnet/metrics.hpp"
#include "ietnet/tensor.hpp"

namespace ietnet {

/// Argmax class per row of (N, K) probabilities; ties go to the lower class
/// index.
std::vector<int> predict_labels(const Tensor<float>& probs);

/// K x K counts, rows = true class, columns = predicted class. Entries sum
/// to the number of samples.
std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<int>& truth,
                                                        const std::vector<int>& predicted,
                                                        int num_classes);

/// Mean gate per channel over samples grouped by predicted class: row k is
/// the average of G[:, k] across samples predicted as k, so each row stays
/// a distribution over channels. Classes nobody was predicted as are listed
/// in `empty_classes` and omitted from the rows.
struct GateHeatmap {
    std::vector<int> classes;                    // one entry per emitted row
    std::vector<std::vector<double>> mean_gate;  // rows match `classes`, length C
    std::vector<std::int64_t> group_sizes;
    std::vector<int> empty_classes;
};

GateHeatmap aggregate_gate(const Tensor<float>& gate, const std::vector<int>& predicted,
                           int num_classes);

/// AP@k summary across samples predicted as a class with known ground-truth
/// channels. Each such sample ranks channels by its gate column for the
/// predicted class and contributes AP@k for k = 1..|that class's ground
/// truth|; mean and population standard deviation are reported per k.
struct APReport {
    std::vector<std::int64_t> ks;
    std::vector<double> mean, stddev;
    std::vector<std::int64_t> counts;  // samples contributing at each k
    std::int64_t samples = 0;          // qualifying samples overall
    bool clip_norm = true;
};

APReport map_at_k_report(const Tensor<float>& gate, const std::vector<int>& predicted,
                         const std::map<int, std::vector<int>>& ground_truth, bool clip_norm);

}  // namespace ietnet
