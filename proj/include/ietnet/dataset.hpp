#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ietnet/nbody.hpp"
#include "ietnet/tensor.hpp"

namespace ietnet {

/// Labeled multivariate time series with split assignments and optional
/// per-class ground-truth channel sets (which channels truly carry the
/// class signal).
struct MVTSDataset {
    Tensor<float> X;  // (N, C, T)
    std::vector<int> y;
    std::vector<std::string> channel_names;
    std::vector<std::string> class_names;
    std::vector<std::string> split;                // "train" | "val" | "test" per sample
    std::map<int, std::vector<int>> ground_truth;  // class -> sorted channel indices
    std::vector<double> norm_mean, norm_std;       // per channel; empty before normalization

    void validate() const;
    std::vector<std::size_t> indices_of(const std::string& split_name) const;
    std::vector<int> labels_of(const std::vector<std::size_t>& idx) const;
    Tensor<float> rows_of(const std::vector<std::size_t>& idx) const;
};

/// Recipe for the two-class gravitational benchmark. Class 0 ("4body")
/// samples take all eight position channels (x1,x2,y1,y2,x3,x4,y3,y4) from
/// one 4-body run. Class 1 ("2body") samples take x1,x2,y1,y2 from a
/// 2-body run and x3,x4,y3,y4 from an independent 4-body run, so channels
/// {0,1,2,3} are that class's ground truth.
struct NBodyDatasetConfig {
    std::int64_t n_train = 183;
    std::int64_t n_val = 183;
    std::int64_t n_test = 244;
    std::uint64_t seed = 0;
    /// Per-run integrator settings; `masses` and `seed` inside are ignored
    /// (the class recipes below and per-sample derived seeds are used).
    NBodyConfig sim;
    std::vector<double> masses_2body = {1.0, 1.0 / 3.14159265358979323846};
    std::vector<double> masses_4body = {1.0, 1.0 / 3.14159265358979323846,
                                        1.0 / 1.41421356237309504880,
                                        1.0 / 2.71828182845904523536};
    bool normalize = true;
};

MVTSDataset build_nbody_dataset(const NBodyDatasetConfig& cfg);

/// Per-channel z-score using training-split statistics (std floored at
/// 1e-8), applied to every split. Records the stats on the dataset.
void normalize_by_train(MVTSDataset& d);

/// New dataset without the named channels; ground-truth sets are re-indexed
/// (and shrink if they referenced a dropped channel; a class loses its entry
/// entirely when every listed channel was dropped).
MVTSDataset drop_channels(const MVTSDataset& d, const std::vector<std::string>& names);

/// Directory format: meta.json (names, labels, splits, ground truth,
/// normalization stats, shape) + X.bin (one framed float32 tensor).
void save_dataset(const MVTSDataset& d, const std::string& dir);
MVTSDataset load_dataset(const std::string& dir);

/// CSV interchange: one header row of channel names, then each sample as a
/// block of T rows (one per time step). The JSON sidecar carries labels,
/// class/channel names, splits, per-sample row counts, and ground truth.
void export_csv(const MVTSDataset& d, const std::string& csv_path, const std::string& sidecar_path);

/// Parses and validates; with `normalize`, z-scores by the training split.
MVTSDataset import_csv(const std::string& csv_path, const std::string& sidecar_path, bool normalize);

}  // namespace ietnet
