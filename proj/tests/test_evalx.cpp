#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "ietnet/evalx.hpp"
#include "ietnet/rng.hpp"

using namespace ietnet;

namespace {

// Straight-from-the-definition oracle: walk the ranking, add precision at
// every hit position within the top k.
double ap_oracle(const std::vector<int>& ranking, const std::set<int>& gt, std::int64_t k,
                 bool clip) {
    double sum = 0.0;
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < k; ++i) {
        if (gt.count(ranking[static_cast<std::size_t>(i)])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    const std::int64_t norm = clip ? std::min<std::int64_t>(k, static_cast<std::int64_t>(gt.size()))
                                   : static_cast<std::int64_t>(gt.size());
    return sum / static_cast<double>(norm);
}

// Distinct descending scores that realize a given ranking.
std::vector<double> scores_for_ranking(const std::vector<int>& ranking) {
    std::vector<double> s(ranking.size());
    for (std::size_t i = 0; i < ranking.size(); ++i)
        s[static_cast<std::size_t>(ranking[i])] = static_cast<double>(ranking.size() - i);
    return s;
}

}  // namespace

TEST_CASE("predict_labels takes the argmax, ties to the lower class") {
    Tensor<float> probs({3, 3});
    probs.data = {0.2f, 0.5f, 0.3f, 0.4f, 0.4f, 0.2f, 0.1f, 0.2f, 0.7f};
    CHECK(predict_labels(probs) == std::vector<int>{1, 0, 2});
    CHECK_THROWS_AS(predict_labels(Tensor<float>({3})), std::invalid_argument);
}

TEST_CASE("confusion matrix counts every sample exactly once") {
    const std::vector<int> truth = {0, 0, 1, 1, 2, 2, 2};
    const std::vector<int> pred = {0, 1, 1, 1, 2, 0, 2};
    const auto m = confusion_matrix(truth, pred, 3);
    CHECK(m[0][0] == 1);
    CHECK(m[0][1] == 1);
    CHECK(m[1][1] == 2);
    CHECK(m[2][0] == 1);
    CHECK(m[2][2] == 2);
    std::int64_t total = 0;
    for (const auto& row : m)
        for (std::int64_t v : row) total += v;
    CHECK(total == 7);
    CHECK_THROWS_AS(confusion_matrix({0, 3}, {0, 0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(confusion_matrix({0, 1}, {0, 3}, 3), std::invalid_argument);
    CHECK_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), std::invalid_argument);
}

TEST_CASE("roc_curve walks monotone operating points and agrees with roc_auc") {
    const std::vector<double> s = {0.9, 0.8, 0.7, 0.6, 0.4, 0.3};
    const std::vector<int> y = {1, 1, 0, 1, 0, 0};
    const RocCurve curve = roc_curve(s, y);
    CHECK(curve.auc == doctest::Approx(8.0 / 9.0));
    CHECK(curve.auc == roc_auc(s, y));
    REQUIRE(curve.thresholds.size() == 7);
    CHECK(std::isinf(curve.thresholds[0]));
    CHECK(curve.tpr.front() == 0.0);
    CHECK(curve.fpr.front() == 0.0);
    CHECK(curve.tpr.back() == 1.0);
    CHECK(curve.fpr.back() == 1.0);
    CHECK(curve.thresholds.back() == 0.3);

    // Tie-heavy random inputs: both routines share one curve walk, so the
    // areas must match bit for bit; trapezoid over the emitted points must
    // agree too.
    Rng rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.next_below(18));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool p = false, q = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng.next_below(5)) / 4.0;
            labels[i] = static_cast<int>(rng.next_below(2));
            (labels[i] ? p : q) = true;
        }
        if (!p || !q) continue;
        const RocCurve c = roc_curve(scores, labels);
        CHECK(c.auc == roc_auc(scores, labels));
        double trap = 0.0;
        for (std::size_t i = 1; i < c.fpr.size(); ++i) {
            CHECK(c.fpr[i] >= c.fpr[i - 1]);
            CHECK(c.tpr[i] >= c.tpr[i - 1]);
            CHECK(c.thresholds[i] < c.thresholds[i - 1]);
            trap += (c.fpr[i] - c.fpr[i - 1]) * (c.tpr[i] + c.tpr[i - 1]) / 2.0;
        }
        CHECK(trap == doctest::Approx(c.auc).epsilon(1e-12));
    }
}

TEST_CASE("aggregate_gate averages gate columns within predicted classes") {
    // Single sample: the heatmap is its own gate column.
    Tensor<float> one({1, 3, 2});
    one.data = {0.6f, 0.1f, 0.3f, 0.2f, 0.1f, 0.7f};
    const GateHeatmap solo = aggregate_gate(one, {1}, 2);
    REQUIRE(solo.classes == std::vector<int>{1});
    CHECK(solo.mean_gate[0][0] == doctest::Approx(0.1));
    CHECK(solo.mean_gate[0][1] == doctest::Approx(0.2));
    CHECK(solo.mean_gate[0][2] == doctest::Approx(0.7));
    CHECK(solo.empty_classes == std::vector<int>{0});
    CHECK(solo.group_sizes == std::vector<std::int64_t>{1});

    // Two one-hot samples average to a uniform row.
    Tensor<float> pair({2, 2, 1});
    pair.data = {1.0f, 0.0f, 0.0f, 1.0f};
    const GateHeatmap h = aggregate_gate(pair, {0, 0}, 1);
    REQUIRE(h.classes == std::vector<int>{0});
    CHECK(h.mean_gate[0][0] == doctest::Approx(0.5));
    CHECK(h.mean_gate[0][1] == doctest::Approx(0.5));

    // Random distributions: aggregated rows stay distributions.
    Rng rng(7);
    const std::int64_t N = 40, C = 6, K = 3;
    Tensor<float> gate({N, C, K});
    std::vector<int> pred(static_cast<std::size_t>(N));
    for (std::int64_t i = 0; i < N; ++i) {
        pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(K));
        for (std::int64_t k = 0; k < K; ++k) {
            double total = 0.0;
            std::vector<double> raw(static_cast<std::size_t>(C));
            for (auto& v : raw) {
                v = -std::log(1.0 - rng.uniform());
                total += v;
            }
            for (std::int64_t c = 0; c < C; ++c)
                gate.data[static_cast<std::size_t>((i * C + c) * K + k)] =
                    static_cast<float>(raw[static_cast<std::size_t>(c)] / total);
        }
    }
    const GateHeatmap hh = aggregate_gate(gate, pred, static_cast<int>(K));
    std::int64_t grouped = 0;
    for (std::size_t r = 0; r < hh.classes.size(); ++r) {
        double sum = 0.0;
        for (double v : hh.mean_gate[r]) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        grouped += hh.group_sizes[r];
    }
    CHECK(grouped == N);
}

TEST_CASE("ap_at_k matches brute force on every ranking and ground-truth set") {
    for (int C = 2; C <= 5; ++C) {
        std::vector<int> ranking(static_cast<std::size_t>(C));
        std::iota(ranking.begin(), ranking.end(), 0);
        do {
            const std::vector<double> scores = scores_for_ranking(ranking);
            for (int mask = 1; mask < (1 << C); ++mask) {
                std::set<int> gt_set;
                std::vector<int> gt_vec;
                for (int c = 0; c < C; ++c)
                    if (mask & (1 << c)) {
                        gt_set.insert(c);
                        gt_vec.push_back(c);
                    }
                for (std::int64_t k = 1; k <= C; ++k) {
                    CHECK(ap_at_k(scores, gt_vec, k, true) == ap_oracle(ranking, gt_set, k, true));
                    CHECK(ap_at_k(scores, gt_vec, k, false) == ap_oracle(ranking, gt_set, k, false));
                }
            }
        } while (std::next_permutation(ranking.begin(), ranking.end()));
    }
}

TEST_CASE("map_at_k_report summarizes per-sample rankings") {
    // Gates exactly one-hot on the ground truth: perfect precision, no spread.
    const std::int64_t C = 6;
    Tensor<float> gate({3, C, 2});
    const std::vector<int> gt = {1, 3, 4};
    for (std::int64_t i = 0; i < 3; ++i)
        for (int c : gt) gate.data[static_cast<std::size_t>((i * C + c) * 2 + 1)] = 1.0f / 3.0f;
    const APReport rep = map_at_k_report(gate, {1, 1, 1}, {{1, gt}}, true);
    REQUIRE(rep.ks == std::vector<std::int64_t>{1, 2, 3});
    CHECK(rep.samples == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(rep.mean[k] == doctest::Approx(1.0));
        CHECK(rep.stddev[k] == doctest::Approx(0.0));
        CHECK(rep.counts[k] == 3);
    }

    // Paper-style normalization divides by |GT| at every k.
    const APReport paper = map_at_k_report(gate, {1, 1, 1}, {{1, gt}}, false);
    CHECK(paper.mean[0] == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(paper.clip_norm);

    // Samples predicted as classes without ground truth do not qualify.
    CHECK_THROWS_WITH_AS(map_at_k_report(gate, {0, 0, 0}, {{1, gt}}, true),
                         doctest::Contains("no sample"), std::runtime_error);
    CHECK_THROWS_AS(map_at_k_report(gate, {1, 1, 1}, {}, true), std::invalid_argument);
    CHECK_THROWS_AS(map_at_k_report(gate, {1, 1, 1}, {{1, {}}}, true), std::invalid_argument);
}

TEST_CASE("uniform random gates retrieve half the truth at the top rank") {
    // 4 relevant channels out of 8: a uniformly random top pick is relevant
    // with probability 0.5, so clipped AP@1 should average to 0.5.
    const std::int64_t N = 100000, C = 8;
    Tensor<float> gate({N, C, 1});
    Rng rng(2024);
    for (auto& v : gate.data) v = static_cast<float>(rng.uniform());
    const std::vector<int> pred(static_cast<std::size_t>(N), 0);
    const APReport rep = map_at_k_report(gate, pred, {{0, {0, 1, 2, 3}}}, true);
    CHECK(rep.samples == N);
    CHECK(rep.mean[0] == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(rep.mean[0] - 0.5) <= 0.01);
}
