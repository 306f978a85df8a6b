#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ietnet/finite_diff.hpp"
#include "ietnet/trainer.hpp"

using namespace ietnet;

namespace {

using TD = Tensor<double>;

IETNetConfig smoke_config() {
    IETNetConfig cfg;
    cfg.channels = 2;
    cfg.classes = 2;
    cfg.tcn_filters = 4;
    cfg.kernel_size = 2;
    cfg.dilations = {1, 2};
    cfg.d_model = 4;
    cfg.heads = 1;
    cfg.dropout = 0.1;
    return cfg;
}

// Two trivially separable classes: channel 0 carries the sign of the class.
void separable_set(std::int64_t n, std::int64_t t, std::uint64_t seed, Tensor<float>& x,
                   std::vector<int>& y) {
    Rng rng(seed);
    x = Tensor<float>({n, 2, t});
    y.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        y[static_cast<std::size_t>(i)] = label;
        for (std::int64_t c = 0; c < 2; ++c) {
            for (std::int64_t j = 0; j < t; ++j) {
                double v = 0.3 * rng.normal();
                if (c == 0) v += label == 0 ? 1.0 : -1.0;
                x[(i * 2 + c) * t + j] = static_cast<float>(v);
            }
        }
    }
}

}  // namespace

TEST_CASE("learning rate warms up, peaks, decays, and clamps") {
    LrSchedule lr;  // defaults: 1e-4 .. 1e-3, warmup 200
    CHECK(lr.at(1) == doctest::Approx(1e-4));    // raw 5e-6 clamps to the floor
    CHECK(lr.at(100) == doctest::Approx(5e-4));  // linear warmup
    CHECK(lr.at(200) == doctest::Approx(1e-3));  // peak at the warmup step
    CHECK(lr.at(800) == doctest::Approx(5e-4));  // inverse-sqrt decay
    CHECK(lr.at(20000) == doctest::Approx(1e-4));
    CHECK(lr.at(2000000) == doctest::Approx(1e-4));  // never below the floor
    for (std::int64_t s = 2; s <= 200; ++s) CHECK(lr.at(s) >= lr.at(s - 1));
    for (std::int64_t s = 201; s < 400; ++s) CHECK(lr.at(s) <= lr.at(s - 1));
    CHECK_THROWS_AS(lr.at(0), std::invalid_argument);

    LrSchedule cyc = lr;
    cyc.restart_every = 500;
    CHECK(cyc.at(501) == lr.at(1));
    CHECK(cyc.at(500 + 200) == doctest::Approx(1e-3));
}

TEST_CASE("cross entropy matches closed forms") {
    GraphD g;
    NodeId logits = g.param(TD({2, 2}, {0.0, 0.0, 3.0, -1.0}));
    NodeId loss = cross_entropy(g, logits, {0, 1});
    // Row 0: uniform -> ln 2. Row 1, label 1: -log(sigmoid(-4)).
    const double want = 0.5 * (std::log(2.0) + (std::log(1.0 + std::exp(-4.0)) + 4.0));
    CHECK(g.value(loss).item() == doctest::Approx(want));

    // Gradient is (softmax - onehot) / batch.
    auto gm = g.backward(loss);
    const TD& dl = gm.at(logits);
    CHECK(dl[0] == doctest::Approx((0.5 - 1.0) / 2.0));
    CHECK(dl[1] == doctest::Approx(0.5 / 2.0));
    const double p1 = 1.0 / (1.0 + std::exp(3.0 - (-1.0)));
    CHECK(dl[2] == doctest::Approx((1.0 - p1) / 2.0));
    CHECK(dl[3] == doctest::Approx((p1 - 1.0) / 2.0));

    // And finite differences agree.
    TD point({2, 2}, {0.3, -0.2, 1.0, 0.4});
    auto f = [](const TD& p) {
        GraphD g2;
        return g2.value(cross_entropy(g2, g2.param(p), {0, 1})).item();
    };
    GraphD g3;
    NodeId l3 = g3.param(point);
    auto gm3 = g3.backward(cross_entropy(g3, l3, {0, 1}));
    CHECK(finite_diff_check<double>(point, f, gm3.at(l3), 1e-5) < 1e-6);

    CHECK_THROWS_AS(cross_entropy(g, logits, {0}), std::invalid_argument);
}

TEST_CASE("adam takes the textbook first step") {
    NamedParams<double> p;
    p.add("w", TD({2}, {1.0, -2.0}));
    auto st = AdamState<double>::zeros_like(p);
    std::vector<TD> grads = {TD({2}, {0.5, -1.5})};
    adam_step(p, grads, st, 0.1);
    // Bias correction makes the first update lr * g/(|g| + eps') ~ lr * sign(g).
    CHECK(p.tensors[0][0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    CHECK(p.tensors[0][1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-6));
    CHECK(st.step == 1);

    std::vector<TD> bad = {TD({2}, {0.5, std::nan("")})};
    CHECK_THROWS_WITH_AS(adam_step(p, bad, st, 0.1),
                         doctest::Contains("non-finite gradient for parameter 'w'"),
                         std::runtime_error);
}

TEST_CASE("adam leaves parameters alone on zero gradients and minimizes w^2") {
    NamedParams<double> p;
    p.add("w", TD({1}, {1.0}));
    auto st = AdamState<double>::zeros_like(p);
    adam_step(p, {TD::zeros({1})}, st, 0.1);
    CHECK(p.tensors[0][0] == 1.0);

    // 500 steps of d(w^2)/dw = 2w at lr 1e-2 drive |w| under 1e-2.
    p.tensors[0][0] = 1.0;
    st = AdamState<double>::zeros_like(p);
    for (int i = 0; i < 500; ++i) {
        adam_step(p, {TD({1}, {2.0 * p.tensors[0][0]})}, st, 1e-2);
    }
    CHECK(std::abs(p.tensors[0][0]) < 1e-2);
}

TEST_CASE("run_eval output does not depend on micro batch size") {
    const IETNetConfig cfg = smoke_config();
    auto params = init_params<float>(cfg, 3);
    Tensor<float> x;
    std::vector<int> y;
    separable_set(7, 12, 5, x, y);
    EvalOutputs a = run_eval(cfg, params, x, 1);
    EvalOutputs b = run_eval(cfg, params, x, 3);
    EvalOutputs c = run_eval(cfg, params, x, 7);
    for (std::int64_t i = 0; i < a.probs.size(); ++i) {
        CHECK(a.probs[i] == b.probs[i]);
        CHECK(a.probs[i] == c.probs[i]);
    }
    for (std::int64_t i = 0; i < a.gate.size(); ++i) CHECK(a.gate[i] == b.gate[i]);
}

TEST_CASE("fit learns a separable problem deterministically") {
    const IETNetConfig cfg = smoke_config();
    TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 8;
    tc.micro_batch = 3;
    tc.patience = 12;
    tc.seed = 7;
    tc.lr.warmup = 10;

    Tensor<float> xtr, xval;
    std::vector<int> ytr, yval;
    separable_set(24, 12, 11, xtr, ytr);
    separable_set(8, 12, 13, xval, yval);

    int epochs_seen = 0;
    FitResult r1 = fit(cfg, tc, xtr, ytr, xval, yval, [&](const EpochStats& s) {
        ++epochs_seen;
        CHECK(s.epoch == epochs_seen);
        CHECK(s.lr > 0.0);
    });
    CHECK(epochs_seen == static_cast<int>(r1.history.size()));
    REQUIRE(!r1.history.empty());
    CHECK(r1.history.back().train_loss < r1.history.front().train_loss);
    CHECK(r1.best_epoch >= 1);
    CHECK(std::isfinite(r1.best_val_loss));
    CHECK(r1.history.back().val_auc > 0.9);  // trivially separable

    // Full train-set accuracy with the selected weights.
    EvalOutputs train_out = run_eval(cfg, r1.best_params, xtr, 4);
    int correct = 0;
    for (std::size_t i = 0; i < ytr.size(); ++i) {
        const std::int64_t k = train_out.probs[2 * static_cast<std::int64_t>(i) + 1] > 0.5f ? 1 : 0;
        correct += k == ytr[i] ? 1 : 0;
    }
    CHECK(correct == static_cast<int>(ytr.size()));

    // Bitwise determinism for a fixed seed.
    FitResult r2 = fit(cfg, tc, xtr, ytr, xval, yval, nullptr);
    REQUIRE(r1.best_params.tensors.size() == r2.best_params.tensors.size());
    for (std::size_t p = 0; p < r1.best_params.tensors.size(); ++p) {
        for (std::int64_t i = 0; i < r1.best_params.tensors[p].size(); ++i) {
            CHECK(r1.best_params.tensors[p][i] == r2.best_params.tensors[p][i]);
        }
    }
    for (std::size_t e = 0; e < r1.history.size(); ++e) {
        CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
        CHECK(r1.history[e].val_loss == r2.history[e].val_loss);
    }

    TrainConfig other = tc;
    other.seed = 8;
    FitResult r3 = fit(cfg, other, xtr, ytr, xval, yval, nullptr);
    CHECK(r3.history.front().train_loss != r1.history.front().train_loss);
}

TEST_CASE("fit stops early when validation stalls") {
    IETNetConfig cfg = smoke_config();
    cfg.dropout = 0.0;
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 8;
    tc.micro_batch = 8;
    tc.patience = 2;
    tc.seed = 1;
    // Freeze the optimizer so the validation loss can never improve.
    tc.lr.lr_min = 0.0;
    tc.lr.lr_max = 0.0;

    Tensor<float> xtr, xval;
    std::vector<int> ytr, yval;
    separable_set(8, 10, 21, xtr, ytr);
    separable_set(4, 10, 23, xval, yval);
    FitResult r = fit(cfg, tc, xtr, ytr, xval, yval, nullptr);
    CHECK(r.stop_reason == "early_stop");
    CHECK(r.history.size() == 3);  // epoch 1 sets the best; 2 more exhaust patience
    CHECK(r.best_epoch == 1);
}
