#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ietnet/finite_diff.hpp"
#include "ietnet/graph.hpp"
#include "ietnet/layers.hpp"
#include "ietnet/model.hpp"
#include "ietnet/rng.hpp"

using namespace ietnet;

namespace {

using TD = Tensor<double>;

IETNetConfig tiny_config() {
    IETNetConfig cfg;
    cfg.channels = 3;
    cfg.classes = 2;
    cfg.tcn_filters = 4;
    cfg.kernel_size = 2;
    cfg.dilations = {1, 2};
    cfg.d_model = 4;
    cfg.heads = 2;
    cfg.dropout = 0.0;
    return cfg;
}

TD random_input(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    TD t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("config validation rejects inconsistent settings") {
    IETNetConfig ok = tiny_config();
    CHECK_NOTHROW(ok.validate());

    IETNetConfig bad = ok;
    bad.dilations = {1, 3};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.dilations = {2, 2};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.d_model = 8;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.classes = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("receptive field covers the advertised span") {
    CHECK(tiny_config().receptive_field() == 7);  // 1 + 2*(1+2)
    IETNetConfig full;
    CHECK(full.receptive_field() == 2047);  // covers T = 2000
}

TEST_CASE("init_params is deterministic and canonically laid out") {
    const IETNetConfig cfg = tiny_config();
    auto a = init_params<double>(cfg, 42);
    auto b = init_params<double>(cfg, 42);
    REQUIRE(a.names == b.names);
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        for (std::int64_t j = 0; j < a.tensors[i].size(); ++j) {
            CHECK(a.tensors[i][j] == b.tensors[i][j]);
        }
    }
    auto c = init_params<double>(cfg, 43);
    CHECK(c.tensors[0][0] != a.tensors[0][0]);

    // Hand count: tcn 128 (block0 has the 1->4 projection), attn 88, gate 10.
    CHECK(a.total_size() == 226);
    CHECK(a.names.front() == "tcn.block0.conv1.kernel");
    CHECK_NOTHROW(a.index_of("tcn.block1.conv2.bias"));
    CHECK_NOTHROW(a.index_of("attn.ln.gain"));
    CHECK_NOTHROW(a.index_of("gate.bias"));
    CHECK_THROWS_AS(a.index_of("tcn.block1.skip.kernel"), std::invalid_argument);

    // Biases start at zero, layer-norm gain at one.
    const auto& bias = a.tensors[a.index_of("tcn.block0.conv1.bias")];
    for (std::int64_t i = 0; i < bias.size(); ++i) CHECK(bias[i] == 0.0);
    const auto& gain = a.tensors[a.index_of("attn.ln.gain")];
    for (std::int64_t i = 0; i < gain.size(); ++i) CHECK(gain[i] == 1.0);
}

TEST_CASE("glorot draws have roughly the right spread") {
    Rng rng(7);
    auto w = glorot_normal<double>({64, 64}, rng);
    double mean = 0, sq = 0;
    for (std::int64_t i = 0; i < w.size(); ++i) {
        mean += w[i];
        sq += w[i] * w[i];
    }
    mean /= static_cast<double>(w.size());
    const double stddev = std::sqrt(sq / static_cast<double>(w.size()) - mean * mean);
    const double want = std::sqrt(2.0 / 128.0);
    CHECK(std::abs(mean) < 0.01);
    CHECK(stddev == doctest::Approx(want).epsilon(0.1));
}

TEST_CASE("zeroed residual block reduces to relu of its input") {
    GraphD g;
    Rng rng(1);
    TD x = random_input({2, 4, 6}, 3);
    NodeId xi = g.input(x);
    ResidualBlockParams rp;
    rp.conv1_kernel = g.param(TD::zeros({4, 4, 2}));
    rp.conv1_bias = g.param(TD::zeros({4}));
    rp.conv2_kernel = g.param(TD::zeros({4, 4, 2}));
    rp.conv2_bias = g.param(TD::zeros({4}));
    const TD& y = g.value(residual_block(g, xi, rp, 1, 0.0, false, rng));
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == std::max(x[i], 0.0));
}

TEST_CASE("residual block is causal and reaches exactly its receptive field") {
    // Two blocks, dilations 1 and 2, kernel 2: receptive field 7.
    // Positive kernels, biases, and inputs keep every relu active, so a bump
    // must propagate to the full extent of the field.
    const std::int64_t T = 24;
    auto run = [&](const TD& x) {
        GraphD g;
        Rng rng(1);
        Rng init(5);
        NodeId h = g.input(x);
        for (std::int64_t d : {1, 2}) {
            ResidualBlockParams rp;
            auto pos_kernel = [&] {
                auto k = glorot_normal<double>({1, 1, 2}, init);
                for (std::int64_t i = 0; i < k.size(); ++i) k[i] = std::abs(k[i]) + 0.05;
                return k;
            };
            rp.conv1_kernel = g.param(pos_kernel());
            rp.conv1_bias = g.param(TD::full({1}, 0.1));
            rp.conv2_kernel = g.param(pos_kernel());
            rp.conv2_bias = g.param(TD::full({1}, 0.1));
            h = residual_block(g, h, rp, d, 0.0, false, rng);
        }
        return g.value(h);
    };
    TD x = random_input({1, 1, T}, 9);
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = 0.55 + 0.45 * x[i];  // keep inputs positive
    const TD base = run(x);
    const std::int64_t t0 = 8;
    x[t0] += 0.5;
    const TD bumped = run(x);
    for (std::int64_t t = 0; t < t0; ++t) CHECK(bumped[t] == base[t]);  // no look-ahead
    CHECK(bumped[t0] != base[t0]);
    CHECK(bumped[t0 + 6] != base[t0 + 6]);                               // edge of the field
    for (std::int64_t t = t0 + 7; t < T; ++t) CHECK(bumped[t] == base[t]);
}

TEST_CASE("attention with zero output projection is layer norm of the input") {
    GraphD g;
    Rng rng(1);
    Rng init(2);
    TD m = random_input({2, 3, 4}, 17);
    NodeId mi = g.input(m);
    AttentionParams ap;
    ap.wq = g.param(glorot_normal<double>({4, 4}, init));
    ap.bq = g.param(TD::zeros({4}));
    ap.wk = g.param(glorot_normal<double>({4, 4}, init));
    ap.bk = g.param(TD::zeros({4}));
    ap.wv = g.param(glorot_normal<double>({4, 4}, init));
    ap.bv = g.param(TD::zeros({4}));
    ap.wo = g.param(TD::zeros({4, 4}));
    ap.bo = g.param(TD::zeros({4}));
    ap.ln_gain = g.param(TD::ones({4}));
    ap.ln_bias = g.param(TD::zeros({4}));
    NodeId out = attention_block(g, mi, ap, 2, 0.0, false, rng, 1e-6);
    NodeId direct = g.layer_norm(mi, ap.ln_gain, ap.ln_bias, 1e-6);
    for (std::int64_t i = 0; i < m.size(); ++i) CHECK(g.value(out)[i] == doctest::Approx(g.value(direct)[i]));
}

TEST_CASE("gate columns are distributions over channels") {
    const IETNetConfig cfg = tiny_config();
    auto params = init_params<double>(cfg, 11);
    Rng rng(0);
    GraphD g;
    NodeId x = g.input(random_input({5, cfg.channels, 12}, 23));
    ModelNodes nodes = build_model(g, cfg, params, x, false, rng);
    const TD& gate = g.value(nodes.gate);
    REQUIRE(gate.shape == Shape{5, 3, 2});
    for (int b = 0; b < 5; ++b) {
        for (int k = 0; k < 2; ++k) {
            double s = 0;
            for (int c = 0; c < 3; ++c) s += gate[(b * 3 + c) * 2 + k];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    CHECK(g.value(nodes.logits).shape == Shape{5, 2});
    CHECK(g.value(nodes.features).shape == Shape{5, 3, 4});
}

TEST_CASE("channel permutation permutes the gate and preserves the logits") {
    const IETNetConfig cfg = tiny_config();
    auto params = init_params<double>(cfg, 29);
    TD x = random_input({2, 3, 10}, 31);
    const std::vector<int> perm = {2, 0, 1};  // permuted[c] = original[perm[c]]
    TD px({2, 3, 10});
    for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 3; ++c) {
            for (int t = 0; t < 10; ++t) {
                px[(b * 3 + c) * 10 + t] = x[(b * 3 + perm[c]) * 10 + t];
            }
        }
    }
    Rng rng(0);
    GraphD g1, g2;
    ModelNodes n1 = build_model(g1, cfg, params, g1.input(x), false, rng);
    ModelNodes n2 = build_model(g2, cfg, params, g2.input(px), false, rng);
    const TD& gate1 = g1.value(n1.gate);
    const TD& gate2 = g2.value(n2.gate);
    for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 3; ++c) {
            for (int k = 0; k < 2; ++k) {
                CHECK(gate2[(b * 3 + c) * 2 + k] ==
                      doctest::Approx(gate1[(b * 3 + perm[c]) * 2 + k]).epsilon(1e-9));
            }
        }
    }
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(g2.value(n2.logits)[i] == doctest::Approx(g1.value(n1.logits)[i]).epsilon(1e-9));
    }
}

TEST_CASE("model gradients agree with finite differences on spot-checked weights") {
    const IETNetConfig cfg = tiny_config();
    auto params = init_params<double>(cfg, 51);
    TD x = random_input({2, 3, 8}, 53);
    TD weights = random_input({2, 2}, 54);

    for (const char* name : {"tcn.block0.conv1.kernel", "tcn.block1.conv2.bias", "attn.wq",
                             "attn.ln.gain", "gate.weight"}) {
        const std::size_t idx = params.index_of(name);
        GraphD g;
        Rng rng(0);
        ModelNodes nodes = build_model(g, cfg, params, g.input(x), false, rng);
        NodeId w = g.input(weights);
        NodeId loss = g.mean(g.mul(nodes.logits, w), {0, 1});
        auto gm = g.backward(loss);
        const TD analytic = gm.at(nodes.params[idx]);

        auto f = [&](const TD& point) {
            NamedParams<double> p2 = params;
            p2.tensors[idx] = point;
            GraphD g2;
            Rng rng2(0);
            ModelNodes n2 = build_model(g2, cfg, p2, g2.input(x), false, rng2);
            NodeId w2 = g2.input(weights);
            return g2.value(g2.mean(g2.mul(n2.logits, w2), {0, 1})).item();
        };
        const double err = finite_diff_check<double>(params.tensors[idx], f, analytic, 1e-5);
        CAPTURE(name);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("build_model rejects inputs with the wrong channel count") {
    const IETNetConfig cfg = tiny_config();
    auto params = init_params<double>(cfg, 1);
    GraphD g;
    Rng rng(0);
    NodeId x = g.input(TD::zeros({2, 5, 8}));
    CHECK_THROWS_AS(build_model(g, cfg, params, x, false, rng), std::invalid_argument);
}
