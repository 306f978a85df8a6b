#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "ietnet/nbody.hpp"

using namespace ietnet;

namespace {

NBodyConfig four_body(std::uint64_t seed) {
    NBodyConfig cfg;
    cfg.masses = {1.0, 1.0 / 3.14159265358979323846, 1.0 / 1.41421356237309504880,
                  1.0 / 2.71828182845904523536};
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("config validation names the violated constraint") {
    NBodyConfig cfg = four_body(0);
    cfg.masses = {};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = four_body(0);
    cfg.masses[1] = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = four_body(0);
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = four_body(0);
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = four_body(0);
    cfg.softening = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = four_body(0);
    cfg.resample_budget = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = four_body(0);
    cfg.init_positions = {0.0, 0.0};  // 4 bodies need 8 coordinates
    cfg.init_velocities = {0.0, 0.0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.init_positions = {0.0, 0.0, 1.0, 1.0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("a single body coasts in a straight line") {
    NBodyConfig cfg;
    cfg.masses = {2.0};
    cfg.steps = 257;
    // Dyadic values keep x0 + t*v*dt exactly representable, so the check
    // can demand equality to rounding.
    cfg.dt = 0.125;
    cfg.init_positions = {0.25, -0.5};
    cfg.init_velocities = {0.5, -0.25};

    const TrajectoryRecord rec = simulate_nbody(cfg);
    REQUIRE(rec.positions.shape == Shape{257, 1, 2});
    for (std::int64_t t = 0; t < cfg.steps; ++t) {
        const double ft = static_cast<double>(t);
        CHECK(rec.positions[t * 2 + 0] == 0.25 + ft * (0.5 * 0.125));
        CHECK(rec.positions[t * 2 + 1] == -0.5 + ft * (-0.25 * 0.125));
        // No forces: velocity, momentum, and energy are frozen bitwise.
        CHECK(rec.velocities[t * 2 + 0] == 0.5);
        CHECK(rec.velocities[t * 2 + 1] == -0.25);
        CHECK(rec.momentum_x[static_cast<std::size_t>(t)] == rec.momentum_x[0]);
        CHECK(rec.energy[static_cast<std::size_t>(t)] == rec.energy[0]);
    }
    CHECK(rec.momentum_drift(cfg.masses) == 0.0);
    CHECK(rec.energy_drift() == 0.0);
}

TEST_CASE("equal masses with mirrored initial conditions keep the center of mass at the origin") {
    NBodyConfig cfg;
    cfg.masses = {1.0, 1.0};
    cfg.steps = 2000;
    cfg.init_positions = {0.5, 0.3, -0.5, -0.3};
    cfg.init_velocities = {0.2, -0.4, -0.2, 0.4};

    const TrajectoryRecord rec = simulate_nbody(cfg);
    for (std::int64_t t = 0; t < cfg.steps; ++t) {
        const double cx = 0.5 * (rec.positions[(t * 2 + 0) * 2 + 0] + rec.positions[(t * 2 + 1) * 2 + 0]);
        const double cy = 0.5 * (rec.positions[(t * 2 + 0) * 2 + 1] + rec.positions[(t * 2 + 1) * 2 + 1]);
        CHECK(std::abs(cx) <= 1e-9);
        CHECK(std::abs(cy) <= 1e-9);
    }
}

TEST_CASE("center of mass moves uniformly for random systems") {
    const NBodyConfig cfg = four_body(11);
    const TrajectoryRecord rec = simulate_nbody(cfg);
    double M = 0.0;
    for (double m : cfg.masses) M += m;

    const std::int64_t n = rec.positions.shape[1];
    auto com = [&](std::int64_t t, int axis) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            s += cfg.masses[static_cast<std::size_t>(i)] * rec.positions[(t * n + i) * 2 + axis];
        return s / M;
    };
    const double cx0 = com(0, 0), cy0 = com(0, 1);
    const double vx = rec.momentum_x[0] / M, vy = rec.momentum_y[0] / M;
    for (std::int64_t t = 0; t < cfg.steps; t += 97) {
        const double ft = static_cast<double>(t) * cfg.dt;
        CHECK(com(t, 0) == doctest::Approx(cx0 + vx * ft).epsilon(1e-9));
        CHECK(com(t, 1) == doctest::Approx(cy0 + vy * ft).epsilon(1e-9));
    }
}

TEST_CASE("momentum is conserved to rounding over full-length runs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const NBodyConfig cfg = four_body(seed);
        const TrajectoryRecord rec = simulate_nbody(cfg);
        CHECK(rec.momentum_drift(cfg.masses) <= 1e-6);
        CHECK(rec.energy_drift() <= cfg.energy_tol);
        CHECK(rec.attempts <= cfg.resample_budget);
    }
}

TEST_CASE("halving dt cuts the energy drift roughly fourfold") {
    // Second-order integrator: O(dt^2) energy error. Mirrored explicit
    // initial conditions keep both runs on the same orbit.
    NBodyConfig coarse;
    coarse.masses = {1.0, 0.5};
    coarse.steps = 1000;
    coarse.substeps = 1;
    coarse.dt = 4e-3;
    coarse.init_positions = {0.4, 0.0, -0.4, 0.0};
    coarse.init_velocities = {0.0, 0.35, 0.0, -0.7};
    NBodyConfig fine = coarse;
    fine.dt = 2e-3;
    fine.steps = 2000;

    const double drift_coarse = simulate_nbody(coarse).energy_drift();
    const double drift_fine = simulate_nbody(fine).energy_drift();
    CHECK(drift_coarse > 0.0);
    const double ratio = drift_coarse / drift_fine;
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
}

TEST_CASE("runs are seed-deterministic and seeds differ") {
    const TrajectoryRecord a = simulate_nbody(four_body(5));
    const TrajectoryRecord b = simulate_nbody(four_body(5));
    const TrajectoryRecord c = simulate_nbody(four_body(6));
    CHECK(std::memcmp(a.positions.data.data(), b.positions.data.data(),
                      a.positions.data.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.velocities.data.data(), b.velocities.data.data(),
                      a.velocities.data.size() * sizeof(double)) == 0);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.positions.data.size(); ++i)
        any_diff = any_diff || a.positions.data[i] != c.positions.data[i];
    CHECK(any_diff);

    // Initial coordinates land in the configured box.
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(std::abs(a.positions[i * 2 + 0]) <= 1.0);
        CHECK(std::abs(a.positions[i * 2 + 1]) <= 1.0);
        CHECK(std::abs(a.velocities[i * 2 + 0]) <= 1.0);
        CHECK(std::abs(a.velocities[i * 2 + 1]) <= 1.0);
    }
}

TEST_CASE("an exhausted resample budget is an error, not a bad sample") {
    NBodyConfig cfg = four_body(3);
    cfg.dt = 0.5;          // wildly too coarse
    cfg.softening = 1e-3;  // so close encounters blow the energy check
    cfg.energy_tol = 1e-9;
    cfg.resample_budget = 3;
    cfg.steps = 200;
    CHECK_THROWS_WITH_AS(simulate_nbody(cfg), doctest::Contains("3 draws"), std::runtime_error);

    // Explicit initial conditions cannot be resampled.
    cfg.init_positions = {0.1, 0.0, -0.1, 0.05, 0.3, -0.2, -0.25, 0.15};
    cfg.init_velocities = {0.5, 0.5, -0.5, -0.5, 0.25, -0.25, -0.3, 0.3};
    CHECK_THROWS_WITH_AS(simulate_nbody(cfg), doctest::Contains("explicit"), std::runtime_error);
}
