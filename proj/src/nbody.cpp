#include "ietnet/nbody.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ietnet {

void NBodyConfig::validate() const {
    if (masses.empty()) throw std::invalid_argument("nbody: at least one mass required");
    for (double m : masses) {
        if (!(m > 0.0)) throw std::invalid_argument("nbody: masses must be positive");
    }
    if (steps < 1) throw std::invalid_argument("nbody: steps must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("nbody: dt must be positive");
    if (substeps < 1) throw std::invalid_argument("nbody: substeps must be >= 1");
    if (!(softening > 0.0)) throw std::invalid_argument("nbody: softening must be positive");
    if (!(init_range > 0.0)) throw std::invalid_argument("nbody: init_range must be positive");
    if (init_positions.size() != init_velocities.size())
        throw std::invalid_argument("nbody: explicit positions and velocities must pair up");
    if (!init_positions.empty() && init_positions.size() != 2 * masses.size())
        throw std::invalid_argument("nbody: explicit initial state needs 2 coordinates per body");
    if (resample_budget < 1) throw std::invalid_argument("nbody: resample_budget must be >= 1");
    if (!(energy_tol > 0.0)) throw std::invalid_argument("nbody: energy_tol must be positive");
}

namespace {

struct State {
    std::vector<double> x, y, vx, vy;  // per body
};

// Pairwise softened gravity as forces, applied antisymmetrically so the
// force total (and hence momentum) cancels to rounding.
void forces(const NBodyConfig& cfg, const State& s, std::vector<double>& fx,
            std::vector<double>& fy) {
    const std::size_t n = cfg.masses.size();
    std::fill(fx.begin(), fx.end(), 0.0);
    std::fill(fy.begin(), fy.end(), 0.0);
    const double eps2 = cfg.softening * cfg.softening;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = s.x[j] - s.x[i];
            const double dy = s.y[j] - s.y[i];
            const double r2 = dx * dx + dy * dy + eps2;
            const double inv = 1.0 / (r2 * std::sqrt(r2));
            const double c = cfg.G * cfg.masses[i] * cfg.masses[j] * inv;
            fx[i] += c * dx;
            fy[i] += c * dy;
            fx[j] -= c * dx;
            fy[j] -= c * dy;
        }
    }
}

double total_energy(const NBodyConfig& cfg, const State& s) {
    const std::size_t n = cfg.masses.size();
    double ke = 0.0, pe = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ke += 0.5 * cfg.masses[i] * (s.vx[i] * s.vx[i] + s.vy[i] * s.vy[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = s.x[j] - s.x[i];
            const double dy = s.y[j] - s.y[i];
            pe -= cfg.G * cfg.masses[i] * cfg.masses[j] /
                  std::sqrt(dx * dx + dy * dy + cfg.softening * cfg.softening);
        }
    }
    return ke + pe;
}

bool all_finite(const State& s) {
    for (double v : s.x) {
        if (!std::isfinite(v)) return false;
    }
    for (double v : s.y) {
        if (!std::isfinite(v)) return false;
    }
    for (double v : s.vx) {
        if (!std::isfinite(v)) return false;
    }
    for (double v : s.vy) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

double TrajectoryRecord::momentum_drift(const std::vector<double>& masses) const {
    const std::int64_t steps = positions.shape[0];
    const std::int64_t n = positions.shape[1];
    double scale = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double vx = velocities[(0 * n + i) * 2 + 0];
        const double vy = velocities[(0 * n + i) * 2 + 1];
        scale += masses[static_cast<std::size_t>(i)] * std::hypot(vx, vy);
    }
    scale = std::max(scale, 1e-12);
    double worst = 0.0;
    for (std::int64_t t = 0; t < steps; ++t) {
        const double dx = momentum_x[static_cast<std::size_t>(t)] - momentum_x[0];
        const double dy = momentum_y[static_cast<std::size_t>(t)] - momentum_y[0];
        worst = std::max(worst, std::hypot(dx, dy) / scale);
    }
    return worst;
}

double TrajectoryRecord::energy_drift() const {
    // Relative to |KE0| + |PE0| rather than |E0|, which can sit near zero
    // when kinetic and potential terms cancel.
    const double denom = std::max(energy_scale_, 1e-12);
    const double e0 = energy[0];
    double worst = 0.0;
    for (double e : energy) worst = std::max(worst, std::abs(e - e0) / denom);
    return worst;
}

TrajectoryRecord simulate_nbody(const NBodyConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.masses.size();
    Rng rng(cfg.seed);

    const bool explicit_ics = !cfg.init_positions.empty();
    const std::int64_t budget = explicit_ics ? 1 : cfg.resample_budget;
    double worst_drift_seen = 0.0;
    for (std::int64_t attempt = 1; attempt <= budget; ++attempt) {
        State s;
        s.x.resize(n);
        s.y.resize(n);
        s.vx.resize(n);
        s.vy.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (explicit_ics) {
                s.x[i] = cfg.init_positions[2 * i + 0];
                s.y[i] = cfg.init_positions[2 * i + 1];
                s.vx[i] = cfg.init_velocities[2 * i + 0];
                s.vy[i] = cfg.init_velocities[2 * i + 1];
            } else {
                s.x[i] = rng.uniform(-cfg.init_range, cfg.init_range);
                s.y[i] = rng.uniform(-cfg.init_range, cfg.init_range);
                s.vx[i] = rng.uniform(-cfg.init_range, cfg.init_range);
                s.vy[i] = rng.uniform(-cfg.init_range, cfg.init_range);
            }
        }

        TrajectoryRecord rec;
        rec.attempts = attempt;
        rec.positions = Tensor<double>({cfg.steps, static_cast<std::int64_t>(n), 2});
        rec.velocities = Tensor<double>({cfg.steps, static_cast<std::int64_t>(n), 2});
        rec.momentum_x.resize(static_cast<std::size_t>(cfg.steps));
        rec.momentum_y.resize(static_cast<std::size_t>(cfg.steps));
        rec.energy.resize(static_cast<std::size_t>(cfg.steps));

        auto record = [&](std::int64_t t) {
            double px = 0.0, py = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::int64_t base = (t * static_cast<std::int64_t>(n) + static_cast<std::int64_t>(i)) * 2;
                rec.positions[base + 0] = s.x[i];
                rec.positions[base + 1] = s.y[i];
                rec.velocities[base + 0] = s.vx[i];
                rec.velocities[base + 1] = s.vy[i];
                px += cfg.masses[i] * s.vx[i];
                py += cfg.masses[i] * s.vy[i];
            }
            rec.momentum_x[static_cast<std::size_t>(t)] = px;
            rec.momentum_y[static_cast<std::size_t>(t)] = py;
            rec.energy[static_cast<std::size_t>(t)] = total_energy(cfg, s);
        };

        // Scale for the relative energy drift: |KE0| + |PE0|.
        {
            double ke = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                ke += 0.5 * cfg.masses[i] * (s.vx[i] * s.vx[i] + s.vy[i] * s.vy[i]);
            }
            const double pe = total_energy(cfg, s) - ke;
            rec.energy_scale_ = std::abs(ke) + std::abs(pe);
        }

        std::vector<double> fx(n), fy(n);
        forces(cfg, s, fx, fy);
        record(0);
        const double h = cfg.dt / static_cast<double>(cfg.substeps);
        const double half = 0.5 * h;
        for (std::int64_t t = 1; t < cfg.steps; ++t) {
            for (std::int64_t sub = 0; sub < cfg.substeps; ++sub) {
                for (std::size_t i = 0; i < n; ++i) {
                    s.vx[i] += fx[i] / cfg.masses[i] * half;
                    s.vy[i] += fy[i] / cfg.masses[i] * half;
                    s.x[i] += s.vx[i] * h;
                    s.y[i] += s.vy[i] * h;
                }
                forces(cfg, s, fx, fy);
                for (std::size_t i = 0; i < n; ++i) {
                    s.vx[i] += fx[i] / cfg.masses[i] * half;
                    s.vy[i] += fy[i] / cfg.masses[i] * half;
                }
            }
            record(t);
        }

        if (!all_finite(s)) continue;
        const double drift = rec.energy_drift();
        worst_drift_seen = std::max(worst_drift_seen, drift);
        if (drift <= cfg.energy_tol) return rec;
    }
    if (explicit_ics)
        throw std::runtime_error(
            "simulate_nbody: explicit initial conditions exceed the energy tolerance (relative "
            "drift " +
            std::to_string(worst_drift_seen) + "); reduce dt or raise energy_tol");
    throw std::runtime_error("simulate_nbody: no initial conditions within the energy tolerance after " +
                             std::to_string(cfg.resample_budget) + " draws (seed " +
                             std::to_string(cfg.seed) + ", worst relative drift " +
                             std::to_string(worst_drift_seen) + "); increase the budget or reduce dt");
}

}  // namespace ietnet
