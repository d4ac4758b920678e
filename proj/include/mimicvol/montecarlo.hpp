#pragma once

// Path simulation for the Bessel, transformed, local-vol and hybrid models, and
// kernel estimators of conditional expectations E[Y | X = x0].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mimicvol/bessel_core.hpp"
#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/interp.hpp"
#include "mimicvol/core/parallel.hpp"
#include "mimicvol/core/rng.hpp"
#include "mimicvol/core/stats.hpp"
#include "mimicvol/rates.hpp"
#include "mimicvol/surface.hpp"
#include "mimicvol/transform.hpp"

namespace mimicvol {

enum class Scheme { exact_besq, euler };
enum class BandwidthRule { silverman, fixed };
enum class Estimator { local_linear, nadaraya_watson };

struct MCConfig {
    std::size_t paths = 100000;
    std::size_t steps = 100;  ///< time steps per unit time
    std::uint64_t seed = 12345;
    Scheme scheme = Scheme::exact_besq;
    BandwidthRule bandwidth_rule = BandwidthRule::silverman;
    double bandwidth = 0.0;  ///< used by BandwidthRule::fixed
    Estimator estimator = Estimator::local_linear;
    unsigned threads = 0;    ///< 0: MIMICVOL_THREADS or hardware concurrency

    void validate() const {
        if (paths < 1) {
            throw ValidationError("paths", "paths must be positive");
        }
        if (steps < 1) {
            throw ValidationError("steps", "steps must be positive");
        }
        if (scheme == Scheme::euler && steps < 50) {
            throw ValidationError("steps", "the euler scheme needs at least 50 steps per unit time");
        }
        if (bandwidth_rule == BandwidthRule::fixed && !(bandwidth > 0.0)) {
            throw ValidationError("bandwidth", "a fixed bandwidth must be positive");
        }
    }
};

enum class ModelKind { bessel_zero_corr, bessel_corr, transformed, heston, local_vol, hybrid };

/// Variance driver of the hybrid model.
enum class HybridVariance { flat, heston, local_vol };

struct ModelSpec {
    ModelKind kind = ModelKind::bessel_zero_corr;
    BesselSpec bessel;                       ///< bessel_zero_corr, bessel_corr
    CirSpec cir;                             ///< heston, hybrid with heston variance
    std::optional<TransformSpec> transform;  ///< transformed
    double rho = 0.0;                        ///< stock / volatility correlation
    std::optional<RatesSpec> rates;          ///< hybrid
    std::optional<LocalVolSurface> surface;  ///< local_vol, hybrid with local_vol variance
    HybridVariance hybrid_variance = HybridVariance::flat;
    double sigma = 0.2;                      ///< hybrid flat volatility
    double s0 = 1.0;
    std::optional<interp::Curve> drift;      ///< deterministic short rate r(t)

    void validate() const {
        if (!(s0 > 0.0) || !std::isfinite(s0)) {
            throw ValidationError("s0", "s0 must be positive");
        }
        if (!(rho >= -1.0 && rho <= 1.0)) {
            throw ValidationError("rho", "rho must lie in [-1, 1]");
        }
        if (drift) {
            drift->validate("drift");
        }
        switch (kind) {
        case ModelKind::bessel_zero_corr:
            bessel.validate();
            if (rho != 0.0) {
                throw ValidationError("rho", "the uncorrelated model requires rho = 0");
            }
            break;
        case ModelKind::bessel_corr:
            bessel.validate();
            break;
        case ModelKind::transformed:
            if (!transform) {
                throw ValidationError("transform", "transformed model needs a transform");
            }
            transform->validate(1.0);
            break;
        case ModelKind::heston:
            cir.validate();
            break;
        case ModelKind::local_vol:
            if (!surface) {
                throw ValidationError("surface", "local_vol model needs a surface");
            }
            surface->validate();
            break;
        case ModelKind::hybrid:
            if (!rates) {
                throw ValidationError("rates", "hybrid model needs rates");
            }
            rates->validate();
            if (hybrid_variance == HybridVariance::flat && !(sigma >= 0.0)) {
                throw ValidationError("sigma", "sigma must be nonnegative");
            }
            if (hybrid_variance == HybridVariance::heston) {
                cir.validate();
            }
            if (hybrid_variance == HybridVariance::local_vol) {
                if (!surface) {
                    throw ValidationError("surface", "local_vol variance needs a surface");
                }
                surface->validate();
            }
            break;
        }
    }

    /// Stock price at time zero.
    double spot() const { return kind == ModelKind::transformed && transform ? transform->s0 : s0; }
};

/// Terminal samples at one time, one entry per path.
struct PathBundle {
    std::vector<double> terminal_log_stock;
    std::vector<double> terminal_variance;    ///< instantaneous stock variance at t
    std::vector<double> integrated_variance;  ///< int_0^t of the stock variance
    std::vector<double> integrated_rate;
    std::vector<double> terminal_rate;
    std::uint64_t seed = 0;
    double t = 0.0;
    std::size_t clamped_lookups = 0;  ///< local-vol lookups outside the surface grid

    std::size_t size() const { return terminal_log_stock.size(); }

    void resize(std::size_t n) {
        terminal_log_stock.assign(n, 0.0);
        terminal_variance.assign(n, 0.0);
        integrated_variance.assign(n, 0.0);
        integrated_rate.assign(n, 0.0);
        terminal_rate.assign(n, 0.0);
    }
};

struct CondEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double n_effective = 0.0;
    double bandwidth = 0.0;
};

namespace detail {

struct Grid {
    std::vector<double> times;       ///< 0 = times[0] < times[1] < ...
    std::vector<std::size_t> snaps;  ///< index into times of each requested snapshot
};

/// Uniform grid with spacing 1/steps, merged with the snapshot times.
inline Grid make_grid(std::span<const double> snapshots, std::size_t steps) {
    if (snapshots.empty()) {
        throw ValidationError("t", "at least one time is required");
    }
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        if (!(snapshots[i] > 0.0) || !std::isfinite(snapshots[i]) || (i > 0 && !(snapshots[i] > snapshots[i - 1]))) {
            throw ValidationError("t", "times must be positive and strictly increasing");
        }
    }
    const double horizon = snapshots.back();
    const double h = 1.0 / static_cast<double>(steps);
    const double tol = 1e-9 * h;
    Grid grid;
    grid.times.push_back(0.0);
    std::size_t next = 0;
    for (std::size_t k = 1;; ++k) {
        const double u = std::min(h * static_cast<double>(k), horizon);
        while (next < snapshots.size() && snapshots[next] < u - tol) {
            grid.times.push_back(snapshots[next]);
            grid.snaps.push_back(grid.times.size() - 1);
            ++next;
        }
        if (next < snapshots.size() && std::abs(snapshots[next] - u) <= tol) {
            grid.times.push_back(snapshots[next]);
            grid.snaps.push_back(grid.times.size() - 1);
            ++next;
        } else {
            grid.times.push_back(u);
        }
        if (next == snapshots.size()) {
            break;
        }
    }
    return grid;
}

/// Exact squared-Bessel transition over dt. The noncentral chi-square is
/// (Z + sqrt(lambda))^2 + chi^2_{delta-1} for delta > 1 and a Poisson-mixed
/// gamma otherwise.
inline double besq_step(Philox& rng, double x, double dt, double delta) {
    if (delta > 1.0) {
        std::normal_distribution<double> normal;
        const double z = normal(rng) + std::sqrt(x / dt);
        std::gamma_distribution<double> gamma(0.5 * (delta - 1.0), 1.0);
        return dt * (z * z + 2.0 * gamma(rng));
    }
    long long n = 0;
    const double lambda = 0.5 * x / dt;
    if (lambda > 0.0) {
        std::poisson_distribution<long long> poisson(lambda);
        n = poisson(rng);
    }
    std::gamma_distribution<double> gamma(0.5 * delta + static_cast<double>(n), 1.0);
    return 2.0 * dt * gamma(rng);
}

inline std::uint64_t mix_seed(std::uint64_t seed) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Quantities shared by every path of one simulation.
struct Plan {
    Grid grid;
    std::vector<double> drift_step;  ///< int of the deterministic rate over each step
    std::vector<double> drift_cum;   ///< int_0^{t_k}
    std::vector<double> drift_rate;  ///< r(t_k)
    // Bessel-type kinds: Bessel clock and variance scale g'(t).
    std::vector<double> bessel_time;
    std::vector<double> var_scale;
    double delta = 2.0;
    double start2 = 0.0;
    double rho = 0.0;
    // Local-vol lookups: rows at each step start and at each snapshot.
    std::optional<LocalVolSurface::Evaluator> lv;
    std::vector<std::vector<double>> lv_rows;
    std::vector<std::vector<double>> lv_snap_rows;
    std::size_t lv_clamped_t = 0;
    // Hybrid.
    std::vector<vasicek::Step> rate_steps;
    std::vector<double> cir_f;  ///< CIR scale f(t_k) for heston variance
};

inline Plan make_plan(const ModelSpec& m, std::span<const double> times, const MCConfig& cfg) {
    Plan p;
    p.grid = make_grid(times, cfg.steps);
    const auto& tg = p.grid.times;
    const std::size_t n = tg.size();
    p.drift_step.assign(n - 1, 0.0);
    p.drift_cum.assign(n, 0.0);
    p.drift_rate.assign(n, 0.0);
    if (m.drift) {
        for (std::size_t k = 0; k + 1 < n; ++k) {
            p.drift_step[k] = m.drift->integral(tg[k], tg[k + 1]);
            p.drift_cum[k + 1] = p.drift_cum[k] + p.drift_step[k];
        }
        for (std::size_t k = 0; k < n; ++k) {
            p.drift_rate[k] = (*m.drift)(tg[k]);
        }
    }
    p.rho = m.rho;
    p.bessel_time = tg;
    p.var_scale.assign(n, 1.0);
    auto use_transform = [&](const TransformSpec& tr) {
        for (std::size_t k = 0; k < n; ++k) {
            p.bessel_time[k] = tr.g(tg[k]);
            p.var_scale[k] = tr.g_prime(tg[k]);
        }
        p.bessel_time[0] = tr.g(0.0);
        p.delta = tr.spec.delta;
        p.start2 = tr.spec.start * tr.spec.start;
    };
    switch (m.kind) {
    case ModelKind::bessel_zero_corr:
    case ModelKind::bessel_corr:
        p.delta = m.bessel.delta;
        p.start2 = m.bessel.start * m.bessel.start;
        break;
    case ModelKind::transformed:
        use_transform(*m.transform);
        break;
    case ModelKind::heston:
        use_transform(TransformSpec::heston(m.cir, m.s0));
        break;
    case ModelKind::local_vol:
    case ModelKind::hybrid:
        break;
    }
    const bool needs_lv = m.kind == ModelKind::local_vol ||
                          (m.kind == ModelKind::hybrid && m.hybrid_variance == HybridVariance::local_vol);
    if (needs_lv) {
        p.lv.emplace(*m.surface);
        p.lv_rows.resize(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            bool clamped = false;
            p.lv_rows[k] = p.lv->row(tg[k], clamped);
            p.lv_clamped_t += clamped ? 1 : 0;
        }
        for (std::size_t s : p.grid.snaps) {
            bool clamped = false;
            p.lv_snap_rows.push_back(p.lv->row(tg[s], clamped));
        }
    }
    if (m.kind == ModelKind::hybrid) {
        if (m.rates->kind == RatesKind::vasicek) {
            for (std::size_t k = 0; k + 1 < n; ++k) {
                p.rate_steps.emplace_back(m.rates->a, tg[k + 1] - tg[k]);
            }
        } else {
            for (std::size_t k = 0; k + 1 < n; ++k) {
                p.drift_step[k] = m.rates->curve.integral(tg[k], tg[k + 1]);
                p.drift_cum[k + 1] = p.drift_cum[k] + p.drift_step[k];
            }
            for (std::size_t k = 0; k < n; ++k) {
                p.drift_rate[k] = m.rates->curve(tg[k]);
            }
        }
        if (m.hybrid_variance == HybridVariance::heston) {
            const CirBesselMap map = cir_bessel_map(m.cir);
            p.cir_f.resize(n);
            for (std::size_t k = 0; k < n; ++k) {
                p.bessel_time[k] = map.g(tg[k]);
                p.cir_f[k] = map.f(tg[k]);
            }
            p.delta = map.spec.delta;
            p.start2 = m.cir.v0;
        }
    }
    return p;
}

struct Snapshot {
    double log_stock;
    double variance;
    double int_variance;
    double int_rate;
    double rate;
};

/// Bessel-type kinds: exact BESQ on the Bessel clock and the decomposition
/// ln S = (rho/2)(R^2 - R_0^2 - delta s) + sqrt(1 - rho^2) I - A/2, or Euler.
template <typename Out>
void bessel_path(const Plan& p, double log_s0, Scheme scheme, Philox& rng, Out&& out) {
    std::normal_distribution<double> normal;
    const auto& s = p.bessel_time;
    const double rho = p.rho;
    const double perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    double x = p.start2;
    double area = 0.0;
    double ito = 0.0;
    double log_euler = 0.0;
    std::size_t snap = 0;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        const double ds = s[k + 1] - s[k];
        double xn = 0.0;
        if (scheme == Scheme::exact_besq) {
            xn = besq_step(rng, x, ds, p.delta);
            const double da = 0.5 * (x + xn) * ds;
            if (perp > 0.0) {
                ito += std::sqrt(da) * normal(rng);
            }
            area += da;
        } else {
            const double z1 = normal(rng);
            const double z2 = normal(rng);
            const double r = std::sqrt(std::max(x, 0.0));
            const double sq = std::sqrt(ds);
            log_euler += -0.5 * x * ds + r * sq * (rho * z1 + perp * z2);
            xn = std::max(x + 2.0 * r * sq * z1 + p.delta * ds, 0.0);
            area += 0.5 * (x + xn) * ds;
        }
        x = xn;
        if (snap < p.grid.snaps.size() && p.grid.snaps[snap] == k + 1) {
            double ls = 0.0;
            if (scheme == Scheme::exact_besq) {
                ls = 0.5 * rho * (x - p.start2 - p.delta * (s[k + 1] - s[0])) + perp * ito - 0.5 * area;
            } else {
                ls = log_euler;
            }
            out(snap, Snapshot{log_s0 + p.drift_cum[k + 1] + ls, p.var_scale[k + 1] * x, area,
                               p.drift_cum[k + 1], p.drift_rate[k + 1]});
            ++snap;
        }
    }
}

/// Local-vol SDE, log-Euler with the surface interpolant.
template <typename Out>
std::size_t local_vol_path(const Plan& p, double log_s0, Philox& rng, Out&& out) {
    std::normal_distribution<double> normal;
    const auto& tg = p.grid.times;
    double ls = log_s0;
    double intv = 0.0;
    std::size_t clamped = 0;
    std::size_t snap = 0;
    for (std::size_t k = 0; k + 1 < tg.size(); ++k) {
        const double dt = tg[k + 1] - tg[k];
        bool c = false;
        const double v = p.lv->in_row(p.lv_rows[k], ls, c);
        clamped += c ? 1 : 0;
        ls += p.drift_step[k] - 0.5 * v * dt + std::sqrt(v * dt) * normal(rng);
        intv += v * dt;
        if (snap < p.grid.snaps.size() && p.grid.snaps[snap] == k + 1) {
            bool cs = false;
            const double vt = p.lv->in_row(p.lv_snap_rows[snap], ls, cs);
            out(snap, Snapshot{ls, vt, intv, p.drift_cum[k + 1], p.drift_rate[k + 1]});
            ++snap;
        }
    }
    return clamped;
}

/// Hybrid model: exact Vasicek (or deterministic) rates, stock driven by
/// rho_rs W^r + sqrt(1 - rho_rs^2) W^perp with variance flat, CIR or local.
template <typename Out>
std::size_t hybrid_path(const ModelSpec& m, const Plan& p, Philox& rng, Out&& out) {
    std::normal_distribution<double> normal;
    const RatesSpec& rs = *m.rates;
    const bool vas = rs.kind == RatesKind::vasicek;
    const double theta = rs.long_run();
    const double rho = rs.rho_rs;
    const double perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const auto& tg = p.grid.times;
    double r = vas ? rs.r0 : p.drift_rate[0];
    double int_r = 0.0;
    double ls = std::log(m.s0);
    double intv = 0.0;
    double x = p.start2;  // BESQ state for heston variance
    double v = 0.0;
    std::size_t clamped = 0;
    std::size_t snap = 0;
    for (std::size_t k = 0; k + 1 < tg.size(); ++k) {
        const double dt = tg[k + 1] - tg[k];
        double step_int = 0.0;
        double dw = 0.0;
        if (vas) {
            const double z1 = normal(rng);
            const double z2 = normal(rng);
            const double z3 = normal(rng);
            const auto d = p.rate_steps[k].apply(r, theta, rs.sigma_r, z1, z2, z3);
            r = d.r_next;
            step_int = d.integral;
            dw = d.dw;
        } else {
            step_int = p.drift_step[k];
            r = p.drift_rate[k + 1];
            dw = std::sqrt(dt) * normal(rng);
        }
        double dvar = 0.0;
        switch (m.hybrid_variance) {
        case HybridVariance::flat:
            v = m.sigma * m.sigma;
            dvar = v * dt;
            break;
        case HybridVariance::heston: {
            const double xn = besq_step(rng, x, p.bessel_time[k + 1] - p.bessel_time[k], p.delta);
            const double v0 = p.cir_f[k] * x;
            v = p.cir_f[k + 1] * xn;
            dvar = 0.5 * (v0 + v) * dt;
            x = xn;
            break;
        }
        case HybridVariance::local_vol: {
            bool c = false;
            dvar = p.lv->in_row(p.lv_rows[k], ls, c) * dt;
            clamped += c ? 1 : 0;
            break;
        }
        }
        const double zp = normal(rng);
        int_r += step_int;
        ls += step_int - 0.5 * dvar + std::sqrt(dvar) * (rho * dw / std::sqrt(dt) + perp * zp);
        intv += dvar;
        if (snap < p.grid.snaps.size() && p.grid.snaps[snap] == k + 1) {
            if (m.hybrid_variance == HybridVariance::local_vol) {
                bool cs = false;
                v = p.lv->in_row(p.lv_snap_rows[snap], ls, cs);
            }
            out(snap, Snapshot{ls, v, intv, int_r, r});
            ++snap;
        }
    }
    return clamped;
}

} // namespace detail

/// Simulates one model and records terminal samples at each of `times`
/// (strictly increasing) from the same paths.
inline std::vector<PathBundle> simulate_snapshots(const ModelSpec& model, std::span<const double> times,
                                                  const MCConfig& cfg) {
    model.validate();
    cfg.validate();
    const detail::Plan plan = detail::make_plan(model, times, cfg);
    const std::size_t n = cfg.paths;
    std::vector<PathBundle> out(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
        out[j].resize(n);
        out[j].seed = cfg.seed;
        out[j].t = times[j];
    }
    std::vector<std::size_t> clamped(n, 0);
    const double log_s0 = std::log(model.spot());
    parallel_for(n, resolve_threads(cfg.threads), [&](std::size_t i) {
        Philox rng(cfg.seed, i);
        auto record = [&](std::size_t j, const detail::Snapshot& s) {
            out[j].terminal_log_stock[i] = s.log_stock;
            out[j].terminal_variance[i] = s.variance;
            out[j].integrated_variance[i] = s.int_variance;
            out[j].integrated_rate[i] = s.int_rate;
            out[j].terminal_rate[i] = s.rate;
        };
        switch (model.kind) {
        case ModelKind::local_vol:
            clamped[i] = detail::local_vol_path(plan, log_s0, rng, record);
            break;
        case ModelKind::hybrid:
            clamped[i] = detail::hybrid_path(model, plan, rng, record);
            break;
        default:
            detail::bessel_path(plan, log_s0, cfg.scheme, rng, record);
            break;
        }
    });
    std::size_t total = 0;
    for (std::size_t c : clamped) {
        total += c;
    }
    if (plan.lv_clamped_t > 0) {
        total += plan.lv_clamped_t * n;
    }
    for (auto& b : out) {
        b.clamped_lookups = total;
    }
    return out;
}

inline PathBundle simulate_model(const ModelSpec& model, double t, const MCConfig& cfg) {
    const double times[] = {t};
    return std::move(simulate_snapshots(model, times, cfg).front());
}

/// Squared Bessel paths on an explicit grid (first entry > 0, or 0 which is
/// skipped); the bundle holds R_t^2, A_t and ln S_t = I_t - A_t/2 at the last
/// grid time.
inline PathBundle simulate_besq(const BesselSpec& spec, std::span<const double> t_grid, const MCConfig& cfg) {
    spec.validate();
    cfg.validate();
    std::vector<double> grid{0.0};
    for (double t : t_grid) {
        if (!(t > grid.back()) || !std::isfinite(t)) {
            if (t == 0.0 && grid.size() == 1) {
                continue;
            }
            throw ValidationError("t_grid", "t_grid must be positive and strictly increasing");
        }
        grid.push_back(t);
    }
    if (grid.size() < 2) {
        throw ValidationError("t_grid", "t_grid must contain a positive time");
    }
    detail::Plan plan;
    plan.grid.times = grid;
    plan.grid.snaps = {grid.size() - 1};
    plan.bessel_time = grid;
    plan.var_scale.assign(grid.size(), 1.0);
    plan.drift_cum.assign(grid.size(), 0.0);
    plan.drift_rate.assign(grid.size(), 0.0);
    plan.delta = spec.delta;
    plan.start2 = spec.start * spec.start;
    PathBundle out;
    out.resize(cfg.paths);
    out.seed = cfg.seed;
    out.t = grid.back();
    parallel_for(cfg.paths, resolve_threads(cfg.threads), [&](std::size_t i) {
        Philox rng(cfg.seed, i);
        detail::bessel_path(plan, 0.0, cfg.scheme, rng, [&](std::size_t, const detail::Snapshot& s) {
            out.terminal_log_stock[i] = s.log_stock;
            out.terminal_variance[i] = s.variance;
            out.integrated_variance[i] = s.int_variance;
        });
    });
    return out;
}

/// CIR samples V_t: exact via V_t = f(t) R^2_{g(t)}, or full-truncation Euler.
inline std::vector<double> simulate_cir(const CirSpec& cir, double t, const MCConfig& cfg) {
    cir.validate();
    cfg.validate();
    if (!(t > 0.0)) {
        throw ValidationError("t", "t must be positive");
    }
    std::vector<double> out(cfg.paths);
    const CirBesselMap map = cir_bessel_map(cir);
    const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.steps * t - 1e-9)));
    const double dt = t / static_cast<double>(steps);
    parallel_for(cfg.paths, resolve_threads(cfg.threads), [&](std::size_t i) {
        Philox rng(cfg.seed, i);
        if (cfg.scheme == Scheme::exact_besq) {
            out[i] = map.f(t) * detail::besq_step(rng, cir.v0, map.g(t), map.spec.delta);
            return;
        }
        std::normal_distribution<double> normal;
        double v = cir.v0;
        for (std::size_t k = 0; k < steps; ++k) {
            const double vp = std::max(v, 0.0);
            v += cir.kappa * (cir.theta - vp) * dt + cir.eta * std::sqrt(vp * dt) * normal(rng);
        }
        out[i] = std::max(v, 0.0);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Kernel estimators.

/// Silverman's rule: 0.9 min(sd, IQR/1.349) n^{-1/5}.
inline double silverman_bandwidth(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) {
        throw ValidationError("paths", "bandwidth selection needs at least two samples");
    }
    const double sd = stats::estimate_mean(x).std_dev;
    std::vector<double> v(x.begin(), x.end());
    const auto q = [&](double p) {
        const auto k = static_cast<std::size_t>(p * static_cast<double>(n - 1));
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
        return v[k];
    };
    const double iqr = q(0.75) - q(0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
    if (!(spread > 0.0)) {
        throw DomainError("conditioning sample is constant");
    }
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

inline double select_bandwidth(std::span<const double> x, const MCConfig& cfg) {
    return cfg.bandwidth_rule == BandwidthRule::fixed ? cfg.bandwidth : silverman_bandwidth(x);
}

namespace detail {

/// Linear-smoother weights l_i at x0 (Gaussian kernel, truncated at 8h).
struct Smoother {
    std::vector<std::size_t> index;
    std::vector<double> weight;
};

inline Smoother smoother(std::span<const double> x, double x0, double h, Estimator est) {
    Smoother s;
    double s0 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = (x[i] - x0) / h;
        if (std::abs(u) > 8.0) {
            continue;
        }
        const double k = std::exp(-0.5 * u * u);
        s.index.push_back(i);
        s.weight.push_back(k);
        s0 += k;
        s1 += k * u;
        s2 += k * u * u;
    }
    if (s.index.empty()) {
        throw LowMassError("no samples within the kernel window");
    }
    const double det = s0 * s2 - s1 * s1;
    if (est == Estimator::nadaraya_watson || !(det > 1e-12 * s0 * s2)) {
        for (double& w : s.weight) {
            w /= s0;
        }
        return s;
    }
    for (std::size_t k = 0; k < s.index.size(); ++k) {
        const double u = (x[s.index[k]] - x0) / h;
        s.weight[k] *= (s2 - s1 * u) / det;
    }
    return s;
}

} // namespace detail

/// Estimate of E[w Y | X = x0] / E[w | X = x0] (w = 1 when `w` is empty) with a
/// delta-method standard error.
inline CondEstimate kernel_ratio(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                                 double x0, double h, Estimator est) {
    if (x.size() != y.size() || (!w.empty() && w.size() != x.size())) {
        throw ValidationError("samples", "sample sequences must have equal length");
    }
    if (x.size() < 1000) {
        throw ValidationError("paths", "kernel estimators need at least 1000 samples");
    }
    if (!(h > 0.0)) {
        throw ValidationError("bandwidth", "bandwidth must be positive");
    }
    const detail::Smoother s = detail::smoother(x, x0, h, est);
    const std::size_t m = s.index.size();
    std::vector<double> omega(m);
    double norm = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        omega[k] = s.weight[k] * (w.empty() ? 1.0 : w[s.index[k]]);
        norm += omega[k];
    }
    if (!(std::abs(norm) > 0.0)) {
        throw LowMassError("kernel weights vanish");
    }
    // Centred on one sample so that a constant response is reproduced exactly.
    const double ref = y[s.index[0]];
    double acc = 0.0;
    double sq = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        omega[k] /= norm;
        acc += omega[k] * (y[s.index[k]] - ref);
        sq += omega[k] * omega[k];
    }
    CondEstimate out;
    out.value = ref + acc;
    out.n_effective = 1.0 / sq;
    out.bandwidth = h;
    if (out.n_effective < 30.0) {
        throw LowMassError("kernel estimate has effective sample size " + std::to_string(out.n_effective) +
                           " < 30 at x0 = " + std::to_string(x0));
    }
    double var = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double r = y[s.index[k]] - out.value;
        var += omega[k] * omega[k] * r * r;
    }
    out.std_error = std::max(std::sqrt(var), 1e-15 * std::max(1.0, std::abs(out.value)));
    return out;
}

inline CondEstimate kernel_conditional(std::span<const double> x, std::span<const double> y, double x0,
                                       const MCConfig& cfg) {
    if (x.size() < 1000) {
        throw ValidationError("paths", "kernel estimators need at least 1000 samples");
    }
    return kernel_ratio(x, y, {}, x0, select_bandwidth(x, cfg), cfg.estimator);
}

/// Weighted version: E[w Y | X = x0] / E[w | X = x0].
inline CondEstimate kernel_conditional_weighted(std::span<const double> x, std::span<const double> y,
                                                std::span<const double> w, double x0, const MCConfig& cfg) {
    if (x.size() < 1000) {
        throw ValidationError("paths", "kernel estimators need at least 1000 samples");
    }
    return kernel_ratio(x, y, w, x0, select_bandwidth(x, cfg), cfg.estimator);
}

// ---------------------------------------------------------------------------
// Mimicking check.

/// Undiscounted E[(S_t - K)^+] with its standard error.
inline stats::MeanEstimate call_estimate(const PathBundle& b, double strike) {
    std::vector<double> pay(b.size());
    for (std::size_t i = 0; i < pay.size(); ++i) {
        pay[i] = std::max(std::exp(b.terminal_log_stock[i]) - strike, 0.0);
    }
    return stats::estimate_mean(pay);
}

struct MimicCell {
    double t = 0.0;
    double strike = 0.0;
    double price_model = 0.0;
    double se_model = 0.0;
    double price_local = 0.0;
    double se_local = 0.0;
    double z = 0.0;  ///< difference over combined standard error
    bool pass = false;
};

struct MimicReport {
    std::vector<MimicCell> cells;
    std::size_t failures = 0;
    double max_abs_z = 0.0;
    double threshold = 3.0;
    std::size_t clamped_lookups = 0;
    bool all_pass() const { return failures == 0; }
};

/// Prices calls under the stochastic-volatility model and under the local-vol
/// SDE driven by `surface` (independent paths) and compares them cell by cell.
inline MimicReport mimic_check(const ModelSpec& model, const LocalVolSurface& surface, std::span<const double> t_list,
                               std::span<const double> strikes, const MCConfig& cfg, double threshold = 3.0) {
    surface.validate();
    if (strikes.empty()) {
        throw ValidationError("strikes", "at least one strike is required");
    }
    ModelSpec lv;
    lv.kind = ModelKind::local_vol;
    lv.surface = surface;
    lv.s0 = model.spot();
    lv.drift = model.drift;
    MCConfig lcfg = cfg;
    lcfg.seed = detail::mix_seed(cfg.seed);
    const auto sv_paths = simulate_snapshots(model, t_list, cfg);
    const auto lv_paths = simulate_snapshots(lv, t_list, lcfg);
    MimicReport rep;
    rep.threshold = threshold;
    rep.clamped_lookups = lv_paths.front().clamped_lookups;
    for (std::size_t j = 0; j < t_list.size(); ++j) {
        for (double k : strikes) {
            const auto a = call_estimate(sv_paths[j], k);
            const auto b = call_estimate(lv_paths[j], k);
            MimicCell c;
            c.t = t_list[j];
            c.strike = k;
            c.price_model = a.mean;
            c.se_model = a.std_error;
            c.price_local = b.mean;
            c.se_local = b.std_error;
            const double se = std::hypot(a.std_error, b.std_error);
            c.z = se > 0.0 ? (a.mean - b.mean) / se : (a.mean == b.mean ? 0.0 : INFINITY);
            c.pass = std::abs(c.z) <= threshold;
            rep.failures += c.pass ? 0 : 1;
            rep.max_abs_z = std::max(rep.max_abs_z, std::abs(c.z));
            rep.cells.push_back(c);
        }
    }
    return rep;
}

/// CSV dump `path_id,ln_s,v,int_v,int_r,r`.
inline void write_paths_csv(std::ostream& os, const PathBundle& b) {
    os << "path_id,ln_s,v,int_v,int_r,r\n";
    char buf[256];
    for (std::size_t i = 0; i < b.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, b.terminal_log_stock[i],
                      b.terminal_variance[i], b.integrated_variance[i], b.integrated_rate[i], b.terminal_rate[i]);
        os << buf;
    }
}

} // namespace mimicvol
