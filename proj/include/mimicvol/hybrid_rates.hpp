#pragma once

// Stochastic-rate extensions: the covariance-corrected Dupire formula, spot and
// forward mimicking estimators, and hybrid-model price surfaces.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/interp.hpp"
#include "mimicvol/core/parallel.hpp"
#include "mimicvol/core/rng.hpp"
#include "mimicvol/core/stats.hpp"
#include "mimicvol/dupire.hpp"
#include "mimicvol/montecarlo.hpp"
#include "mimicvol/rates.hpp"

namespace mimicvol {

/// Cov^t(r_t; 1{S_t > x}) at several levels, with B(0,t) and f(0,t).
struct HybridSlice {
    double t = 0.0;
    std::vector<double> x_levels;
    std::vector<double> cov;
    std::vector<double> cov_se;
    double bond = 1.0;
    double fwd_rate = 0.0;
    double rate_sd = 0.0;  ///< std of r_t under Q^t

    /// |cov| <= sd(r_t) / 2 up to slack (standard errors).
    void validate(double slack_se = 3.0) const {
        if (cov.size() != x_levels.size() || cov_se.size() != x_levels.size()) {
            throw ValidationError("cov", "slice sequences must have equal length");
        }
        for (std::size_t k = 0; k < cov.size(); ++k) {
            if (!std::isfinite(cov[k]) || std::abs(cov[k]) > 0.5 * rate_sd + slack_se * cov_se[k] + 1e-15) {
                throw ValidationError("cov", "covariance exceeds the indicator bound at x = " +
                                                 std::to_string(x_levels[k]));
            }
        }
    }
};

/// Q^t weights e^{-int r} / mean(e^{-int r}); they average to one.
inline std::vector<double> forward_measure_weights(const PathBundle& b) {
    std::vector<double> w(b.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(-b.integrated_rate[i]);
    }
    const double m = stats::mean(w);
    for (double& v : w) {
        v /= m;
    }
    return w;
}

/// Covariance under Q^t by reweighting risk-neutral paths. B(0,t) and f(0,t)
/// come from `rates` when given, else from the sample (mean discount and
/// E^t[r_t]).
inline HybridSlice hybrid_cov(const PathBundle& b, std::span<const double> x_levels,
                              const std::optional<RatesSpec>& rates = std::nullopt) {
    const std::size_t n = b.size();
    if (n < 1000) {
        throw ValidationError("paths", "hybrid covariance needs at least 1000 paths");
    }
    if (b.terminal_rate.size() != n || b.integrated_rate.size() != n) {
        throw ValidationError("bundle", "bundle must carry terminal and integrated rates");
    }
    std::vector<double> disc(n);
    for (std::size_t i = 0; i < n; ++i) {
        disc[i] = std::exp(-b.integrated_rate[i]);
    }
    const double mean_disc = stats::mean(disc);
    const std::vector<double> w = forward_measure_weights(b);
    std::vector<double> wr(n);
    for (std::size_t i = 0; i < n; ++i) {
        wr[i] = w[i] * b.terminal_rate[i];
    }
    const double r_bar = stats::mean(wr);
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = b.terminal_rate[i] - r_bar;
        dev[i] = w[i] * d * d;
    }
    HybridSlice s;
    s.t = b.t;
    s.rate_sd = std::sqrt(stats::mean(dev));
    if (rates) {
        const RatesDescriptors d = rates_descriptors(*rates, b.t, b.t);
        s.bond = d.bond;
        s.fwd_rate = d.fwd_rate;
    } else {
        s.bond = mean_disc;
        s.fwd_rate = r_bar;
    }
    std::vector<double> ind(n);
    std::vector<double> psi(n);
    for (double x : x_levels) {
        if (!(x > 0.0)) {
            throw ValidationError("x_levels", "levels must be positive");
        }
        const double lx = std::log(x);
        for (std::size_t i = 0; i < n; ++i) {
            ind[i] = w[i] * (b.terminal_log_stock[i] > lx ? 1.0 : 0.0);
        }
        const double p = stats::mean(ind);
        for (std::size_t i = 0; i < n; ++i) {
            const double one = b.terminal_log_stock[i] > lx ? 1.0 : 0.0;
            psi[i] = w[i] * (b.terminal_rate[i] - r_bar) * (one - p);
        }
        const auto e = stats::estimate_mean(psi);
        s.x_levels.push_back(x);
        s.cov.push_back(e.mean);
        s.cov_se.push_back(e.std_error);
    }
    return s;
}

/// sigma^2 = (C_t + x f(0,t) C_x - x B(0,t) Cov^t) / (x^2 C_xx / 2); covariances
/// are interpolated linearly in x from each slice.
inline ExtractResult extended_dupire(const PriceSurface& surface, std::span<const HybridSlice> slices) {
    if (slices.size() != surface.maturities.size()) {
        throw ValidationError("slices", "one slice per surface maturity is required");
    }
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const auto& sl = slices[i];
        if (std::abs(sl.t - surface.maturities[i]) > 1e-12 * std::max(1.0, sl.t)) {
            throw ValidationError("slices", "slice times must match the surface maturities");
        }
        if (sl.x_levels.empty() || sl.cov.size() != sl.x_levels.size()) {
            throw ValidationError("slices", "slices need covariance levels");
        }
    }
    return detail::extract(surface, [&](std::size_t i, std::size_t j) {
        const auto& sl = slices[i];
        const double x = surface.strikes[j];
        return x * sl.bond * interp::linear(sl.x_levels, sl.cov, x);
    });
}

/// E[V_t e^{-int r} | S_t = x] / E[e^{-int r} | S_t = x].
inline CondEstimate spot_mimic_var(const PathBundle& b, double x, const MCConfig& cfg) {
    if (!(x > 0.0)) {
        throw ValidationError("x", "x must be positive");
    }
    std::vector<double> w(b.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(-b.integrated_rate[i]);
    }
    return kernel_conditional_weighted(b.terminal_log_stock, b.terminal_variance, w, std::log(x), cfg);
}

/// ln B(t, T) given r_t.
inline double log_bond_given_rate(const RatesSpec& rates, double t, double T, double r) {
    if (rates.kind == RatesKind::deterministic) {
        return -rates.curve.integral(t, T);
    }
    return vasicek::log_bond_at(rates, T - t, r);
}

/// E^T[V + 2 rho sqrt(V) sigma_B + sigma_B^2 | S_t = x B(t,T) e^{int_t^T f(0,s) ds}]
/// from risk-neutral paths, reweighted to Q^T by e^{-int_0^t r} B(t,T) / B(0,T).
inline CondEstimate forward_sigma_T(const PathBundle& b, const RatesSpec& rates, double T, double x,
                                    const MCConfig& cfg) {
    rates.validate();
    if (!(T >= b.t)) {
        throw DomainError("forward_sigma_T requires T >= t");
    }
    if (!(x > 0.0)) {
        throw ValidationError("x", "x must be positive");
    }
    const RatesDescriptors d = rates_descriptors(rates, b.t, T);
    const double bond_T = discount(rates, T);
    const double rho = rates.rho_rs;
    const std::size_t n = b.size();
    std::vector<double> log_fwd(n);
    std::vector<double> y(n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double lb = log_bond_given_rate(rates, b.t, T, b.terminal_rate[i]);
        log_fwd[i] = b.terminal_log_stock[i] - lb;
        w[i] = std::exp(-b.integrated_rate[i] + lb) / bond_T;
        const double v = b.terminal_variance[i];
        y[i] = v + 2.0 * rho * std::sqrt(std::max(v, 0.0)) * d.sigma_B + d.sigma_B * d.sigma_B;
    }
    const double x0 = std::log(x) + std::log(d.bond) - std::log(bond_T);
    return kernel_conditional_weighted(log_fwd, y, w, x0, cfg);
}

// ---------------------------------------------------------------------------
// Hybrid price surfaces.

struct HybridPrices {
    PriceSurface surface;
    std::vector<double> std_error;  ///< per node, row-major like prices
    bool conditional = false;       ///< conditional (lognormal given rates) estimator used
};

/// Forward-rate and discount curves of a rates model sampled every `dt` up to
/// the last maturity and at each maturity.
inline void install_rate_curves(PriceSurface& s, const RatesSpec& rates, double dt = 0.01) {
    std::vector<double> ts{0.0};
    const double horizon = s.maturities.back();
    for (double u = dt; u < horizon - 1e-12; u += dt) {
        ts.push_back(u);
    }
    for (double t : s.maturities) {
        ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             ts.end());
    s.forward_rate.times = ts;
    s.forward_rate.values.clear();
    s.discount.times = ts;
    s.discount.values.clear();
    for (double t : ts) {
        const RatesDescriptors d = rates_descriptors(rates, t, t);
        s.forward_rate.values.push_back(d.fwd_rate);
        s.discount.values.push_back(d.bond);
    }
}

/// Discounted calls E[e^{-int r} (S_T - K)^+] for a hybrid model. With flat
/// stock volatility the stock is lognormal given the rate path, so each
/// antithetic pair of rate paths contributes a closed-form conditional price;
/// this keeps the surface smooth across strikes and maturities. Other
/// variance drivers average payoffs.
inline HybridPrices hybrid_price_surface(const ModelSpec& model, const std::vector<double>& maturities,
                                         const std::vector<double>& strikes, const MCConfig& cfg) {
    model.validate();
    cfg.validate();
    if (model.kind != ModelKind::hybrid) {
        throw ValidationError("kind", "hybrid price surfaces need the hybrid model");
    }
    const RatesSpec& rs = *model.rates;
    HybridPrices out;
    out.surface.maturities = maturities;
    out.surface.strikes = strikes;
    out.surface.spot = model.s0;
    out.surface.prices.assign(maturities.size() * strikes.size(), 0.0);
    out.std_error.assign(out.surface.prices.size(), 0.0);
    install_rate_curves(out.surface, rs);
    const std::size_t nt = maturities.size();
    const std::size_t nk = strikes.size();
    const std::size_t n = cfg.paths;

    if (model.hybrid_variance != HybridVariance::flat) {
        const auto bundles = simulate_snapshots(model, maturities, cfg);
        std::vector<double> pay(n);
        for (std::size_t i = 0; i < nt; ++i) {
            for (std::size_t j = 0; j < nk; ++j) {
                for (std::size_t p = 0; p < n; ++p) {
                    pay[p] = std::exp(-bundles[i].integrated_rate[p]) *
                             std::max(std::exp(bundles[i].terminal_log_stock[p]) - strikes[j], 0.0);
                }
                const auto e = stats::estimate_mean(pay);
                out.surface.at(i, j) = e.mean;
                out.std_error[i * nk + j] = e.std_error;
            }
        }
        out.surface.validate(1e-6);
        return out;
    }

    out.conditional = true;
    const detail::Grid grid = detail::make_grid(maturities, cfg.steps);
    const auto& tg = grid.times;
    const bool vas = rs.kind == RatesKind::vasicek;
    std::vector<vasicek::Step> steps;
    std::vector<double> drift_step(tg.size(), 0.0);
    for (std::size_t k = 0; k + 1 < tg.size(); ++k) {
        if (vas) {
            steps.emplace_back(rs.a, tg[k + 1] - tg[k]);
        } else {
            drift_step[k] = rs.curve.integral(tg[k], tg[k + 1]);
        }
    }
    const double theta = rs.long_run();
    const double sig = model.sigma;
    const double rho = rs.rho_rs;
    const double perp2 = std::max(0.0, 1.0 - rho * rho);
    const double ls0 = std::log(model.s0);

    // Antithetic pairs (rate normals z and -z); fixed blocks of pairs keep the
    // summation order independent of the worker count.
    const std::size_t pairs = (n + 1) / 2;
    constexpr std::size_t block = 128;
    const std::size_t nblocks = (pairs + block - 1) / block;
    const std::size_t cells = nt * nk;
    std::vector<double> sums(nblocks * cells, 0.0);
    std::vector<double> sqs(nblocks * cells, 0.0);
    parallel_for(nblocks, resolve_threads(cfg.threads), [&](std::size_t bi) {
        double* sum = &sums[bi * cells];
        double* sq = &sqs[bi * cells];
        const std::size_t lo = bi * block;
        const std::size_t hi = std::min(pairs, lo + block);
        for (std::size_t p = lo; p < hi; ++p) {
            Philox rng(cfg.seed, p);
            std::normal_distribution<double> normal;
            double r[2] = {vas ? rs.r0 : 0.0, vas ? rs.r0 : 0.0};
            double int_r[2] = {0.0, 0.0};
            double w[2] = {0.0, 0.0};
            std::size_t snap = 0;
            for (std::size_t k = 0; k + 1 < tg.size(); ++k) {
                const double dt = tg[k + 1] - tg[k];
                if (vas) {
                    const double z1 = normal(rng);
                    const double z2 = normal(rng);
                    const double z3 = normal(rng);
                    for (int a = 0; a < 2; ++a) {
                        const double sgn = a == 0 ? 1.0 : -1.0;
                        const auto d = steps[k].apply(r[a], theta, rs.sigma_r, sgn * z1, sgn * z2, sgn * z3);
                        r[a] = d.r_next;
                        int_r[a] += d.integral;
                        w[a] += d.dw;
                    }
                } else {
                    const double dw = std::sqrt(dt) * normal(rng);
                    for (int a = 0; a < 2; ++a) {
                        int_r[a] += drift_step[k];
                        w[a] += a == 0 ? dw : -dw;
                    }
                }
                if (snap < grid.snaps.size() && grid.snaps[snap] == k + 1) {
                    const double T = tg[k + 1];
                    const double var = sig * sig * perp2 * T;
                    double disc[2];
                    double fwd[2];
                    for (int a = 0; a < 2; ++a) {
                        // Given the rate path, ln S_T ~ N(m, var).
                        const double m = ls0 + int_r[a] - 0.5 * sig * sig * T + sig * rho * w[a];
                        disc[a] = std::exp(-int_r[a]);
                        fwd[a] = std::exp(m + 0.5 * var);
                    }
                    for (std::size_t j = 0; j < nk; ++j) {
                        const double c = 0.5 * (disc[0] * black_scholes_call(fwd[0], strikes[j], 1.0, var) +
                                                disc[1] * black_scholes_call(fwd[1], strikes[j], 1.0, var));
                        sum[snap * nk + j] += c;
                        sq[snap * nk + j] += c * c;
                    }
                    ++snap;
                }
            }
        }
    });
    const double inv = 1.0 / static_cast<double>(pairs);
    for (std::size_t c = 0; c < cells; ++c) {
        double s = 0.0;
        double q = 0.0;
        for (std::size_t bi = 0; bi < nblocks; ++bi) {
            s += sums[bi * cells + c];
            q += sqs[bi * cells + c];
        }
        const double mean = s * inv;
        out.surface.prices[c] = mean;
        out.std_error[c] =
            pairs > 1 ? std::sqrt(std::max(q * inv - mean * mean, 0.0) / static_cast<double>(pairs - 1)) : 0.0;
    }
    out.surface.validate(1e-6);
    return out;
}

/// CSV `t,x,cov,cov_se,bond,fwd_rate`.
inline void write_slices_csv(std::ostream& os, std::span<const HybridSlice> slices) {
    os << "t,x,cov,cov_se,bond,fwd_rate\n";
    char buf[192];
    for (const auto& s : slices) {
        for (std::size_t k = 0; k < s.x_levels.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.x_levels[k], s.cov[k],
                          s.cov_se[k], s.bond, s.fwd_rate);
            os << buf;
        }
    }
}

} // namespace mimicvol
