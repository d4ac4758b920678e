#pragma once

// Independent estimators used as test oracles.

#include <cmath>
#include <random>
#include <vector>

#include "mimicvol/hybrid_rates.hpp"

namespace mimicvol::oracle {

/// Direct simulation under the T-forward measure of the hybrid model with
/// Vasicek rates and CIR variance (Euler in r and ln S, exact BESQ in V):
/// dr = (a (theta - r) - sigma_r sigma_B(t,T)) dt + sigma_r dW^r,
/// d ln S = (r - V/2 - rho sqrt(V) sigma_B(t,T)) dt + sqrt(V) (rho dW^r + sqrt(1-rho^2) dW).
/// Returns E^T[V + 2 rho sqrt(V) sigma_B + sigma_B^2 | S_t / B(t,T) = x B(0,t) / B(0,T)].
inline CondEstimate forward_measure_direct(const RatesSpec& rs, const CirSpec& cir, double s0, double t, double T,
                                           double x, std::size_t paths, std::size_t steps_per_year,
                                           std::uint64_t seed, const MCConfig& kernel) {
    const std::size_t steps = static_cast<std::size_t>(std::ceil(t * static_cast<double>(steps_per_year)));
    const double dt = t / static_cast<double>(steps);
    const CirBesselMap map = cir_bessel_map(cir);
    const double theta = rs.long_run();
    const double rho = rs.rho_rs;
    const double perp = std::sqrt(1.0 - rho * rho);
    const double sb_t = rs.sigma_r * vasicek::b(rs.a, T - t);
    std::vector<double> lf(paths);
    std::vector<double> y(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        Philox rng(seed, p);
        std::normal_distribution<double> normal;
        double r = rs.r0;
        double ls = std::log(s0);
        double xb = cir.v0;
        double v = cir.v0;
        for (std::size_t k = 0; k < steps; ++k) {
            const double u = dt * static_cast<double>(k);
            const double sb = rs.sigma_r * vasicek::b(rs.a, T - u);
            const double zr = normal(rng);
            const double zs = normal(rng);
            const double sq = std::sqrt(dt);
            ls += (r - 0.5 * v - rho * std::sqrt(v) * sb) * dt + std::sqrt(v) * sq * (rho * zr + perp * zs);
            r += (rs.a * (theta - r) - rs.sigma_r * sb) * dt + rs.sigma_r * sq * zr;
            const double g0 = map.g(u);
            const double g1 = map.g(u + dt);
            xb = detail::besq_step(rng, xb, g1 - g0, map.spec.delta);
            v = map.f(u + dt) * xb;
        }
        lf[p] = ls - vasicek::log_bond_at(rs, T - t, r);
        y[p] = v + 2.0 * rho * std::sqrt(v) * sb_t + sb_t * sb_t;
    }
    const double x0 = std::log(x) + std::log(vasicek::bond(rs, t)) - std::log(vasicek::bond(rs, T));
    return kernel_conditional(lf, y, x0, kernel);
}

/// E[V e^{-int r} | S in a narrow log bin] / E[e^{-int r} | same bin], delta-method SE.
inline CondEstimate binned_spot_mimic(const PathBundle& b, double x, double half_width) {
    const double lx = std::log(x);
    double sw = 0.0;
    double swv = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (std::abs(b.terminal_log_stock[i] - lx) < half_width) {
            const double d = std::exp(-b.integrated_rate[i]);
            sw += d;
            swv += d * b.terminal_variance[i];
            idx.push_back(i);
        }
    }
    CondEstimate e;
    e.value = swv / sw;
    double var = 0.0;
    for (std::size_t i : idx) {
        const double d = std::exp(-b.integrated_rate[i]) / sw;
        const double r = b.terminal_variance[i] - e.value;
        var += d * d * r * r;
    }
    e.std_error = std::sqrt(var);
    e.n_effective = static_cast<double>(idx.size());
    return e;
}

/// Cov^t(r_t; 1{S_t > x}) = E[D (r - f) 1] / B with analytic B(0,t), f(0,t).
inline stats::MeanEstimate brute_cov(const PathBundle& b, const RatesSpec& rs, double x) {
    const double bond = vasicek::bond(rs, b.t);
    const double f = vasicek::forward_rate(rs, b.t);
    const double lx = std::log(x);
    std::vector<double> psi(b.size());
    for (std::size_t i = 0; i < psi.size(); ++i) {
        const double one = b.terminal_log_stock[i] > lx ? 1.0 : 0.0;
        psi[i] = std::exp(-b.integrated_rate[i]) * (b.terminal_rate[i] - f) * one / bond;
    }
    return stats::estimate_mean(psi);
}

} // namespace mimicvol::oracle
