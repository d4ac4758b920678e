#pragma once

// Short-rate descriptions: a deterministic curve or a Vasicek model
// dr = a(theta - r) dt + sigma_r dW^r.

#include <array>
#include <cmath>
#include <limits>

#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/interp.hpp"
#include "mimicvol/core/quadrature.hpp"

namespace mimicvol {

enum class RatesKind { deterministic, vasicek };

struct RatesSpec {
    RatesKind kind = RatesKind::deterministic;
    interp::Curve curve = interp::Curve::constant(0.0);  ///< r(t), deterministic kind
    double a = 0.1;
    double sigma_r = 0.0;
    double r0 = 0.0;
    double theta = std::numeric_limits<double>::quiet_NaN();  ///< long-run level; NaN means r0
    double rho_rs = 0.0;

    double long_run() const { return std::isnan(theta) ? r0 : theta; }

    void validate() const {
        if (!(rho_rs >= -1.0 && rho_rs <= 1.0)) {
            throw ValidationError("rho_rs", "rho_rs must lie in [-1, 1]");
        }
        if (kind == RatesKind::deterministic) {
            curve.validate("curve");
            if (sigma_r != 0.0) {
                throw ValidationError("sigma_r", "deterministic rates require sigma_r = 0");
            }
            return;
        }
        if (!std::isfinite(a)) {
            throw ValidationError("a", "a must be finite");
        }
        if (!(sigma_r >= 0.0) || !std::isfinite(sigma_r)) {
            throw ValidationError("sigma_r", "sigma_r must be nonnegative");
        }
        if (!std::isfinite(r0)) {
            throw ValidationError("r0", "r0 must be finite");
        }
        if (!std::isnan(theta) && !std::isfinite(theta)) {
            throw ValidationError("theta", "theta must be finite");
        }
    }
};

namespace vasicek {

/// (1 - e^{-a tau}) / a, equal to tau at a = 0.
inline double b(double a, double tau) {
    if (a == 0.0) {
        return tau;
    }
    return -std::expm1(-a * tau) / a;
}

/// int_0^tau b(a, u)^2 du.
inline double b_squared_integral(double a, double tau) {
    if (std::abs(a * tau) > 0.5) {
        const double b1 = b(a, tau);
        const double b2 = b(2.0 * a, tau);
        return (tau - 2.0 * b1 + b2) / (a * a);
    }
    static const quad::GaussLegendre rule(16);
    return rule.integrate([a](double u) { const double v = b(a, u); return v * v; }, 0.0, tau);
}

inline double bond(const RatesSpec& s, double t) {
    const double th = s.long_run();
    return std::exp(-th * t - (s.r0 - th) * b(s.a, t) + 0.5 * s.sigma_r * s.sigma_r * b_squared_integral(s.a, t));
}

inline double forward_rate(const RatesSpec& s, double t) {
    const double th = s.long_run();
    const double bt = b(s.a, t);
    return th + (s.r0 - th) * std::exp(-s.a * t) - 0.5 * s.sigma_r * s.sigma_r * bt * bt;
}

/// ln B(t, t + tau) given r_t.
inline double log_bond_at(const RatesSpec& s, double tau, double r) {
    const double th = s.long_run();
    const double bt = b(s.a, tau);
    return -th * (tau - bt) - bt * r + 0.5 * s.sigma_r * s.sigma_r * b_squared_integral(s.a, tau);
}

/// Exact transition over a step of length dt of (r, int r, W^r):
/// r' = mean_r + sigma_r X1, int r = mean_int + sigma_r X2, dW = X3 where
/// (X1, X2, X3) = L Z with Z standard normal.
struct Step {
    double decay = 1.0;        ///< e^{-a dt}
    double b_dt = 0.0;         ///< b(a, dt)
    double dt = 0.0;
    std::array<double, 6> chol{};  ///< lower triangle of L, row-major

    Step(double a, double step) : decay(std::exp(-a * step)), b_dt(b(a, step)), dt(step) {
        // Kernels as functions of time-to-step-end v: e^{-a v}, b(a, v), 1.
        auto cov = [&](auto k1, auto k2) {
            return quad::integrate([&](double v) { return k1(v) * k2(v); }, 0.0, step, 4, 16);
        };
        auto e = [a](double v) { return std::exp(-a * v); };
        auto bb = [a](double v) { return b(a, v); };
        auto one = [](double) { return 1.0; };
        const double c11 = cov(e, e);
        const double c21 = cov(bb, e);
        const double c22 = cov(bb, bb);
        const double c31 = cov(one, e);
        const double c32 = cov(one, bb);
        const double c33 = step;
        const double l11 = std::sqrt(c11);
        const double l21 = c21 / l11;
        const double l22 = std::sqrt(std::max(c22 - l21 * l21, 0.0));
        const double l31 = c31 / l11;
        const double l32 = l22 > 0.0 ? (c32 - l31 * l21) / l22 : 0.0;
        const double l33 = std::sqrt(std::max(c33 - l31 * l31 - l32 * l32, 0.0));
        chol = {l11, l21, l22, l31, l32, l33};
    }

    struct Draw {
        double r_next;
        double integral;
        double dw;
    };

    Draw apply(double r, double theta, double sigma_r, double z1, double z2, double z3) const {
        const double x1 = chol[0] * z1;
        const double x2 = chol[1] * z1 + chol[2] * z2;
        const double x3 = chol[3] * z1 + chol[4] * z2 + chol[5] * z3;
        const double mean_r = r * decay + theta * (1.0 - decay);
        const double mean_int = r * b_dt + theta * (dt - b_dt);
        return {mean_r + sigma_r * x1, mean_int + sigma_r * x2, x3};
    }
};

} // namespace vasicek

struct RatesDescriptors {
    double bond = 1.0;      ///< B(0, t)
    double fwd_rate = 0.0;  ///< f(0, t)
    double sigma_B = 0.0;   ///< sigma_B(t, T)
};

inline RatesDescriptors rates_descriptors(const RatesSpec& spec, double t, double T) {
    spec.validate();
    if (!(t >= 0.0) || !(T >= t)) {
        throw DomainError("rates_descriptors requires 0 <= t <= T");
    }
    if (spec.kind == RatesKind::deterministic) {
        return {std::exp(-spec.curve.integral(0.0, t)), spec.curve(t), 0.0};
    }
    return {vasicek::bond(spec, t), vasicek::forward_rate(spec, t), spec.sigma_r * vasicek::b(spec.a, T - t)};
}

/// B(0, t) for either kind.
inline double discount(const RatesSpec& spec, double t) {
    return rates_descriptors(spec, t, t).bond;
}

} // namespace mimicvol
