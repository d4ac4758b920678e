#pragma once

// Squared Bessel process R^2 and its time integral A_t = int_0^t R_s^2 ds:
// Laplace transforms, the density of A_1, the k-series used by the local
// variance formulas, the joint density of (R_t^2, A_t), and the CIR time-space map.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/quadrature.hpp"
#include "mimicvol/specfun.hpp"

namespace mimicvol {

struct BesselSpec {
    double delta = 2.0;  ///< dimension
    double start = 0.0;  ///< R_0

    void validate() const {
        if (!(delta > 0.0) || !std::isfinite(delta)) {
            throw ValidationError("delta", "delta must be positive");
        }
        if (!(start >= 0.0) || !std::isfinite(start)) {
            throw ValidationError("start", "start must be nonnegative");
        }
    }
};

struct SeriesEval {
    double value = 0.0;
    int terms_used = 0;
    double truncation_bound = 0.0;  ///< magnitude of the first dropped term
};

/// Truncation policy shared by the alternating series. A series stops once its
/// terms have started to decrease, at least `min_terms` have been summed, and
/// the next term is below `rel_tol` times the partial sum (or below the rounding
/// noise left by the largest term, when the terms cancel heavily).
struct SeriesConfig {
    double rel_tol = 1e-13;
    int min_terms = 5;
    int max_terms = 50000;

    void validate() const {
        if (!(rel_tol > 0.0)) {
            throw ValidationError("rel_tol", "rel_tol must be positive");
        }
        if (min_terms < 1) {
            throw ValidationError("min_terms", "min_terms must be at least 1");
        }
        if (max_terms < min_terms) {
            throw ValidationError("max_terms", "max_terms must be at least min_terms");
        }
    }
};

struct CirSpec {
    double kappa = 1.0;
    double theta = 0.04;
    double eta = 0.3;
    double v0 = 0.04;

    void validate() const {
        if (!std::isfinite(kappa)) {
            throw ValidationError("kappa", "kappa must be finite");
        }
        if (!(theta > 0.0)) {
            throw ValidationError("theta", "theta must be positive");
        }
        if (!(eta > 0.0)) {
            throw ValidationError("eta", "eta must be positive");
        }
        if (!(v0 >= 0.0)) {
            throw ValidationError("v0", "v0 must be nonnegative");
        }
    }
};

namespace detail {

class SeriesAccumulator {
public:
    explicit SeriesAccumulator(const SeriesConfig& cfg) : cfg_(cfg) {}

    /// Feeds term n. Returns true once the term is dropped and the series is done.
    bool feed(double term) {
        if (done_) {
            return true;
        }
        const double mag = std::abs(term);
        const bool decreasing = n_ > 0 && mag <= prev_abs_;
        past_peak_ = past_peak_ || decreasing;
        const double floor = std::max(cfg_.rel_tol * std::abs(sum_), noise_ratio * max_abs_);
        if (n_ >= cfg_.min_terms && past_peak_ && mag <= floor) {
            done_ = true;
            bound_ = mag;
            return true;
        }
        sum_ += term;
        prev_abs_ = mag;
        max_abs_ = std::max(max_abs_, mag);
        ++n_;
        return false;
    }

    [[nodiscard]] bool done() const { return done_; }
    [[nodiscard]] SeriesEval result() const { return {sum_, n_, bound_}; }

private:
    static constexpr double noise_ratio = 1e-19;

    SeriesConfig cfg_;
    double sum_ = 0.0;
    double max_abs_ = 0.0;
    double prev_abs_ = 0.0;
    double bound_ = 0.0;
    int n_ = 0;
    bool past_peak_ = false;
    bool done_ = false;
};

inline double log_series_weight(double h, int n) {
    // log of 2^h (h)_n / n!
    return h * std::numbers::ln2 + std::lgamma(n + h) - std::lgamma(h) - std::lgamma(n + 1.0);
}

} // namespace detail

/// Density of A_1 = int_0^1 R_s^2 ds for a Bessel process of dimension delta started at 0.
inline SeriesEval density_a1(double delta, double x, const SeriesConfig& cfg = {}) {
    if (!(delta > 0.0)) {
        throw DomainError("density_a1: delta must be positive");
    }
    if (!(x > 0.0)) {
        throw DomainError("density_a1: x must be positive");
    }
    const double h = 0.5 * delta;
    // Beyond this the density is below exp(-800) (its decay rate is pi^2/8).
    if (std::numbers::pi * std::numbers::pi * x / 8.0 > 800.0 + 2.0 * std::max(h, 1.0) * std::log(x)) {
        return {0.0, 0, 0.0};
    }
    const double log_pref = -0.5 * std::log(2.0 * std::numbers::pi * x * x * x);
    detail::SeriesAccumulator acc(cfg);
    for (int n = 0; n <= cfg.max_terms; ++n) {
        const double m = 2.0 * n + h;
        const double log_mag = detail::log_series_weight(h, n) + std::log(m) + log_pref - m * m / (2.0 * x);
        const double term = (n % 2 == 0 ? 1.0 : -1.0) * std::exp(log_mag);
        if (acc.feed(term)) {
            return acc.result();
        }
    }
    throw ConvergenceError("density_a1: series did not converge within max_terms at x = " +
                           std::to_string(x));
}

/// E[exp(-a R_t^2 - (b^2/2) A_t)] for R started at spec.start.
inline double laplace_joint(const BesselSpec& spec, double a, double b, double t) {
    spec.validate();
    if (!(a >= 0.0) || !(b >= 0.0) || !(t > 0.0)) {
        throw DomainError("laplace_joint: requires a >= 0, b >= 0, t > 0");
    }
    const double x2 = spec.start * spec.start;
    const double u = b * t;
    if (u > 20.0) {
        // Divide numerator and denominator by e^u to avoid overflow.
        const double e = std::exp(-2.0 * u);
        const double ch = 0.5 * (1.0 + e);
        const double s = 0.5 * (1.0 - e) / b;
        const double d = ch + 2.0 * a * s;
        const double expo = -x2 * (0.5 * b * b * s + a * ch) / d;
        return std::exp(-0.5 * spec.delta * (u + std::log(d)) + expo);
    }
    const double sinhc = u < 1e-4 ? 1.0 + u * u / 6.0 : std::sinh(u) / u;
    const double s = t * sinhc;  // sinh(bt)/b, equal to t at b = 0
    const double ch = std::cosh(u);
    const double d = ch + 2.0 * a * s;
    const double expo = -x2 * (0.5 * b * b * s + a * ch) / d;
    return std::pow(d, -0.5 * spec.delta) * std::exp(expo);
}

enum class KMethod { series, contour };

/// k(a,b) = E[A_1^{-1/2} exp(-a/A_1 - b A_1)] and its b-derivative in scaled form:
/// k = k_scaled * exp(-log_scale), and likewise for dk.
struct KPairScaled {
    double k = 0.0;
    double dk = 0.0;
    double log_scale = 0.0;
    KMethod method = KMethod::series;
    SeriesEval k_eval;
    SeriesEval dk_eval;
};

namespace detail {

/// log E[exp(-lambda A_1)] = -h log cosh(sqrt(2 lambda)), continuous off (-inf, -pi^2/8].
inline std::complex<double> log_laplace_a1(std::complex<double> lambda, double h) {
    const std::complex<double> w = std::sqrt(2.0 * lambda);
    return -h * (w - std::numbers::ln2 + std::log(1.0 + std::exp(-2.0 * w)));
}

/// tanh(w)/w with w = sqrt(2 lambda), the lambda-derivative of log cosh(w).
inline std::complex<double> tanh_ratio(std::complex<double> lambda) {
    const std::complex<double> w = std::sqrt(2.0 * lambda);
    if (std::abs(w) < 1e-4) {
        return 1.0 - w * w / 3.0;
    }
    return std::tanh(w) / w;
}

/// Real tanh(w)/w for real lambda > -pi^2/8 (tan(v)/v below zero).
inline double tanh_ratio_real(double lambda) {
    if (std::abs(lambda) < 1e-8) {
        return 1.0 - 2.0 * lambda / 3.0;
    }
    if (lambda > 0.0) {
        const double w = std::sqrt(2.0 * lambda);
        return std::tanh(w) / w;
    }
    const double v = std::sqrt(-2.0 * lambda);
    return std::tan(v) / v;
}

/// k and dk/db from
///   k(a,b) = pi^{-1/2} int exp(2 i sqrt(a) z) E[exp(-(b + z^2) A_1)] ds,  z = s + i sigma,
/// with sigma at the saddle point of the integrand on the imaginary axis. Free
/// of the cancellation that affects the alternating series when a/b is large.
inline KPairScaled k_pair_contour(double delta, double a, double b) {
    const double h = 0.5 * delta;
    const double sa = std::sqrt(a);
    const double sigma_max = std::sqrt(b + std::numbers::pi * std::numbers::pi / 8.0);
    double sigma = 0.0;
    if (a > 0.0) {
        double lo = 0.0;
        double hi = sigma_max;
        for (int i = 0; i < 200 && hi - lo > 1e-15 * sigma_max; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (mid * h * tanh_ratio_real(b - mid * mid) < sa) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        sigma = lo;
    }
    const double log_scale = 2.0 * sa * sigma;
    auto integrand = [&](double s, bool deriv) {
        const std::complex<double> z(s, sigma);
        const std::complex<double> lambda = b + z * z;
        std::complex<double> v = std::exp(std::complex<double>(0.0, 2.0 * sa) * z + log_scale + log_laplace_a1(lambda, h));
        if (deriv) {
            v *= -h * tanh_ratio(lambda);
        }
        return v.real();
    };
    static const quad::GaussLegendre rule(16);
    const double eps = std::max(sigma_max - sigma, 1e-10);
    const double width_max = std::min(0.25, 1.0 / std::max(sa, 1e-12));
    const double peak = std::abs(integrand(0.0, false));
    double k = 0.0;
    double dk = 0.0;
    double lo = 0.0;
    double width = std::min(eps, width_max);
    int panels = 0;
    for (; panels < 200000; ++panels) {
        const double hi = lo + width;
        double pk = 0.0;
        double pdk = 0.0;
        double pmax = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double s = 0.5 * (lo + hi) + 0.5 * width * rule.nodes[i];
            const double fk = integrand(s, false);
            const double fd = integrand(s, true);
            pk += rule.weights[i] * fk;
            pdk += rule.weights[i] * fd;
            pmax = std::max(pmax, std::abs(fk));
        }
        k += 0.5 * width * pk;
        dk += 0.5 * width * pdk;
        lo = hi;
        width = std::min(2.0 * width, width_max);
        if (pmax < 1e-18 * peak && lo > 1.0) {
            break;
        }
    }
    const double c = 2.0 / std::sqrt(std::numbers::pi);
    KPairScaled out;
    out.method = KMethod::contour;
    out.log_scale = log_scale;
    out.k = c * k;
    out.dk = c * dk;
    out.k_eval = {out.k, panels * 16, 1e-13 * std::abs(out.k)};
    out.dk_eval = {out.dk, panels * 16, 1e-13 * std::abs(out.dk)};
    return out;
}

} // namespace detail

/// Series evaluation with an automatic switch to the contour integral when the
/// alternating terms cancel by more than five digits (a/b large or delta large
/// with b small) or the series does not converge.
inline KPairScaled k_pair_scaled(double delta, double a, double b, const SeriesConfig& cfg = {}) {
    if (!(delta > 0.0)) {
        throw DomainError("k_pair: delta must be positive");
    }
    if (!(a >= 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw DomainError("k_pair: requires a >= 0 and b > 0");
    }
    constexpr double max_cancellation = 1e5;
    const double h = 0.5 * delta;
    const double sqrt2b = std::sqrt(2.0 * b);
    const double ck = 2.0 * std::sqrt(b / std::numbers::pi);
    const double cdk = -std::sqrt(2.0 / std::numbers::pi);
    const double z0 = std::sqrt(2.0 * a + h * h) * sqrt2b;
    detail::SeriesAccumulator acc_k(cfg);
    detail::SeriesAccumulator acc_dk(cfg);
    double abs_k = 0.0;
    double abs_dk = 0.0;
    double w = std::pow(2.0, h);
    for (int n = 0; n <= cfg.max_terms; ++n) {
        const double m = 2.0 * n + h;
        const double alpha = std::sqrt(2.0 * a + m * m);
        const double z = alpha * sqrt2b;
        const specfun::BesselK01 kz = specfun::bessel_k01_scaled(z);
        const double decay = std::exp(-(z - z0));
        const double sign = n % 2 == 0 ? 1.0 : -1.0;
        const double common = sign * w * m * decay;
        const double tk = common * ck / alpha * kz.k1;
        const double tdk = common * cdk * kz.k0;
        if (!acc_k.feed(tk)) {
            abs_k += std::abs(tk);
        }
        if (!acc_dk.feed(tdk)) {
            abs_dk += std::abs(tdk);
        }
        if (acc_k.done() && acc_dk.done()) {
            KPairScaled out;
            out.k_eval = acc_k.result();
            out.dk_eval = acc_dk.result();
            out.k = out.k_eval.value;
            out.dk = out.dk_eval.value;
            out.log_scale = z0;
            const bool well_conditioned = out.k > 0.0 && out.dk < 0.0 && abs_k <= max_cancellation * out.k &&
                                          abs_dk <= max_cancellation * -out.dk;
            if (well_conditioned) {
                return out;
            }
            return detail::k_pair_contour(delta, a, b);
        }
        w *= (n + h) / (n + 1.0);
        if (n > 2000 && n % 1000 == 0 && abs_k > max_cancellation * 1e3 * std::abs(acc_k.result().value)) {
            break;  // cancellation already hopeless
        }
    }
    return detail::k_pair_contour(delta, a, b);
}

/// (k(a,b), dk/db(a,b)) for A_1 with R started at 0.
inline std::pair<SeriesEval, SeriesEval> k_pair(double delta, double a, double b,
                                                const SeriesConfig& cfg = {}) {
    KPairScaled s = k_pair_scaled(delta, a, b, cfg);
    const double f = std::exp(-s.log_scale);
    SeriesEval k = s.k_eval;
    SeriesEval dk = s.dk_eval;
    k.value *= f;
    k.truncation_bound *= f;
    dk.value *= f;
    dk.truncation_bound *= f;
    return {k, dk};
}

/// k^t(a,b) = E[A_t^{-1/2} exp(-a/A_t - b A_t)] = (1/t) k(a/t^2, b t^2).
inline double scale_k(double delta, double t, double a, double b, const SeriesConfig& cfg = {}) {
    if (!(t > 0.0)) {
        throw DomainError("scale_k: t must be positive");
    }
    return k_pair(delta, a / (t * t), b * t * t, cfg).first.value / t;
}

// ---------------------------------------------------------------------------
// Joint density of (R_t^2, A_t) for R started at 0.
//
// Evaluated in the scaled variables X = x/t, Y = y/t^2, where g_t(x,y) =
// g_1(X,Y)/t^3. The double series is regrouped by m = j + k so that all
// parabolic cylinder terms of one group share the argument xi_m. Validated box:
// delta in [0.5, 8], X in [1e-8, 40], Y in [1e-8, 40]. Inside the box the
// result matches a 60-digit evaluation of the same series to 1e-9 relative
// where g_1 > 1e-6. Where the density is negligible (large Y) the alternating
// groups cancel down to rounding noise; truncation_bound then reports that noise
// level and values inside it are clamped at zero.

struct JointDensityBox {
    double delta_min = 0.5;
    double delta_max = 8.0;
    double x_min = 1e-8;
    double x_max = 40.0;
    double y_min = 1e-8;
    double y_max = 40.0;
};

inline SeriesEval joint_density_g(double delta, double t, double x, double y,
                                  const SeriesConfig& cfg = {}) {
    if (!(x > 0.0) || !(y > 0.0) || !(t > 0.0)) {
        throw DomainError("joint_density_g: requires x > 0, y > 0, t > 0");
    }
    const JointDensityBox box;
    const double xs = x / t;
    const double ys = y / (t * t);
    if (delta < box.delta_min || delta > box.delta_max || xs < box.x_min || xs > box.x_max ||
        ys < box.y_min || ys > box.y_max) {
        throw RangeError("joint_density_g: (delta, x/t, y/t^2) outside the validated box");
    }
    const double h = 0.5 * delta;
    const double log_c = -0.5 * std::log(2.0 * std::numbers::pi) - std::lgamma(h);
    const double log_x = std::log(xs);
    const double log_y = std::log(ys);
    const double sqrt_y = std::sqrt(ys);
    std::vector<double> u;
    double total_abs = 0.0;
    auto finish = [&](double value, int terms, double bound) {
        const double noise = 1e-15 * total_abs;
        if (value < 0.0 && -value <= 16.0 * noise) {
            value = 0.0;
        }
        const double t3 = t * t * t;
        return SeriesEval{value / t3, terms, std::max(bound, noise) / t3};
    };
    double sum = 0.0;
    double prev_block = 0.0;
    double max_block = 0.0;
    bool past_peak = false;
    constexpr int max_groups = 47;  // keeps D orders within the validated range
    for (int m = 0; m <= max_groups; ++m) {
        const double xi = (2.0 * m + h + 0.5 * xs) / sqrt_y;
        if (xi > 100.0) {
            // This group and all later ones are below exp(-5000).
            return finish(sum, m, 0.0);
        }
        u.assign(static_cast<std::size_t>(m) + 1, 0.0);
        specfun::parabolic_d_scaled_sequence(h + 1.0, xi, u);
        const double log_common = log_c + std::lgamma(h + m) - 0.5 * xi * xi;
        double block = 0.0;
        double block_abs = 0.0;
        for (int j = 0; j <= m; ++j) {
            const double uj = u[static_cast<std::size_t>(j)];
            if (uj == 0.0) {
                continue;
            }
            const double log_mag = log_common + (j + h - 1.0) * log_x - (0.5 * j + 0.5 * h + 1.0) * log_y -
                                   std::lgamma(j + 1.0) - std::lgamma(h + j) - std::lgamma(m - j + 1.0) +
                                   std::log(std::abs(uj));
            const double mag = std::exp(log_mag);
            const double sign = ((j % 2 == 0) ? 1.0 : -1.0) * (uj < 0.0 ? -1.0 : 1.0);
            block += sign * mag;
            block_abs += mag;
        }
        past_peak = past_peak || (m > 0 && block_abs <= prev_block);
        sum += block;
        total_abs += block_abs;
        max_block = std::max(max_block, block_abs);
        // Below the rounding noise of the largest group nothing further can change the sum.
        const double floor = std::max(cfg.rel_tol * std::abs(sum), 1e-19 * max_block);
        if (m + 1 >= cfg.min_terms && past_peak && block_abs <= floor) {
            return finish(sum, m + 1, block_abs);
        }
        prev_block = block_abs;
    }
    // Groups beyond xi = 100 vanish to double precision.
    if (past_peak && prev_block <= std::max(cfg.rel_tol * std::abs(sum), 1e-19 * max_block)) {
        return finish(sum, max_groups, prev_block);
    }
    throw ConvergenceError("joint_density_g: double series did not converge");
}

// ---------------------------------------------------------------------------
// CIR variance as a time-changed squared Bessel process:
// V_t = f(t) R^2_{g(t)} with R_0 = sqrt(v0).

struct CirBesselMap {
    double kappa = 0.0;
    double eta = 0.0;
    BesselSpec spec;

    [[nodiscard]] double f(double t) const { return std::exp(-kappa * t); }

    [[nodiscard]] double g(double t) const {
        const double q = 0.25 * eta * eta;
        if (std::abs(kappa * t) < 1e-12) {
            return q * t * (1.0 + 0.5 * kappa * t);
        }
        return q * std::expm1(kappa * t) / kappa;
    }

    [[nodiscard]] double g_prime(double t) const { return 0.25 * eta * eta * std::exp(kappa * t); }

    /// Inverse of g.
    [[nodiscard]] double g_inverse(double s) const {
        const double q = 0.25 * eta * eta;
        if (std::abs(kappa) < 1e-14) {
            return s / q;
        }
        return std::log1p(kappa * s / q) / kappa;
    }
};

inline CirBesselMap cir_bessel_map(const CirSpec& cir) {
    cir.validate();
    CirBesselMap map;
    map.kappa = cir.kappa;
    map.eta = cir.eta;
    map.spec.delta = 4.0 * cir.kappa * cir.theta / (cir.eta * cir.eta);
    map.spec.start = std::sqrt(cir.v0);
    return map;
}

} // namespace mimicvol
