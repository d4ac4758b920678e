#pragma once

// Scalar special functions used by the Bessel-process series: Gamma and
// Pochhammer symbols, the Mc Donald functions K0/K1, and the parabolic
// cylinder function D_nu.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/quadrature.hpp"

namespace mimicvol::specfun {

struct SpecFunConfig {
    double abs_tol = 1e-12;
    int max_terms = 200;
    int quad_points = 512;

    void validate() const {
        if (!(abs_tol > 0.0)) {
            throw ValidationError("abs_tol", "abs_tol must be positive");
        }
        if (max_terms < 10) {
            throw ValidationError("max_terms", "max_terms must be at least 10");
        }
        if (quad_points < 32) {
            throw ValidationError("quad_points", "quad_points must be at least 32");
        }
    }
};

inline constexpr double euler_gamma = 0.57721566490153286061;

inline bool is_nonpositive_integer(double x) { return x <= 0.0 && x == std::floor(x); }

/// Gamma function; throws DomainError at the poles 0, -1, -2, ...
inline double gamma(double nu) {
    if (is_nonpositive_integer(nu)) {
        throw DomainError("gamma: pole at non-positive integer " + std::to_string(nu));
    }
    return std::tgamma(nu);
}

/// 1/Gamma(x), zero at the poles.
inline double rgamma(double x) {
    if (is_nonpositive_integer(x)) {
        return 0.0;
    }
    return 1.0 / std::tgamma(x);
}

/// Rising factorial (nu)_k = nu (nu+1) ... (nu+k-1) = Gamma(nu+k)/Gamma(nu).
inline double pochhammer(double nu, unsigned k) {
    double p = 1.0;
    for (unsigned i = 0; i < k; ++i) {
        p *= nu + static_cast<double>(i);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Mc Donald functions K0, K1

struct BesselK01 {
    double k0;
    double k1;
};

/// e^z K0(z) and e^z K1(z) for z > 0.
/// Power series for z <= 2, Steed's continued fraction (Temme's CF2) above.
inline BesselK01 bessel_k01_scaled(double z) {
    if (!(z > 0.0)) {
        throw DomainError("bessel_k: argument must be positive");
    }
    if (z <= 2.0) {
        const double y = 0.25 * z * z;
        const double lnz = std::log(0.5 * z);
        double t0 = 1.0;  // y^k / (k!)^2
        double t1 = 1.0;  // y^k / (k! (k+1)!)
        double psi1 = -euler_gamma;        // psi(k+1)
        double psi2 = 1.0 - euler_gamma;   // psi(k+2)
        double i0 = 0.0;
        double s0 = 0.0;
        double i1 = 0.0;
        double s1 = 0.0;
        for (int k = 0; k < 60; ++k) {
            i0 += t0;
            s0 += psi1 * t0;
            i1 += t1;
            s1 += (psi1 + psi2) * t1;
            const double kk = static_cast<double>(k);
            t0 *= y / ((kk + 1.0) * (kk + 1.0));
            t1 *= y / ((kk + 1.0) * (kk + 2.0));
            psi1 += 1.0 / (kk + 1.0);
            psi2 += 1.0 / (kk + 2.0);
            if (t0 < 1e-18 * i0 && t1 < 1e-18 * i1) {
                break;
            }
        }
        const double k0 = -lnz * i0 + s0;
        const double k1 = 1.0 / z + lnz * (0.5 * z * i1) - 0.25 * z * s1;
        const double ez = std::exp(z);
        return {k0 * ez, k1 * ez};
    }
    // CF2 with mu = 0.
    double b = 2.0 * (1.0 + z);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 2; i <= 10000; ++i) {
        a -= 2.0 * (i - 1);
        c = -a * c / i;
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < 1e-17) {
            break;
        }
    }
    h = a1 * h;
    const double k0 = std::sqrt(std::numbers::pi / (2.0 * z)) / s;
    const double k1 = k0 * (z + 0.5 - h) / z;
    return {k0, k1};
}

/// e^z K_order(z), order in {0, 1}.
inline double bessel_k_scaled(int order, double z) {
    if (order != 0 && order != 1) {
        throw DomainError("bessel_k: only orders 0 and 1 are supported");
    }
    const BesselK01 k = bessel_k01_scaled(z);
    return order == 0 ? k.k0 : k.k1;
}

struct BesselKEval {
    double value;
    bool underflow;  ///< true when the result is below the smallest normal double
};

inline BesselKEval bessel_k_checked(int order, double z) {
    const double scaled = bessel_k_scaled(order, z);
    const double v = scaled * std::exp(-z);
    const bool under = v < std::numeric_limits<double>::min();
    return {under ? 0.0 : v, under};
}

/// K_order(z) for order in {0, 1} and z > 0. Returns 0 once the value underflows.
inline double bessel_k(int order, double z) { return bessel_k_checked(order, z).value; }

// ---------------------------------------------------------------------------
// Parabolic cylinder function D_nu(xi)
//
// Validated range: |nu| <= 50, |xi| <= 100. For xi < 0 and non-integer nu the
// function grows like exp(xi^2/4) and overflows a double beyond |xi| ~ 52; such
// inputs raise RangeError.

namespace detail {

struct ValueSlope {
    double y;
    double dy;
};

/// One Taylor step of y'' = (x^2/4 - a) y from x0 to x0 + h.
inline ValueSlope weber_step(double a, double x0, double h, ValueSlope s) {
    const double p0 = 0.25 * x0 * x0 - a;
    const double p1 = 0.5 * x0;
    constexpr double p2 = 0.25;
    std::vector<double> c;
    c.reserve(64);
    c.push_back(s.y);
    c.push_back(s.dy);
    double y = s.y + s.dy * h;
    double dy = s.dy;
    double hp = h;
    int quiet = 0;
    for (std::size_t n = 0; n < 600; ++n) {
        const double cn = c[n];
        const double cn1 = n >= 1 ? c[n - 1] : 0.0;
        const double cn2 = n >= 2 ? c[n - 2] : 0.0;
        const double next = (p0 * cn + p1 * cn1 + p2 * cn2) /
                            (static_cast<double>(n + 2) * static_cast<double>(n + 1));
        c.push_back(next);
        const double dterm = static_cast<double>(n + 2) * next * hp;  // h^(n+1)
        hp *= h;
        const double term = next * hp;  // h^(n+2)
        y += term;
        dy += dterm;
        const double scale = std::abs(y) + std::abs(dy * h);
        if (std::abs(term) <= 1e-17 * scale && std::abs(dterm * h) <= 1e-17 * scale) {
            if (++quiet >= 3) {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    return {y, dy};
}

/// Integrates the Weber equation from x0 to x1 with Taylor steps.
inline ValueSlope weber_integrate(double a, double x0, double x1, ValueSlope s) {
    double x = x0;
    const double dir = x1 >= x0 ? 1.0 : -1.0;
    while (dir * (x1 - x) > 0.0) {
        const double hmax = std::min(0.5, 1.0 / std::max(1.0, std::sqrt(std::abs(0.25 * x * x - a))));
        const double h = dir * std::min(hmax, std::abs(x1 - x));
        s = weber_step(a, x, h, s);
        x += h;
    }
    return s;
}

/// D_nu(0) and D'_nu(0).
inline ValueSlope d_at_zero(double nu) {
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    return {std::pow(2.0, 0.5 * nu) * sqrt_pi * rgamma(0.5 * (1.0 - nu)),
            -std::pow(2.0, 0.5 * (nu + 1.0)) * sqrt_pi * rgamma(-0.5 * nu)};
}

/// One Taylor step of the scaled (Hermite) equation u'' = x u' - nu u.
inline ValueSlope hermite_step(double nu, double x0, double h, ValueSlope s) {
    double cn = s.y;
    double cn1 = s.dy;  // c_{n+1}
    double y = s.y + s.dy * h;
    double dy = s.dy;
    double hp = h;
    int quiet = 0;
    for (int n = 0; n < 600; ++n) {
        const double nn = static_cast<double>(n);
        const double next = (x0 * (nn + 1.0) * cn1 + (nn - nu) * cn) / ((nn + 2.0) * (nn + 1.0));
        const double dterm = (nn + 2.0) * next * hp;
        hp *= h;
        const double term = next * hp;
        y += term;
        dy += dterm;
        cn = cn1;
        cn1 = next;
        const double scale = std::abs(y) + std::abs(dy * h);
        if (std::abs(term) <= 1e-17 * scale && std::abs(dterm * h) <= 1e-17 * scale) {
            if (++quiet >= 3) {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    return {y, dy};
}

/// Large-argument expansion of u = exp(x^2/4) D_nu(x) and u'.
inline ValueSlope hermite_asymptotic(double nu, double x) {
    double term = 1.0;
    double sum = 1.0;
    double dsum = nu;
    const double inv = 1.0 / (2.0 * x * x);
    for (int s = 0; s < 200; ++s) {
        const double ss = static_cast<double>(s);
        const double next = -term * (nu - 2.0 * ss) * (nu - 2.0 * ss - 1.0) * inv / (ss + 1.0);
        if (std::abs(next) > std::abs(term) && s > 0) {
            break;
        }
        term = next;
        sum += term;
        dsum += term * (nu - 2.0 * (ss + 1.0));
        if (std::abs(term) < 1e-18 * std::abs(sum)) {
            break;
        }
    }
    const double xp = std::pow(x, nu);
    return {xp * sum, xp * dsum / x};
}

/// exp(xi^2/4) D_nu(xi) for nu < 0, xi >= 0 from
/// Gamma(-nu) e^{xi^2/4} D_nu(xi) = int_0^inf t^p exp(-xi t - t^2/2) dt, p = -nu - 1.
/// Near 0 the exponential is expanded and integrated term by term against t^p;
/// the rest uses Gauss-Legendre in s = ln t.
inline double scaled_negative_order(double nu, double xi, const SpecFunConfig& cfg) {
    const double p = -nu - 1.0;
    const double t1 = std::min(0.5, 0.5 / std::max(xi, 1.0));
    // exp(-xi t - t^2/2) = sum c_n t^n with (n+1) c_{n+1} = -xi c_n - c_{n-1}.
    double c_prev = 0.0;
    double c = 1.0;
    double tp = std::pow(t1, p + 1.0);
    double head = 0.0;
    bool quiet = false;
    for (int n = 0; n < cfg.max_terms; ++n) {
        const double term = c * tp / (p + n + 1.0);
        head += term;
        const bool small = std::abs(term) <= 1e-17 * std::abs(head);
        if (n > 4 && small && quiet) {
            break;
        }
        quiet = small;
        const double c_next = (-xi * c - c_prev) / (n + 1.0);
        c_prev = c;
        c = c_next;
        tp *= t1;
    }
    const double peak = p > 0.0 ? 0.5 * (-xi + std::sqrt(xi * xi + 4.0 * p)) : 0.0;
    const double t_max = std::max(peak, t1) + 12.0;
    auto f = [&](double s) {
        const double t = std::exp(s);
        return std::exp((p + 1.0) * s - xi * t - 0.5 * t * t);
    };
    const std::size_t order = 16;
    const auto panels = static_cast<std::size_t>(std::max(4, cfg.quad_points / static_cast<int>(order)));
    const double tail = quad::integrate(f, std::log(t1), std::log(t_max), panels, order);
    return (head + tail) / std::tgamma(-nu);
}

inline constexpr double series_limit = 3.0;
inline constexpr double asymptotic_limit = 12.0;

/// exp(xi^2/4) D_nu(xi) for xi >= 0 and a small order (|nu| <= ~4).
inline double scaled_small_order(double nu, double xi) {
    if (xi <= series_limit) {
        const ValueSlope s = weber_integrate(nu + 0.5, 0.0, xi, d_at_zero(nu));
        return s.y * std::exp(0.25 * xi * xi);
    }
    if (xi >= asymptotic_limit) {
        return hermite_asymptotic(nu, xi).y;
    }
    ValueSlope s = hermite_asymptotic(nu, asymptotic_limit);
    double x = asymptotic_limit;
    while (x > xi) {
        const double h = -std::min({0.5, 1.0 / x, x - xi});
        s = hermite_step(nu, x, h, s);
        x += h;
    }
    return s.y;
}

} // namespace detail

/// Fills out[i] = exp(xi^2/4) D_{nu0+i}(xi), i = 0..out.size()-1, for xi >= 0 and nu0 >= 0.
/// Base orders are computed directly and the rest by upward recurrence.
inline void parabolic_d_scaled_sequence(double nu0, double xi, std::span<double> out) {
    if (out.empty()) {
        return;
    }
    if (xi < 0.0 || nu0 < 0.0) {
        throw DomainError("parabolic_d_scaled_sequence: requires xi >= 0 and nu0 >= 0");
    }
    const double base = std::floor(nu0);
    const double frac = nu0 - base;
    double u_prev;
    double u_cur;
    if (frac == 0.0) {
        u_prev = 1.0;
        u_cur = xi;
    } else {
        u_prev = detail::scaled_small_order(frac, xi);
        u_cur = detail::scaled_small_order(frac + 1.0, xi);
    }
    // u_prev = u_{frac + m}, u_cur = u_{frac + m + 1}
    double order = frac;
    const auto first = static_cast<long>(base);
    const long last = first + static_cast<long>(out.size()) - 1;
    for (long m = 0; m <= last; ++m) {
        if (m >= first) {
            out[static_cast<std::size_t>(m - first)] = u_prev;
        }
        const double next = xi * u_cur - (order + 1.0) * u_prev;
        u_prev = u_cur;
        u_cur = next;
        order += 1.0;
    }
}

/// exp(xi^2/4) D_nu(xi) for xi >= 0 and |nu| <= 50.
inline double parabolic_d_scaled(double nu, double xi) {
    if (xi < 0.0) {
        throw DomainError("parabolic_d_scaled: requires xi >= 0");
    }
    if (std::abs(nu) > 50.0 || xi > 100.0) {
        throw RangeError("parabolic_d: outside validated range |nu| <= 50, |xi| <= 100");
    }
    if (nu >= 0.0) {
        double v = 0.0;
        parabolic_d_scaled_sequence(nu, xi, std::span<double>(&v, 1));
        return v;
    }
    return detail::scaled_negative_order(nu, xi, SpecFunConfig{});
}

/// Parabolic cylinder function D_nu(xi) on the validated range |nu| <= 50, |xi| <= 100.
inline double parabolic_d(double nu, double xi) {
    if (!std::isfinite(nu) || !std::isfinite(xi) || std::abs(nu) > 50.0 || std::abs(xi) > 100.0) {
        throw RangeError("parabolic_d: outside validated range |nu| <= 50, |xi| <= 100");
    }
    if (xi >= 0.0) {
        const double u = parabolic_d_scaled(nu, xi);
        if (u == 0.0) {
            return 0.0;
        }
        return std::copysign(std::exp(std::log(std::abs(u)) - 0.25 * xi * xi), u);
    }
    if (nu >= 0.0 && nu == std::floor(nu)) {
        const double sign = std::fmod(nu, 2.0) == 0.0 ? 1.0 : -1.0;
        return sign * parabolic_d(nu, -xi);
    }
    const detail::ValueSlope s = detail::weber_integrate(nu + 0.5, 0.0, xi, detail::d_at_zero(nu));
    if (!std::isfinite(s.y)) {
        throw RangeError("parabolic_d: value overflows a double");
    }
    return s.y;
}

} // namespace mimicvol::specfun
