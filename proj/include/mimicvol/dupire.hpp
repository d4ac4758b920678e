#pragma once

// Local-volatility extraction from call prices and forward-PDE pricing from a
// local-volatility surface.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/interp.hpp"
#include "mimicvol/surface.hpp"

namespace mimicvol {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Discounted call price with total variance w and discount factor df.
inline double black_scholes_call(double spot, double strike, double df, double total_var) {
    const double fwd_strike = strike * df;
    if (!(total_var > 0.0)) {
        return std::max(spot - fwd_strike, 0.0);
    }
    const double sd = std::sqrt(total_var);
    const double d1 = (std::log(spot / fwd_strike) + 0.5 * total_var) / sd;
    return spot * normal_cdf(d1) - fwd_strike * normal_cdf(d1 - sd);
}

/// Discounted call prices C(T_i, K_j), row-major by maturity.
struct PriceSurface {
    std::vector<double> maturities;
    std::vector<double> strikes;
    std::vector<double> prices;
    interp::Curve discount = interp::Curve::constant(1.0);      ///< B(0,t)
    interp::Curve forward_rate = interp::Curve::constant(0.0);  ///< f(0,t)
    double spot = 1.0;

    double& at(std::size_t i, std::size_t j) { return prices[i * strikes.size() + j]; }
    double at(std::size_t i, std::size_t j) const { return prices[i * strikes.size() + j]; }

    /// Discount curve sampled at 0 and at the maturities from a forward-rate curve.
    static interp::Curve discount_from(const interp::Curve& fwd, const std::vector<double>& maturities) {
        interp::Curve c{{0.0}, {1.0}};
        for (double t : maturities) {
            if (t > c.times.back()) {
                c.times.push_back(t);
                c.values.push_back(std::exp(-fwd.integral(0.0, t)));
            }
        }
        return c;
    }

    /// Structural checks plus monotonicity and the intrinsic lower bound.
    /// Convexity is left to extraction, which floors and counts violations.
    void validate(double tol = 1e-10) const {
        auto increasing = [](const std::vector<double>& v, const char* key) {
            if (v.empty()) {
                throw ValidationError(key, std::string(key) + " must be non-empty");
            }
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!(v[i] > 0.0) || !std::isfinite(v[i]) || (i > 0 && !(v[i] > v[i - 1]))) {
                    throw ValidationError(key, std::string(key) + " must be positive and strictly increasing");
                }
            }
        };
        increasing(maturities, "maturities");
        increasing(strikes, "strikes");
        if (prices.size() != maturities.size() * strikes.size()) {
            throw ValidationError("prices", "price grid size must equal maturities x strikes");
        }
        if (!(spot > 0.0) || !std::isfinite(spot)) {
            throw ValidationError("spot", "spot must be positive");
        }
        discount.validate("discount");
        forward_rate.validate("forward_rate");
        const double abs_tol = tol * spot;
        for (std::size_t i = 0; i < maturities.size(); ++i) {
            const double df = discount(maturities[i]);
            for (std::size_t j = 0; j < strikes.size(); ++j) {
                const double c = at(i, j);
                if (!std::isfinite(c)) {
                    throw ValidationError("prices", "prices must be finite");
                }
                if (c < std::max(spot - strikes[j] * df, 0.0) - abs_tol) {
                    throw ValidationError("prices", "price below intrinsic value at maturity " +
                                                        std::to_string(maturities[i]) + ", strike " +
                                                        std::to_string(strikes[j]));
                }
                if (j > 0 && c > at(i, j - 1) + abs_tol) {
                    throw ValidationError("prices", "prices must be nonincreasing in strike at maturity " +
                                                        std::to_string(maturities[i]));
                }
            }
        }
    }
};

/// Synthetic Black-Scholes surface with total variance w(T) and forward rate curve.
inline PriceSurface black_scholes_surface(double spot, std::vector<double> maturities, std::vector<double> strikes,
                                          const std::function<double(double)>& total_var,
                                          const interp::Curve& fwd = interp::Curve::constant(0.0)) {
    PriceSurface s;
    s.maturities = std::move(maturities);
    s.strikes = std::move(strikes);
    s.spot = spot;
    s.forward_rate = fwd;
    s.discount = PriceSurface::discount_from(fwd, s.maturities);
    s.prices.resize(s.maturities.size() * s.strikes.size());
    for (std::size_t i = 0; i < s.maturities.size(); ++i) {
        const double T = s.maturities[i];
        const double df = std::exp(-fwd.integral(0.0, T));
        for (std::size_t j = 0; j < s.strikes.size(); ++j) {
            s.at(i, j) = black_scholes_call(spot, s.strikes[j], df, total_var(T));
        }
    }
    return s;
}

struct ExtractResult {
    LocalVolSurface surface;          ///< interior nodes only
    std::vector<unsigned char> floored;  ///< per output node
    std::size_t floored_count = 0;
    std::size_t clipped_count = 0;
};

namespace detail {

/// Three-point weights for first and second derivatives at x1 on a nonuniform grid.
struct Stencil {
    double d1[3];
    double d2[3];
};

inline Stencil stencil(double x0, double x1, double x2) {
    const double h1 = x1 - x0;
    const double h2 = x2 - x1;
    Stencil s{};
    s.d1[0] = -h2 / (h1 * (h1 + h2));
    s.d1[1] = (h2 - h1) / (h1 * h2);
    s.d1[2] = h1 / (h2 * (h1 + h2));
    s.d2[0] = 2.0 / (h1 * (h1 + h2));
    s.d2[1] = -2.0 / (h1 * h2);
    s.d2[2] = 2.0 / (h2 * (h1 + h2));
    return s;
}

/// Dupire extraction with an extra numerator term subtracted at each interior node.
inline ExtractResult extract(const PriceSurface& s,
                             const std::function<double(std::size_t, std::size_t)>& numerator_correction) {
    s.validate();
    const std::size_t nt = s.maturities.size();
    const std::size_t nk = s.strikes.size();
    if (nt < 3 || nk < 3) {
        throw ValidationError("prices", "extraction needs at least 3 maturities and 3 strikes");
    }
    ExtractResult out;
    out.surface.t_nodes.assign(s.maturities.begin() + 1, s.maturities.end() - 1);
    out.surface.x_nodes.assign(s.strikes.begin() + 1, s.strikes.end() - 1);
    const std::size_t ni = nt - 2;
    const std::size_t nj = nk - 2;
    out.surface.sigma2.assign(ni * nj, 0.0);
    out.floored.assign(ni * nj, 0);
    const double floor = 1e-10 / s.spot;
    for (std::size_t i = 1; i + 1 < nt; ++i) {
        const Stencil st = stencil(s.maturities[i - 1], s.maturities[i], s.maturities[i + 1]);
        const double f = s.forward_rate(s.maturities[i]);
        for (std::size_t j = 1; j + 1 < nk; ++j) {
            const Stencil sk = stencil(s.strikes[j - 1], s.strikes[j], s.strikes[j + 1]);
            const double K = s.strikes[j];
            const double c_t = st.d1[0] * s.at(i - 1, j) + st.d1[1] * s.at(i, j) + st.d1[2] * s.at(i + 1, j);
            const double c_k = sk.d1[0] * s.at(i, j - 1) + sk.d1[1] * s.at(i, j) + sk.d1[2] * s.at(i, j + 1);
            double c_kk = sk.d2[0] * s.at(i, j - 1) + sk.d2[1] * s.at(i, j) + sk.d2[2] * s.at(i, j + 1);
            const std::size_t k = (i - 1) * nj + (j - 1);
            if (c_kk < floor) {
                c_kk = floor;
                out.floored[k] = 1;
                ++out.floored_count;
            }
            double num = c_t + f * K * c_k - numerator_correction(i, j);
            if (num < 0.0) {
                num = 0.0;
                ++out.clipped_count;
            }
            out.surface.sigma2[k] = num / (0.5 * K * K * c_kk);
        }
    }
    if (10 * out.floored_count > ni * nj) {
        throw DegenerateDensityError("degenerate density: second strike derivative below floor on " +
                                     std::to_string(out.floored_count) + " of " + std::to_string(ni * nj) +
                                     " nodes (non-convex price surface)");
    }
    return out;
}

} // namespace detail

/// sigma^2(T,K) = (C_T + f(0,T) K C_K) / (K^2 C_KK / 2) by central differences.
inline ExtractResult extract_local_vol(const PriceSurface& s) {
    return detail::extract(s, [](std::size_t, std::size_t) { return 0.0; });
}

// ---------------------------------------------------------------------------
// Forward PDE.

struct PdeConfig {
    std::size_t nodes = 400;        ///< log-strike nodes
    std::size_t steps_per_year = 200;
    std::size_t rannacher_steps = 2;
    double width_sd = 7.0;          ///< half-width in units of sigma_max sqrt(T_max)
    std::size_t max_halvings = 4;

    void validate() const {
        if (nodes < 20) {
            throw ValidationError("nodes", "PDE grid needs at least 20 nodes");
        }
        if (steps_per_year < 1) {
            throw ValidationError("steps_per_year", "steps_per_year must be positive");
        }
        if (!(width_sd > 0.0)) {
            throw ValidationError("width_sd", "width_sd must be positive");
        }
    }
};

struct PdeResult {
    PriceSurface prices;
    std::size_t halvings = 0;
    std::size_t time_steps = 0;
};

namespace detail {

/// Solves a tridiagonal system in place (Thomas algorithm); a: sub, b: diag, c: super.
inline void solve_tridiagonal(std::vector<double>& a, std::vector<double>& b, std::vector<double>& c,
                              std::vector<double>& d) {
    const std::size_t n = d.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    d[n - 1] /= b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
    }
}

/// Four-point Lagrange interpolation on a uniform grid.
inline double lagrange4(const std::vector<double>& y, double y0, double h, const std::vector<double>& v, double q) {
    const std::size_t n = y.size();
    const double pos = (q - y0) / h;
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(std::floor(pos)) - 1;
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 4);
    double sum = 0.0;
    for (std::ptrdiff_t a = 0; a < 4; ++a) {
        double w = 1.0;
        for (std::ptrdiff_t b = 0; b < 4; ++b) {
            if (a != b) {
                w *= (q - y[i + b]) / (y[i + a] - y[i + b]);
            }
        }
        sum += w * v[i + a];
    }
    return sum;
}

/// True if the slice is nonincreasing in strike up to tol and convex up to
/// slope_tol (slopes are dimensionless, in [-1, 0]).
inline bool well_behaved(const std::vector<double>& strikes, const std::vector<double>& c, double tol,
                         double slope_tol) {
    for (std::size_t j = 1; j < c.size(); ++j) {
        if (c[j] > c[j - 1] + tol) {
            return false;
        }
    }
    for (std::size_t j = 1; j + 1 < c.size(); ++j) {
        const double s0 = (c[j] - c[j - 1]) / (strikes[j] - strikes[j - 1]);
        const double s1 = (c[j + 1] - c[j]) / (strikes[j + 1] - strikes[j]);
        if (s1 < s0 - slope_tol) {
            return false;
        }
    }
    return true;
}

} // namespace detail

/// Crank-Nicolson on a uniform log-strike grid for
/// C_T = sigma^2 K^2 C_KK / 2 - f(0,T) K C_K, C(K,0) = (S_0 - K)^+.
inline PdeResult price_forward_pde(const LocalVolSurface& lv, double spot, const interp::Curve& forward_rate,
                                   const std::vector<double>& maturities, const std::vector<double>& strikes,
                                   const PdeConfig& cfg = {}) {
    lv.validate();
    cfg.validate();
    forward_rate.validate("forward_rate");
    if (!(spot > 0.0)) {
        throw ValidationError("spot", "spot must be positive");
    }
    PriceSurface out;
    out.maturities = maturities;
    out.strikes = strikes;
    out.spot = spot;
    out.forward_rate = forward_rate;
    out.discount = PriceSurface::discount_from(forward_rate, maturities);
    out.prices.assign(maturities.size() * strikes.size(), 0.0);
    auto increasing = [](const std::vector<double>& v, const char* key) {
        if (v.empty()) {
            throw ValidationError(key, std::string(key) + " must be non-empty");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0) || !std::isfinite(v[i]) || (i > 0 && !(v[i] > v[i - 1]))) {
                throw ValidationError(key, std::string(key) + " must be positive and strictly increasing");
            }
        }
    };
    increasing(maturities, "maturities");
    increasing(strikes, "strikes");

    const double t_max = maturities.back();
    // Width from the largest local variance near the money up to T_max.
    double s2_max = 0.0;
    {
        const LocalVolSurface::Evaluator probe(lv);
        for (double lx = -0.5; lx <= 0.5 + 1e-12; lx += 0.05) {
            for (double t : lv.t_nodes) {
                s2_max = std::max(s2_max, probe.lookup(std::min(t, maturities.back()), std::log(spot) + lx).sigma2);
            }
        }
    }
    double drift = 0.0;
    for (double t : maturities) {
        drift = std::max(drift, std::abs(forward_rate.integral(0.0, t)));
    }
    const double ls = std::log(spot);
    double half = cfg.width_sd * std::sqrt(std::max(s2_max, 1e-4) * t_max) + drift;
    half = std::max({half, 1.2 * std::abs(std::log(strikes.front()) - ls) + 0.1,
                     1.2 * std::abs(std::log(strikes.back()) - ls) + 0.1});
    const std::size_t n = cfg.nodes;
    const double y0 = ls - half;
    const double h = 2.0 * half / static_cast<double>(n - 1);
    std::vector<double> y(n);
    std::vector<double> kk(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = y0 + h * static_cast<double>(i);
        kk[i] = std::exp(y[i]);
    }
    const LocalVolSurface::Evaluator ev(lv);

    std::vector<double> a(n);
    std::vector<double> b(n);
    std::vector<double> c(n);
    std::vector<double> rhs(n);
    std::vector<double> op_lo(n);
    std::vector<double> op_di(n);
    std::vector<double> op_up(n);

    PdeResult res;
    for (std::size_t halving = 0; halving <= cfg.max_halvings; ++halving) {
        const double dt_target = 1.0 / (static_cast<double>(cfg.steps_per_year) * std::ldexp(1.0, int(halving)));
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = std::max(spot - kk[i], 0.0);
        }
        bool ok = true;
        std::size_t steps_done = 0;
        double t = 0.0;
        for (std::size_t m = 0; m < maturities.size() && ok; ++m) {
            const double T = maturities[m];
            const std::size_t ns = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((T - t) / dt_target - 1e-9)));
            const double dt = (T - t) / static_cast<double>(ns);
            for (std::size_t s = 0; s < ns; ++s) {
                const bool implicit = steps_done < cfg.rannacher_steps;
                const double theta = implicit ? 1.0 : 0.5;
                const double tm = implicit ? t + dt : t + 0.5 * dt;
                const double f = forward_rate(tm);
                bool clamped = false;
                const std::vector<double> row = ev.row(tm, clamped);
                for (std::size_t i = 1; i + 1 < n; ++i) {
                    bool cx = false;
                    const double s2 = ev.in_row(row, y[i], cx);
                    const double diff = 0.5 * s2 / (h * h);
                    const double adv = (0.5 * s2 + f) / (2.0 * h);
                    op_lo[i] = diff + adv;
                    op_di[i] = -2.0 * diff;
                    op_up[i] = diff - adv;
                }
                const double t_next = t + dt;
                const double df_next = std::exp(-forward_rate.integral(0.0, t_next));
                for (std::size_t i = 1; i + 1 < n; ++i) {
                    a[i] = -theta * dt * op_lo[i];
                    b[i] = 1.0 - theta * dt * op_di[i];
                    c[i] = -theta * dt * op_up[i];
                    rhs[i] = v[i] + (1.0 - theta) * dt * (op_lo[i] * v[i - 1] + op_di[i] * v[i] + op_up[i] * v[i + 1]);
                }
                a[0] = 0.0;
                b[0] = 1.0;
                c[0] = 0.0;
                rhs[0] = std::max(spot - kk[0] * df_next, 0.0);
                a[n - 1] = 0.0;
                b[n - 1] = 1.0;
                c[n - 1] = 0.0;
                rhs[n - 1] = 0.0;
                detail::solve_tridiagonal(a, b, c, rhs);
                v.swap(rhs);
                t = t_next;
                ++steps_done;
            }
            std::vector<double> slice(strikes.size());
            for (std::size_t j = 0; j < strikes.size(); ++j) {
                slice[j] = std::max(detail::lagrange4(y, y0, h, v, std::log(strikes[j])), 0.0);
            }
            // Oscillation monitor on the grid nodes spanning the requested
            // strikes and on the output slice itself.
            const std::size_t lo = std::min(n - 3, interp::bracket(y, std::log(strikes.front())));
            const std::size_t hi = std::min(n, interp::bracket(y, std::log(strikes.back())) + 2);
            const std::vector<double> kw(kk.begin() + lo, kk.begin() + hi);
            const std::vector<double> vw(v.begin() + lo, v.begin() + hi);
            ok = detail::well_behaved(kw, vw, 1e-9 * spot, 1e-6) &&
                 detail::well_behaved(strikes, slice, 1e-9 * spot, 1e-6);
            for (std::size_t j = 0; j < strikes.size(); ++j) {
                out.at(m, j) = slice[j];
            }
        }
        if (ok) {
            res.prices = std::move(out);
            res.halvings = halving;
            res.time_steps = steps_done;
            return res;
        }
    }
    throw ConvergenceError("forward PDE: oscillations persist after " + std::to_string(cfg.max_halvings) +
                           " step halvings");
}

// ---------------------------------------------------------------------------
// CSV.

namespace detail {

inline std::vector<std::vector<double>> read_numeric_csv(std::istream& is, const std::string& header,
                                                         const std::string& what) {
    std::string line;
    if (!std::getline(is, line)) {
        throw ValidationError(what, what + ": empty file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != header) {
        throw ValidationError(what, what + ": expected header '" + header + "'");
    }
    const std::size_t cols = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
                throw ValidationError(what, what + ": bad number '" + cell + "' on line " + std::to_string(lineno));
            }
            row.push_back(v);
        }
        if (row.size() != cols) {
            throw ValidationError(what, what + ": expected " + std::to_string(cols) + " columns on line " +
                                            std::to_string(lineno));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

/// CSV `maturity,strike,price`.
inline void write_price_csv(std::ostream& os, const PriceSurface& s) {
    os << "maturity,strike,price\n";
    char buf[96];
    for (std::size_t i = 0; i < s.maturities.size(); ++i) {
        for (std::size_t j = 0; j < s.strikes.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.maturities[i], s.strikes[j], s.at(i, j));
            os << buf;
        }
    }
}

/// CSV `t,df` sampled at the maturities.
inline void write_discount_csv(std::ostream& os, const PriceSurface& s) {
    os << "t,df\n";
    char buf[64];
    for (double t : s.maturities) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, s.discount(t));
        os << buf;
    }
}

/// Reads a rectangular `maturity,strike,price` grid in any row order.
inline PriceSurface read_price_csv(std::istream& is) {
    const auto rows = detail::read_numeric_csv(is, "maturity,strike,price", "prices");
    std::map<double, std::map<double, double>> grid;
    for (const auto& r : rows) {
        if (!grid[r[0]].emplace(r[1], r[2]).second) {
            throw ValidationError("prices", "prices: duplicate (maturity, strike) node");
        }
    }
    PriceSurface s;
    for (const auto& [t, row] : grid) {
        s.maturities.push_back(t);
        if (s.strikes.empty()) {
            for (const auto& kv : row) {
                s.strikes.push_back(kv.first);
            }
        }
        if (row.size() != s.strikes.size()) {
            throw ValidationError("prices", "prices: grid is not rectangular");
        }
        std::size_t j = 0;
        for (const auto& [k, c] : row) {
            if (k != s.strikes[j++]) {
                throw ValidationError("prices", "prices: grid is not rectangular");
            }
            s.prices.push_back(c);
        }
    }
    if (s.maturities.empty()) {
        throw ValidationError("prices", "prices: no data rows");
    }
    return s;
}

/// Reads `t,df` and installs the discount curve and a matching forward-rate
/// curve (piecewise from log-discount differences) on s.
inline void read_discount_csv(std::istream& is, PriceSurface& s) {
    const auto rows = detail::read_numeric_csv(is, "t,df", "discount");
    std::vector<double> t{0.0};
    std::vector<double> ld{0.0};
    for (const auto& r : rows) {
        if (!(r[1] > 0.0)) {
            throw ValidationError("discount", "discount: df must be positive");
        }
        if (r[0] == 0.0) {
            continue;
        }
        if (!(r[0] > t.back())) {
            throw ValidationError("discount", "discount: t must be strictly increasing");
        }
        t.push_back(r[0]);
        ld.push_back(std::log(r[1]));
    }
    s.discount.times = t;
    s.discount.values.clear();
    for (double v : ld) {
        s.discount.values.push_back(std::exp(v));
    }
    // f at each node: centered log-discount slope, one-sided at the ends.
    s.forward_rate.times = t;
    s.forward_rate.values.assign(t.size(), 0.0);
    if (t.size() > 1) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = i + 1 == t.size() ? i : i + 1;
            s.forward_rate.values[i] = -(ld[hi] - ld[lo]) / (t[hi] - t[lo]);
        }
    }
}

/// LocalVolSurface CSV `t,x,sigma2,method,err` for an extracted surface.
inline void write_extracted_csv(std::ostream& os, const ExtractResult& r) {
    os << "t,x,sigma2,method,err\n";
    char buf[128];
    const auto& s = r.surface;
    for (std::size_t i = 0; i < s.t_nodes.size(); ++i) {
        for (std::size_t j = 0; j < s.x_nodes.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,fd,0\n", s.t_nodes[i], s.x_nodes[j], s.at(i, j));
            os << buf;
        }
    }
}

/// Reads a LocalVolSurface CSV (`t,x,sigma2,method,err`); the grid must be rectangular.
inline LocalVolSurface read_surface_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw ValidationError("surface", "surface: empty file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "t,x,sigma2,method,err") {
        throw ValidationError("surface", "surface: expected header 't,x,sigma2,method,err'");
    }
    std::map<double, std::map<double, double>> grid;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell[5];
        std::size_t k = 0;
        while (k < 5 && std::getline(ss, cell[k], ',')) {
            ++k;
        }
        double v[3];
        for (std::size_t q = 0; q < 3; ++q) {
            char* end = nullptr;
            v[q] = std::strtod(cell[q].c_str(), &end);
            if (k < 4 || cell[q].empty() || end != cell[q].c_str() + cell[q].size()) {
                throw ValidationError("surface", "surface: malformed line " + std::to_string(lineno));
            }
        }
        grid[v[0]][v[1]] = v[2];
    }
    LocalVolSurface s;
    for (const auto& [t, row] : grid) {
        s.t_nodes.push_back(t);
        if (s.x_nodes.empty()) {
            for (const auto& kv : row) {
                s.x_nodes.push_back(kv.first);
            }
        }
        if (row.size() != s.x_nodes.size()) {
            throw ValidationError("surface", "surface: grid is not rectangular");
        }
        std::size_t j = 0;
        for (const auto& [x, v] : row) {
            if (x != s.x_nodes[j++]) {
                throw ValidationError("surface", "surface: grid is not rectangular");
            }
            s.sigma2.push_back(v);
        }
    }
    s.validate();
    return s;
}

} // namespace mimicvol
