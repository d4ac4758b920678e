#pragma once

// Local variance E[v_t | S_t = x] for the Bessel model (closed form through the
// k-pair), the correlated Bessel model (quadrature against the joint density of
// (R_t^2, A_t)), and time-space transformed models including Heston.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mimicvol/bessel_core.hpp"
#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/parallel.hpp"
#include "mimicvol/core/quadrature.hpp"
#include "mimicvol/core/stats.hpp"
#include "mimicvol/montecarlo.hpp"
#include "mimicvol/surface.hpp"
#include "mimicvol/transform.hpp"

namespace mimicvol {

enum class LocalVolMethod { series, quad, mc };

inline const char* to_string(LocalVolMethod m) {
    switch (m) {
    case LocalVolMethod::series:
        return "series";
    case LocalVolMethod::quad:
        return "quad";
    case LocalVolMethod::mc:
        return "mc";
    }
    return "?";
}

struct LocalVolPoint {
    double t = 0.0;
    double x = 0.0;
    double sigma2 = 0.0;
    LocalVolMethod method = LocalVolMethod::series;
    double err = 0.0;  ///< truncation/quadrature error estimate, or MC standard error
    KMethod k_method = KMethod::series;
    SeriesEval k_eval;
    SeriesEval dk_eval;
    double n_effective = 0.0;  ///< MC only
};

/// Local variance of dS/S = R_t dbeta_t (R_0 = 0, S_0 = 1) at log-spot l:
/// sigma^2 = -2t (dk/db / k)(l^2 / 2t^2, t^2 / 8).
inline LocalVolPoint local_var_zero_corr(double delta, double t, double l, const SeriesConfig& cfg = {}) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw DomainError("local_var_zero_corr: t must be positive");
    }
    if (!std::isfinite(l)) {
        throw DomainError("local_var_zero_corr: l must be finite");
    }
    const KPairScaled kp = k_pair_scaled(delta, 0.5 * l * l / (t * t), 0.125 * t * t, cfg);
    LocalVolPoint p;
    p.t = t;
    p.x = std::exp(l);
    p.sigma2 = -2.0 * t * kp.dk / kp.k;
    p.method = LocalVolMethod::series;
    p.k_method = kp.method;
    p.k_eval = kp.k_eval;
    p.dk_eval = kp.dk_eval;
    const double rel = kp.k_eval.truncation_bound / std::abs(kp.k) + kp.dk_eval.truncation_bound / std::abs(kp.dk);
    p.err = rel * p.sigma2;
    if (!(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) {
        throw ConvergenceError("local_var_zero_corr: non-positive local variance");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Quadrature against the joint density g_t(x, y) of (R_t^2, A_t), R_0 = 0.

/// Tensor Gauss-Legendre grid over the density box with x = X t u^2 and
/// y = Y t^2 v^2, holding the density times the quadrature weights.
class JointGrid {
public:
    JointGrid(double delta, double t, std::size_t panels, unsigned threads = 1) : delta_(delta), t_(t) {
        const JointDensityBox box;
        if (delta < box.delta_min || delta > box.delta_max) {
            throw RangeError("joint density quadrature needs delta in [0.5, 8]");
        }
        const quad::GaussLegendre rule(16);
        const quad::CompositeRule r = quad::composite(rule, 0.0, 1.0, panels);
        const std::size_t n = r.x.size();
        x_.resize(n);
        y_.resize(n);
        std::vector<double> wx(n);
        std::vector<double> wy(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = r.x[i];
            x_[i] = box.x_max * t * u * u;
            wx[i] = r.w[i] * 2.0 * box.x_max * t * u;
            y_[i] = box.y_max * t * t * u * u;
            wy[i] = r.w[i] * 2.0 * box.y_max * t * t * u;
        }
        w_.assign(n * n, 0.0);
        parallel_for(n, resolve_threads(threads), [&](std::size_t i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (x_[i] / t < box.x_min || y_[j] / (t * t) < box.y_min) {
                    continue;
                }
                w_[i * n + j] = wx[i] * wy[j] * joint_density_g(delta, t, x_[i], y_[j]).value;
            }
        });
    }

    double delta() const { return delta_; }
    double t() const { return t_; }
    std::size_t size() const { return x_.size(); }
    double x(std::size_t i) const { return x_[i]; }
    double y(std::size_t j) const { return y_[j]; }
    double weight(std::size_t i, std::size_t j) const { return w_[i * x_.size() + j]; }

    /// Integrals of exp(log_w(x, y)) * f_k(x, y) for each moment function f_k,
    /// returned together with the common log scale removed from all of them.
    template <typename LogW, typename... F>
    std::pair<std::array<double, sizeof...(F)>, double> moments(LogW&& log_w, F&&... f) const {
        const std::size_t n = x_.size();
        std::vector<double> lw(n * n, -INFINITY);
        double peak = -INFINITY;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (w_[i * n + j] > 0.0) {
                    const double v = log_w(x_[i], y_[j]);
                    lw[i * n + j] = v;
                    peak = std::max(peak, v);
                }
            }
        }
        std::array<double, sizeof...(F)> out{};
        if (!std::isfinite(peak)) {
            return {out, 0.0};
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double m = w_[i * n + j] * std::exp(lw[i * n + j] - peak);
                if (m == 0.0) {
                    continue;
                }
                std::size_t k = 0;
                ((out[k++] += m * f(x_[i], y_[j])), ...);
            }
        }
        return {out, peak};
    }

private:
    double delta_;
    double t_;
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> w_;
};

struct QuadOptions {
    std::size_t panels = 8;  ///< 16-node panels per axis
    unsigned threads = 0;
};

namespace detail {

/// Process-wide cache of joint grids keyed by (delta, t, panels).
inline std::shared_ptr<const JointGrid> joint_grid(double delta, double t, std::size_t panels, unsigned threads) {
    static std::mutex mutex;
    static std::map<std::tuple<double, double, std::size_t>, std::shared_ptr<const JointGrid>> cache;
    const auto key = std::make_tuple(delta, t, panels);
    {
        const std::scoped_lock lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) {
            return it->second;
        }
    }
    auto grid = std::make_shared<const JointGrid>(delta, t, panels, threads);
    const std::scoped_lock lock(mutex);
    if (cache.size() > 64) {
        cache.clear();
    }
    return cache.emplace(key, grid).first->second;
}

} // namespace detail

struct AlphaValue {
    double value = 0.0;
    double db = 0.0;
    LocalVolMethod method = LocalVolMethod::quad;
    double err = 0.0;  ///< quadrature error estimate or MC standard error of value
};

struct AlphaOptions {
    QuadOptions quad;
    std::optional<MCConfig> mc;  ///< enables the MC fallback outside the density box
    bool force_mc = false;
};

/// alpha_t(a, b, c) = E[A_t^{-1/2} exp(-((a - c R_t^2)^2 / A_t + b^2 A_t + b c R_t^2))]
/// and its derivative in b.
inline AlphaValue alpha_fn(double delta, double t, double a, double b, double c, const AlphaOptions& opt = {}) {
    if (!(t > 0.0) || !(b > 0.0)) {
        throw DomainError("alpha_fn: requires t > 0 and b > 0");
    }
    const JointDensityBox box;
    const bool in_box = delta >= box.delta_min && delta <= box.delta_max;
    if (!opt.force_mc && in_box) {
        const auto eval = [&](std::size_t panels) {
            const auto grid = detail::joint_grid(delta, t, panels, opt.quad.threads);
            const auto [m, scale] = grid->moments(
                [&](double x, double y) {
                    const double d = a - c * x;
                    return -0.5 * std::log(y) - (d * d / y + b * b * y + b * c * x);
                },
                [](double, double) { return 1.0; },
                [&](double x, double y) { return -2.0 * b * y - c * x; });
            return std::make_pair(m[0] * std::exp(scale), m[1] * std::exp(scale));
        };
        const auto fine = eval(opt.quad.panels);
        const auto coarse = eval(std::max<std::size_t>(2, opt.quad.panels / 2));
        return {fine.first, fine.second, LocalVolMethod::quad, std::abs(fine.first - coarse.first)};
    }
    if (!opt.mc) {
        throw RangeError("alpha_fn: delta outside the density box and no MC configuration given");
    }
    const MCConfig& cfg = *opt.mc;
    std::vector<double> grid;
    const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.steps * t - 1e-9)));
    for (std::size_t k = 1; k <= steps; ++k) {
        grid.push_back(t * static_cast<double>(k) / static_cast<double>(steps));
    }
    const PathBundle bundle = simulate_besq({delta, 0.0}, grid, cfg);
    std::vector<double> v(bundle.size());
    std::vector<double> dv(bundle.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = bundle.terminal_variance[i];
        const double y = bundle.integrated_variance[i];
        const double d = a - c * x;
        v[i] = y > 0.0 ? std::exp(-0.5 * std::log(y) - (d * d / y + b * b * y + b * c * x)) : 0.0;
        dv[i] = v[i] * (-2.0 * b * y - c * x);
    }
    const auto mv = stats::estimate_mean(v);
    const auto md = stats::estimate_mean(dv);
    return {mv.mean, md.mean, LocalVolMethod::mc, mv.std_error};
}

struct CorrOptions {
    QuadOptions quad;
    SeriesConfig series;
    std::optional<MCConfig> mc;  ///< used when delta is outside the density box, or with force_mc
    bool force_mc = false;
    bool force_quad = false;     ///< use quadrature even at rho = 0
};

/// E[R_t^2 | ln S_t = l] for the correlated model
/// ln S_t = (rho/2)(R_t^2 - delta t) + sqrt(1 - rho^2) I_t - A_t/2, R_0 = 0.
///
/// Given (R_t^2, A_t) = (x, y), ln S_t is Gaussian with variance (1 - rho^2) y,
/// so the conditional law of (x, y) given ln S_t = l has density proportional to
/// y^{-1/2} exp(-(a - c x)^2 / y - b^2 y + 2 b c x) g_t(x, y) with
/// a = (l + rho delta t / 2) / sqrt(2 (1 - rho^2)), b = 1 / sqrt(8 (1 - rho^2)),
/// c = rho / sqrt(8 (1 - rho^2)).
inline LocalVolPoint local_var_corr(double delta, double rho, double t, double l, const CorrOptions& opt = {}) {
    if (!(rho > -1.0 && rho < 1.0)) {
        throw ValidationError("rho", "rho must lie in (-1, 1)");
    }
    if (!(t > 0.0) || !std::isfinite(l)) {
        throw DomainError("local_var_corr: requires t > 0 and finite l");
    }
    if (rho == 0.0 && !opt.force_quad && !opt.force_mc) {
        return local_var_zero_corr(delta, t, l, opt.series);
    }
    const JointDensityBox box;
    const bool in_box = delta >= box.delta_min && delta <= box.delta_max;
    LocalVolPoint p;
    p.t = t;
    p.x = std::exp(l);
    if (!opt.force_mc && in_box) {
        const double q = 1.0 - rho * rho;
        const double a = (l + 0.5 * rho * delta * t) / std::sqrt(2.0 * q);
        const double b = 1.0 / std::sqrt(8.0 * q);
        const double c = rho / std::sqrt(8.0 * q);
        const double edge = 0.64 * box.x_max * t;
        const auto eval = [&](std::size_t panels) {
            const auto grid = detail::joint_grid(delta, t, panels, opt.quad.threads);
            const auto [m, scale] = grid->moments(
                [&](double x, double y) {
                    const double d = a - c * x;
                    return -0.5 * std::log(y) - d * d / y - b * b * y + 2.0 * b * c * x;
                },
                [](double, double) { return 1.0; }, [](double x, double) { return x; },
                [edge](double x, double) { return x > edge ? 1.0 : 0.0; });
            (void)scale;
            if (!(m[0] > 0.0)) {
                throw RangeError("local_var_corr: conditional mass vanishes on the quadrature grid");
            }
            return std::make_pair(m[1] / m[0], m[2] / m[0]);
        };
        const auto [value, edge_mass] = eval(opt.quad.panels);
        p.sigma2 = value;
        // Mass near the edge of the density box signals truncation of the
        // conditional law; it is folded into the error estimate.
        p.err = std::max(std::abs(value - eval(std::max<std::size_t>(2, opt.quad.panels / 2)).first),
                         edge_mass * box.x_max * t);
        p.method = LocalVolMethod::quad;
        return p;
    }
    if (!opt.mc) {
        throw RangeError("local_var_corr: delta outside the density box and no MC configuration given");
    }
    ModelSpec m;
    m.kind = ModelKind::bessel_corr;
    m.bessel = {delta, 0.0};
    m.rho = rho;
    const PathBundle b = simulate_model(m, t, *opt.mc);
    const CondEstimate e = kernel_conditional(b.terminal_log_stock, b.terminal_variance, l, *opt.mc);
    p.sigma2 = e.value;
    p.err = e.std_error;
    p.n_effective = e.n_effective;
    p.method = LocalVolMethod::mc;
    return p;
}

struct TransformOptions {
    CorrOptions corr;
    bool use_mc = false;  ///< MC branch (required when R_0 != 0)
};

/// sigma~^2(t, x) = g'(t) sigma^2(g(t), x / S_0) for v_t = g'(t) R^2_{g(t)}.
inline LocalVolPoint local_var_transformed(const TransformSpec& tr, double rho, double t, double x,
                                           const TransformOptions& opt = {}) {
    if (!(x > 0.0) || !(t > 0.0)) {
        throw DomainError("local_var_transformed: requires t > 0 and x > 0");
    }
    tr.validate(t);
    if (!opt.use_mc) {
        if (tr.spec.start != 0.0 || std::abs(tr.g(0.0)) > 1e-14) {
            throw UnsupportedBranchError(
                "closed-form local variance needs a Bessel process started at 0; use the MC branch");
        }
        const double gt = tr.g(t);
        const double l = std::log(x / tr.s0);
        LocalVolPoint p = rho == 0.0 && !opt.corr.force_quad
                              ? local_var_zero_corr(tr.spec.delta, gt, l, opt.corr.series)
                              : local_var_corr(tr.spec.delta, rho, gt, l, opt.corr);
        const double scale = tr.g_prime(t);
        p.t = t;
        p.x = x;
        p.sigma2 *= scale;
        p.err *= scale;
        return p;
    }
    if (!opt.corr.mc) {
        throw ValidationError("mc", "the MC branch needs an MC configuration");
    }
    ModelSpec m;
    m.kind = ModelKind::transformed;
    m.transform = tr;
    m.rho = rho;
    const PathBundle b = simulate_model(m, t, *opt.corr.mc);
    const CondEstimate e = kernel_conditional(b.terminal_log_stock, b.terminal_variance, std::log(x), *opt.corr.mc);
    LocalVolPoint p;
    p.t = t;
    p.x = x;
    p.sigma2 = e.value;
    p.err = e.std_error;
    p.n_effective = e.n_effective;
    p.method = LocalVolMethod::mc;
    return p;
}

// ---------------------------------------------------------------------------
// Surfaces.

struct AnalyticSurface {
    LocalVolSurface surface;
    std::vector<LocalVolPoint> points;  ///< row-major like surface.sigma2
};

/// Evaluates point(t, x) on every node; nodes are independent so the result
/// does not depend on the worker count.
template <typename PointFn>
AnalyticSurface build_surface(std::vector<double> t_nodes, std::vector<double> x_nodes, PointFn&& point,
                              unsigned threads = 0) {
    AnalyticSurface out;
    out.surface.t_nodes = std::move(t_nodes);
    out.surface.x_nodes = std::move(x_nodes);
    const std::size_t nt = out.surface.t_nodes.size();
    const std::size_t nx = out.surface.x_nodes.size();
    out.surface.sigma2.assign(nt * nx, 0.0);
    out.points.resize(nt * nx);
    out.surface.validate_nodes();
    parallel_for(nt * nx, resolve_threads(threads), [&](std::size_t k) {
        const std::size_t i = k / nx;
        const std::size_t j = k % nx;
        out.points[k] = point(out.surface.t_nodes[i], out.surface.x_nodes[j]);
        out.surface.sigma2[k] = out.points[k].sigma2;
    });
    out.surface.validate();
    return out;
}

/// CSV `t,x,sigma2,method,err`.
inline void write_surface_csv(std::ostream& os, const AnalyticSurface& s) {
    os << "t,x,sigma2,method,err\n";
    char buf[256];
    for (const auto& p : s.points) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%s,%.6g\n", p.t, p.x, p.sigma2, to_string(p.method), p.err);
        os << buf;
    }
}

} // namespace mimicvol
