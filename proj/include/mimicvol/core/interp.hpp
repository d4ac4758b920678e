#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mimicvol/core/errors.hpp"

namespace mimicvol::interp {

/// Index i with x[i] <= v < x[i+1], clamped to [0, n-2].
inline std::size_t bracket(std::span<const double> x, double v) {
    if (x.size() < 2) {
        return 0;
    }
    const auto it = std::upper_bound(x.begin(), x.end(), v);
    const auto idx = static_cast<std::ptrdiff_t>(it - x.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(x.size()) - 2));
}

/// Piecewise-linear interpolation with flat extrapolation.
inline double linear(std::span<const double> x, std::span<const double> y, double v) {
    if (x.size() == 1) {
        return y[0];
    }
    if (v <= x.front()) {
        return y.front();
    }
    if (v >= x.back()) {
        return y.back();
    }
    const std::size_t i = bracket(x, v);
    const double w = (v - x[i]) / (x[i + 1] - x[i]);
    return (1.0 - w) * y[i] + w * y[i + 1];
}

/// Natural cubic spline.
class CubicSpline {
public:
    CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 3 || y_.size() != n) {
            throw DomainError("cubic spline needs at least 3 matching points");
        }
        m_.assign(n, 0.0);
        std::vector<double> c(n, 0.0);
        std::vector<double> d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
            const double diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = d[i] - c[i] * m_[i + 1];
        }
    }

    double operator()(double v) const {
        if (v <= x_.front()) {
            return y_.front();
        }
        if (v >= x_.back()) {
            return y_.back();
        }
        const std::size_t i = bracket(x_, v);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - v) / h;
        const double b = (v - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
};


/// Piecewise-linear function of time with flat extrapolation; a single node is a constant.
struct Curve {
    std::vector<double> times;
    std::vector<double> values;

    static Curve constant(double v) { return Curve{{0.0}, {v}}; }

    void validate(const std::string& key) const {
        if (times.empty() || times.size() != values.size()) {
            throw ValidationError(key, key + ": times and values must be non-empty and of equal length");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) {
                throw ValidationError(key, key + ": times must be strictly increasing");
            }
        }
    }

    double operator()(double t) const { return linear(times, values, t); }

    /// Exact integral over [t0, t1] of the interpolant.
    double integral(double t0, double t1) const {
        if (t1 < t0) {
            return -integral(t1, t0);
        }
        // Breakpoints inside (t0, t1) split the integrand into linear pieces.
        double sum = 0.0;
        double lo = t0;
        auto it = std::upper_bound(times.begin(), times.end(), t0);
        while (lo < t1) {
            const double hi = (it == times.end()) ? t1 : std::min(t1, *it);
            sum += 0.5 * (hi - lo) * ((*this)(lo) + (*this)(hi));
            lo = hi;
            if (it != times.end()) {
                ++it;
            }
        }
        return sum;
    }
};

} // namespace mimicvol::interp
