#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace mimicvol::quad {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(std::size_t n) : nodes(n), weights(n) {
        const std::size_t m = (n + 1) / 2;
        for (std::size_t i = 0; i < m; ++i) {
            double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                                (static_cast<double>(n) + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p1 = 1.0;
                double p2 = 0.0;
                for (std::size_t j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / static_cast<double>(j);
                }
                dp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
                const double z1 = z;
                z = z1 - p1 / dp;
                if (std::abs(z - z1) < 1e-15) {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[n - 1 - i] = weights[i];
        }
    }

    /// Integrate f over [a, b].
    template <typename F>
    double integrate(F&& f, double a, double b) const {
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (b + a);
        double sum = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            sum += weights[i] * f(mid + half * nodes[i]);
        }
        return half * sum;
    }
};

/// Nodes/weights of a composite Gauss-Legendre rule on [a, b] with `panels` equal panels.
struct CompositeRule {
    std::vector<double> x;
    std::vector<double> w;
};

inline CompositeRule composite(const GaussLegendre& rule, double a, double b, std::size_t panels) {
    CompositeRule out;
    out.x.reserve(panels * rule.nodes.size());
    out.w.reserve(panels * rule.nodes.size());
    const double width = (b - a) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + width * static_cast<double>(p);
        const double half = 0.5 * width;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            out.x.push_back(lo + half * (rule.nodes[i] + 1.0));
            out.w.push_back(half * rule.weights[i]);
        }
    }
    return out;
}

/// Composite Gauss-Legendre integral of f over [a, b].
template <typename F>
double integrate(F&& f, double a, double b, std::size_t panels = 8, std::size_t order = 16) {
    const GaussLegendre rule(order);
    const double width = (b - a) / static_cast<double>(panels);
    double sum = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + width * static_cast<double>(p);
        sum += rule.integrate(f, lo, lo + width);
    }
    return sum;
}

} // namespace mimicvol::quad
