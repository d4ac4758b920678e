#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mimicvol::stats {

/// Pairwise summation; result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 64) {
        double s = 0.0;
        for (double x : v) {
            s += x;
        }
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean(std::span<const double> v) {
    return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double std_dev = 0.0;
};

/// Sample mean with its standard error.
inline MeanEstimate estimate_mean(std::span<const double> v) {
    MeanEstimate out;
    const std::size_t n = v.size();
    if (n == 0) {
        return out;
    }
    out.mean = mean(v);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = v[i] - out.mean;
        sq[i] = d * d;
    }
    const double var = n > 1 ? pairwise_sum(sq) / static_cast<double>(n - 1) : 0.0;
    out.std_dev = std::sqrt(var);
    out.std_error = std::sqrt(var / static_cast<double>(n));
    return out;
}

/// Builds a vector by applying f to each index.
template <typename F>
std::vector<double> tabulate(std::size_t n, F&& f) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(i);
    }
    return out;
}

} // namespace mimicvol::stats
