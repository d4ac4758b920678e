#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mimicvol/core/errors.hpp"
#include "mimicvol/core/interp.hpp"

namespace mimicvol {

enum class SurfaceInterp { bilinear_in_t_logx };

/// Local variance on a (t, x) grid, stored row-major by maturity.
struct LocalVolSurface {
    std::vector<double> t_nodes;
    std::vector<double> x_nodes;
    std::vector<double> sigma2;
    SurfaceInterp interp = SurfaceInterp::bilinear_in_t_logx;

    static LocalVolSurface flat(double sigma2, std::vector<double> t_nodes, std::vector<double> x_nodes) {
        LocalVolSurface s{std::move(t_nodes), std::move(x_nodes), {}, SurfaceInterp::bilinear_in_t_logx};
        s.sigma2.assign(s.t_nodes.size() * s.x_nodes.size(), sigma2);
        return s;
    }

    double& at(std::size_t i, std::size_t j) { return sigma2[i * x_nodes.size() + j]; }
    double at(std::size_t i, std::size_t j) const { return sigma2[i * x_nodes.size() + j]; }

    void validate_nodes() const {
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
        increasing(t_nodes, "t_nodes");
        increasing(x_nodes, "x_nodes");
    }

    void validate() const {
        validate_nodes();
        if (sigma2.size() != t_nodes.size() * x_nodes.size()) {
            throw ValidationError("sigma2", "sigma2 grid size must equal t_nodes x x_nodes");
        }
        for (double v : sigma2) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ValidationError("sigma2", "sigma2 must be finite and nonnegative");
            }
        }
    }

    LocalVolSurface scaled(double factor) const {
        LocalVolSurface out = *this;
        for (double& v : out.sigma2) {
            v *= factor;
        }
        return out;
    }

    struct Lookup {
        double sigma2 = 0.0;
        bool clamped = false;
    };

    /// Bilinear in (t, ln x); outside the grid the nearest boundary value is used.
    Lookup lookup(double t, double x) const {
        return evaluator().lookup(t, std::log(x));
    }

    double operator()(double t, double x) const { return lookup(t, x).sigma2; }

    /// Evaluation helper caching ln x nodes; works directly in log-spot.
    class Evaluator {
    public:
        explicit Evaluator(const LocalVolSurface& s) : s_(&s), log_x_(s.x_nodes.size()) {
            for (std::size_t j = 0; j < log_x_.size(); ++j) {
                log_x_[j] = std::log(s.x_nodes[j]);
            }
        }

        /// Row interpolated in t. `clamped` reports t outside the node range.
        std::vector<double> row(double t, bool& clamped) const {
            const auto& tn = s_->t_nodes;
            const std::size_t nx = log_x_.size();
            std::vector<double> out(nx);
            clamped = t < tn.front() || t > tn.back();
            if (tn.size() == 1 || t <= tn.front() || t >= tn.back()) {
                const std::size_t i = (tn.size() == 1 || t <= tn.front()) ? 0 : tn.size() - 1;
                for (std::size_t j = 0; j < nx; ++j) {
                    out[j] = s_->at(i, j);
                }
                return out;
            }
            const std::size_t i = interp::bracket(tn, t);
            const double w = (t - tn[i]) / (tn[i + 1] - tn[i]);
            for (std::size_t j = 0; j < nx; ++j) {
                out[j] = (1.0 - w) * s_->at(i, j) + w * s_->at(i + 1, j);
            }
            return out;
        }

        /// Interpolates a row returned by row() at log-spot lx.
        double in_row(std::span<const double> row, double lx, bool& clamped) const {
            clamped = lx < log_x_.front() || lx > log_x_.back();
            return interp::linear(log_x_, row, lx);
        }

        Lookup lookup(double t, double lx) const {
            bool ct = false;
            bool cx = false;
            const std::vector<double> r = row(t, ct);
            const double v = in_row(r, lx, cx);
            return {v, ct || cx};
        }

    private:
        const LocalVolSurface* s_;
        std::vector<double> log_x_;
    };

    Evaluator evaluator() const { return Evaluator(*this); }
};

} // namespace mimicvol
