#pragma once

#include <cmath>
#include <functional>

#include "mimicvol/bessel_core.hpp"
#include "mimicvol/core/errors.hpp"

namespace mimicvol {

/// Time-space transformed Bessel model: V_t = f(t) R^2_{g(t)} and the stock
/// variance v_t = g'(t) R^2_{g(t)}.
struct TransformSpec {
    std::function<double(double)> f;
    std::function<double(double)> g;
    std::function<double(double)> g_prime;
    BesselSpec spec;
    double s0 = 1.0;

    static TransformSpec identity(const BesselSpec& spec, double s0 = 1.0) {
        return TransformSpec{[](double) { return 1.0; }, [](double t) { return t; },
                             [](double) { return 1.0; }, spec, s0};
    }

    /// The Heston map: v_t = (eta^2/4) e^{2 kappa t} V_t with V the CIR process.
    static TransformSpec heston(const CirSpec& cir, double s0 = 1.0) {
        const CirBesselMap map = cir_bessel_map(cir);
        return TransformSpec{[map](double t) { return map.f(t); }, [map](double t) { return map.g(t); },
                             [map](double t) { return map.g_prime(t); }, map.spec, s0};
    }

    /// Checks f > 0 and g' > 0 at the given times.
    void validate(double horizon) const {
        if (!f || !g || !g_prime) {
            throw ValidationError("transform", "transform needs f, g and g_prime");
        }
        spec.validate();
        if (!(s0 > 0.0)) {
            throw ValidationError("s0", "s0 must be positive");
        }
        for (int i = 0; i <= 16; ++i) {
            const double t = horizon * i / 16.0;
            if (!(f(t) > 0.0)) {
                throw ValidationError("transform", "f must be positive on the horizon");
            }
            if (!(g_prime(t) > 0.0)) {
                throw ValidationError("transform", "g must be increasing on the horizon");
            }
        }
    }
};

} // namespace mimicvol
