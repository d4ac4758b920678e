#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mimicvol/core/stats.hpp"
#include "mimicvol/localvol_analytic.hpp"

using namespace mimicvol;

namespace {

MCConfig config(std::size_t paths, std::size_t steps, std::uint64_t seed) {
    MCConfig cfg;
    cfg.paths = paths;
    cfg.steps = steps;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST(ZeroCorr, EvenInLogSpot) {
    for (double l : {0.1, 0.3, 1.2}) {
        EXPECT_EQ(local_var_zero_corr(2.0, 1.0, l).sigma2, local_var_zero_corr(2.0, 1.0, -l).sigma2);
        EXPECT_EQ(local_var_zero_corr(3.0, 0.1, l).sigma2, local_var_zero_corr(3.0, 0.1, -l).sigma2);
    }
}

TEST(ZeroCorr, ReferenceValues) {
    // Independent Fourier-domain quadrature at 30 digits.
    struct Case {
        double delta, t, l, sigma2;
    };
    const Case cases[] = {
        {2.0, 1.0, 0.0, 1.3881931298162313},     {2.0, 1.0, 0.3, 1.4569035481979096},  {2.0, 0.5, -0.4, 0.95429391115177075},
        {1.0, 1.0, 0.2, 0.61806872682202867},    {4.0, 2.0, 1.0, 5.4663949313765438},   {3.0, 0.25, 0.1, 0.62763995347104608},
    };
    for (const auto& c : cases) {
        const auto p = local_var_zero_corr(c.delta, c.t, c.l);
        EXPECT_NEAR(p.sigma2, c.sigma2, 1e-11 * c.sigma2) << c.delta << " " << c.t << " " << c.l;
        EXPECT_EQ(p.method, LocalVolMethod::series);
        EXPECT_NEAR(p.x, std::exp(c.l), 1e-15);
    }
}

TEST(ZeroCorr, PositiveOnGrid) {
    for (double delta : {0.5, 2.0, 8.0}) {
        for (double t : {0.01, 0.1, 0.5, 2.0}) {
            for (double l : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
                const auto p = local_var_zero_corr(delta, t, l);
                EXPECT_GT(p.sigma2, 0.0);
                EXPECT_TRUE(std::isfinite(p.sigma2));
            }
        }
    }
}

TEST(ZeroCorr, MatchesKernelRegression) {
    ModelSpec m;
    const auto b = simulate_model(m, 1.0, config(200000, 100, 101));
    const auto est = kernel_conditional(b.terminal_log_stock, b.terminal_variance, 0.0, config(200000, 1, 1));
    const double exact = local_var_zero_corr(2.0, 1.0, 0.0).sigma2;
    EXPECT_NEAR(est.value, exact, 3.0 * est.std_error);
}

TEST(ZeroCorr, TowerProperty) {
    ModelSpec m;
    const double t = 1.0;
    const auto b = simulate_model(m, t, config(50000, 100, 102));
    std::vector<double> s2(b.size());
    for (std::size_t i = 0; i < s2.size(); ++i) {
        s2[i] = local_var_zero_corr(2.0, t, b.terminal_log_stock[i]).sigma2;
    }
    const auto e = stats::estimate_mean(s2);
    EXPECT_NEAR(e.mean, 2.0 * t, 3.0 * e.std_error);
}

TEST(Alpha, ReducesToScaledK) {
    const auto a = alpha_fn(2.0, 1.0, 0.5, 0.4, 0.0);
    EXPECT_EQ(a.method, LocalVolMethod::quad);
    EXPECT_NEAR(a.value, scale_k(2.0, 1.0, 0.25, 0.16), 1e-5);
    const auto b = alpha_fn(3.0, 0.5, 0.2, 0.7, 0.0);
    EXPECT_NEAR(b.value, scale_k(3.0, 0.5, 0.04, 0.49), 1e-5 * b.value);
}

TEST(Alpha, DerivativeMatchesFiniteDifference) {
    const double h = 1e-4;
    const auto mid = alpha_fn(2.0, 1.0, 0.3, 0.3, 0.1);
    const double fd =
        (alpha_fn(2.0, 1.0, 0.3, 0.3 + h, 0.1).value - alpha_fn(2.0, 1.0, 0.3, 0.3 - h, 0.1).value) / (2.0 * h);
    EXPECT_NEAR(mid.db, fd, 1e-3 * std::abs(fd));
}

TEST(Alpha, MatchesDirectMonteCarlo) {
    const auto q = alpha_fn(2.0, 1.0, 0.3, 0.3, 0.2);
    AlphaOptions opt;
    opt.mc = config(200000, 100, 103);
    opt.force_mc = true;
    const auto mc = alpha_fn(2.0, 1.0, 0.3, 0.3, 0.2, opt);
    EXPECT_EQ(mc.method, LocalVolMethod::mc);
    EXPECT_NEAR(q.value, mc.value, 3.0 * mc.err);
}

TEST(Alpha, OutsideBoxNeedsMonteCarlo) {
    EXPECT_THROW(alpha_fn(12.0, 1.0, 0.3, 0.3, 0.2), RangeError);
    AlphaOptions opt;
    opt.mc = config(20000, 50, 104);
    EXPECT_EQ(alpha_fn(12.0, 1.0, 0.3, 0.3, 0.2, opt).method, LocalVolMethod::mc);
}

TEST(Corr, ZeroCorrelationReduction) {
    for (double delta : {1.0, 2.0, 4.0}) {
        for (double t : {0.25, 0.5, 1.0}) {
            for (double l : {-0.3, 0.0, 0.2}) {
                const double a = local_var_corr(delta, 0.0, t, l).sigma2;
                const double b = local_var_zero_corr(delta, t, l).sigma2;
                EXPECT_NEAR(a, b, 1e-8 * b);
            }
        }
    }
}

TEST(Corr, QuadratureAgreesWithSeriesAtZeroCorrelation) {
    CorrOptions opt;
    opt.force_quad = true;
    for (double t : {0.5, 1.0}) {
        for (double l : {-0.4, 0.0, 0.3}) {
            const auto q = local_var_corr(2.0, 0.0, t, l, opt);
            const double s = local_var_zero_corr(2.0, t, l).sigma2;
            EXPECT_EQ(q.method, LocalVolMethod::quad);
            EXPECT_NEAR(q.sigma2, s, 1e-5 * s);
            EXPECT_LT(std::abs(q.sigma2 - s), std::max(q.err, 1e-6));
        }
    }
}

TEST(Corr, NegativeCorrelationMatchesMonteCarlo) {
    ModelSpec m;
    m.kind = ModelKind::bessel_corr;
    m.rho = -0.5;
    const auto b = simulate_model(m, 1.0, config(300000, 100, 105));
    const auto cfg = config(300000, 1, 1);
    double lo = 0.0;
    double hi = 0.0;
    for (double l : {-0.3, 0.0, 0.3}) {
        const auto p = local_var_corr(2.0, -0.5, 1.0, l);
        const auto e = kernel_conditional(b.terminal_log_stock, b.terminal_variance, l, cfg);
        EXPECT_NEAR(p.sigma2, e.value, std::max(3.0 * e.std_error, 0.05 * p.sigma2)) << "l=" << l;
        EXPECT_NEAR(p.sigma2, e.value, 4.0 * e.std_error) << "l=" << l;
        if (l < 0.0) {
            lo = p.sigma2;
            EXPECT_GT(e.value, kernel_conditional(b.terminal_log_stock, b.terminal_variance, 0.3, cfg).value);
        }
        if (l > 0.0) {
            hi = p.sigma2;
        }
    }
    EXPECT_GT(lo, hi);
}

TEST(Corr, RejectsInvalidCorrelation) {
    try {
        local_var_corr(2.0, 1.0, 1.0, 0.0);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.key(), "rho");
    }
}

TEST(Transformed, IdentityTransform) {
    const auto tr = TransformSpec::identity({2.0, 0.0});
    const auto p = local_var_transformed(tr, 0.0, 1.0, 1.2);
    EXPECT_NEAR(p.sigma2, local_var_zero_corr(2.0, 1.0, std::log(1.2)).sigma2, 1e-14);
}

TEST(Transformed, HestonMap) {
    const CirSpec cir{2.0, 0.04, 0.4, 0.0};
    const auto tr = TransformSpec::heston(cir);
    EXPECT_NEAR(tr.spec.delta, 2.0, 1e-15);
    EXPECT_NEAR(tr.g(1.0), 0.02 * std::expm1(2.0), 1e-15);
    EXPECT_NEAR(tr.g(1.0), 0.127781, 1e-6);
    EXPECT_NEAR(tr.g_prime(1.0), 0.295562, 1e-6);
    for (double x : {0.8, 1.0, 1.3}) {
        const auto p = local_var_transformed(tr, 0.0, 1.0, x);
        EXPECT_NEAR(p.sigma2, tr.g_prime(1.0) * local_var_zero_corr(2.0, tr.g(1.0), std::log(x)).sigma2,
                    1e-13 * p.sigma2);
    }
}

TEST(Transformed, HestonMatchesKernelRegression) {
    ModelSpec m;
    m.kind = ModelKind::heston;
    m.cir = {2.0, 0.04, 0.4, 0.0};
    const auto b = simulate_model(m, 1.0, config(200000, 100, 106));
    for (double l : {-0.2, 0.0, 0.2}) {
        const auto e = kernel_conditional(b.terminal_log_stock, b.terminal_variance, l, config(200000, 1, 1));
        const auto p = local_var_transformed(TransformSpec::heston(m.cir), 0.0, 1.0, std::exp(l));
        EXPECT_NEAR(p.sigma2, e.value, 4.0 * e.std_error) << "l=" << l;
    }
}

TEST(Transformed, HestonTowerProperty) {
    ModelSpec m;
    m.kind = ModelKind::heston;
    m.cir = {2.0, 0.04, 0.4, 0.0};
    const auto tr = TransformSpec::heston(m.cir);
    const auto b = simulate_model(m, 1.0, config(30000, 100, 107));
    std::vector<double> s2(b.size());
    for (std::size_t i = 0; i < s2.size(); ++i) {
        s2[i] = local_var_transformed(tr, 0.0, 1.0, std::exp(b.terminal_log_stock[i])).sigma2;
    }
    const auto e = stats::estimate_mean(s2);
    EXPECT_NEAR(e.mean, tr.g_prime(1.0) * tr.spec.delta * tr.g(1.0), 3.0 * e.std_error);
}

TEST(Transformed, NonzeroStartNeedsMonteCarlo) {
    const CirSpec cir{2.0, 0.04, 0.4, 0.04};
    const auto tr = TransformSpec::heston(cir);
    EXPECT_THROW(local_var_transformed(tr, 0.0, 1.0, 1.0), UnsupportedBranchError);
    TransformOptions opt;
    opt.use_mc = true;
    opt.corr.mc = config(50000, 50, 108);
    const auto p = local_var_transformed(tr, 0.0, 1.0, 1.0, opt);
    EXPECT_EQ(p.method, LocalVolMethod::mc);
    EXPECT_GT(p.sigma2, 0.0);
}

TEST(Surface, IndependentOfWorkerCount) {
    const std::vector<double> ts{0.25, 0.5, 1.0};
    const std::vector<double> xs{0.7, 0.9, 1.0, 1.1, 1.4};
    auto point = [](double t, double x) { return local_var_zero_corr(2.0, t, std::log(x)); };
    const auto a = build_surface(ts, xs, point, 1);
    const auto b = build_surface(ts, xs, point, 3);
    EXPECT_EQ(a.surface.sigma2, b.surface.sigma2);
    std::ostringstream os;
    write_surface_csv(os, a);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,x,sigma2,method,err");
    EXPECT_NE(os.str().find(",series,"), std::string::npos);
    EXPECT_NEAR(a.surface(1.0, 1.0), local_var_zero_corr(2.0, 1.0, 0.0).sigma2, 1e-15);
}
