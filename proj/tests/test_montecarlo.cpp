#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mimicvol/core/rng.hpp"
#include "mimicvol/core/stats.hpp"
#include "mimicvol/montecarlo.hpp"

using namespace mimicvol;

namespace {

MCConfig config(std::size_t paths, std::size_t steps, std::uint64_t seed) {
    MCConfig cfg;
    cfg.paths = paths;
    cfg.steps = steps;
    cfg.seed = seed;
    return cfg;
}

double bs_call(double s, double k, double sigma, double t, double r = 0.0) {
    const double sd = sigma * std::sqrt(t);
    const double d1 = (std::log(s / k) + r * t) / sd + 0.5 * sd;
    const auto n = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    return s * n(d1) - k * std::exp(-r * t) * n(d1 - sd);
}

std::vector<double> exp_of(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::exp(x); });
    return out;
}

} // namespace

TEST(Philox, KnownAnswerVectors) {
    using B = Philox::Block;
    EXPECT_EQ(Philox::bijection(B{0, 0, 0, 0}, {0, 0}), (B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(Philox::bijection(B{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
              (B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(Philox::bijection(B{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, StreamsDiffer) {
    Philox a(7, 0);
    Philox b(7, 1);
    Philox c(8, 0);
    const auto x = a();
    EXPECT_NE(x, b());
    EXPECT_NE(x, c());
    Philox a2(7, 0);
    EXPECT_EQ(x, a2());
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Grid, MergesSnapshots) {
    const double times[] = {0.25, 0.33, 1.0};
    const auto g = detail::make_grid(times, 4);
    EXPECT_EQ(g.times, (std::vector<double>{0.0, 0.25, 0.33, 0.5, 0.75, 1.0}));
    EXPECT_EQ(g.snaps, (std::vector<std::size_t>{1, 2, 5}));
    const double bad[] = {0.5, 0.5};
    EXPECT_THROW(detail::make_grid(bad, 4), ValidationError);
}

TEST(SimulateBesq, MeanAndVarianceFromZero) {
    const double grid[] = {1.0};
    const auto b = simulate_besq({2.0, 0.0}, grid, config(100000, 1, 11));
    const auto m = stats::estimate_mean(b.terminal_variance);
    EXPECT_NEAR(m.mean, 2.0, 3.0 * m.std_error);
    std::vector<double> dev(b.size());
    for (std::size_t i = 0; i < dev.size(); ++i) {
        dev[i] = (b.terminal_variance[i] - 2.0) * (b.terminal_variance[i] - 2.0);
    }
    const auto v = stats::estimate_mean(dev);
    EXPECT_NEAR(v.mean, 2.0 * 2.0, 3.0 * v.std_error);
}

TEST(SimulateBesq, MeanFromNonzeroStart) {
    std::vector<double> grid;
    for (int k = 1; k <= 50; ++k) {
        grid.push_back(0.02 * k);
    }
    const auto b = simulate_besq({3.0, 1.0}, grid, config(100000, 1, 12));
    const auto m = stats::estimate_mean(b.terminal_variance);
    EXPECT_NEAR(m.mean, 1.0 + 3.0, 3.0 * m.std_error);
    for (double a : b.integrated_variance) {
        ASSERT_GE(a, 0.0);
    }
}

TEST(SimulateBesq, HyperbolicLaplaceOfArea) {
    std::vector<double> grid;
    for (int k = 1; k <= 100; ++k) {
        grid.push_back(0.01 * k);
    }
    const auto b = simulate_besq({2.0, 0.0}, grid, config(100000, 1, 13));
    std::vector<double> y(b.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = std::exp(-0.5 * b.integrated_variance[i]);
    }
    const auto m = stats::estimate_mean(y);
    EXPECT_NEAR(m.mean, 1.0 / std::cosh(1.0), 3.0 * m.std_error);
}

TEST(SimulateBesq, KolmogorovSmirnovAgainstExponential) {
    // BESQ_2(0) at t = 1 is 2 * Exp(1).
    const double grid[] = {1.0};
    const std::size_t n = 10000;
    const double crit = 1.628 / std::sqrt(static_cast<double>(n));
    int passes = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto x = simulate_besq({2.0, 0.0}, grid, config(n, 1, seed)).terminal_variance;
        std::sort(x.begin(), x.end());
        double d = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = -std::expm1(-0.5 * x[i]);
            d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
        }
        passes += d < crit ? 1 : 0;
    }
    EXPECT_GE(passes, 9);
}

TEST(SimulateBesq, LaplaceBattery) {
    const double as[] = {0.0, 0.5, 2.0};
    const double bs[] = {0.0, 1.0, 2.5};
    std::vector<double> grid;
    for (int k = 1; k <= 100; ++k) {
        grid.push_back(0.01 * k);
    }
    std::uint64_t seed = 100;
    for (double delta : {1.0, 2.0, 4.0}) {
        for (double start : {0.0, 1.0}) {
            const BesselSpec spec{delta, start};
            const auto b = simulate_besq(spec, grid, config(40000, 1, ++seed));
            for (double a : as) {
                for (double bb : bs) {
                    std::vector<double> y(b.size());
                    for (std::size_t i = 0; i < y.size(); ++i) {
                        y[i] = std::exp(-a * b.terminal_variance[i] - 0.5 * bb * bb * b.integrated_variance[i]);
                    }
                    const auto m = stats::estimate_mean(y);
                    const double exact = laplace_joint(spec, a, bb, 1.0);
                    EXPECT_NEAR(m.mean, exact, 3.0 * m.std_error + 1e-12)
                        << "delta=" << delta << " start=" << start << " a=" << a << " b=" << bb;
                }
            }
        }
    }
}

TEST(SimulateBesq, ConditionalScalingIdentity) {
    const double t = 0.8;
    std::vector<double> grid;
    for (int k = 1; k <= 160; ++k) {
        grid.push_back(t * k / 160.0);
    }
    const auto b = simulate_besq({2.0, 0.0}, grid, config(100000, 1, 21));
    const auto check = [&](auto g) {
        std::vector<double> d(b.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double a = b.integrated_variance[i];
            d[i] = b.terminal_variance[i] * g(a) - (2.0 / t) * a * g(a);
        }
        const auto m = stats::estimate_mean(d);
        EXPECT_NEAR(m.mean, 0.0, 3.0 * m.std_error);
    };
    check([](double) { return 1.0; });
    check([](double a) { return a; });
    check([](double a) { return std::exp(-a); });
}

TEST(SimulateModel, ReproducibleAcrossThreadCounts) {
    ModelSpec m;
    m.kind = ModelKind::bessel_corr;
    m.rho = -0.5;
    auto c1 = config(2000, 50, 5);
    c1.threads = 1;
    auto c4 = c1;
    c4.threads = 4;
    const auto a = simulate_model(m, 1.0, c1);
    const auto b = simulate_model(m, 1.0, c4);
    EXPECT_EQ(a.terminal_log_stock, b.terminal_log_stock);
    EXPECT_EQ(a.terminal_variance, b.terminal_variance);
    EXPECT_EQ(a.integrated_variance, b.integrated_variance);
}

TEST(SimulateModel, MartingaleForEveryKind) {
    const interp::Curve drift{{0.0, 2.0}, {0.01, 0.05}};
    std::vector<ModelSpec> models;
    ModelSpec base;
    base.s0 = 1.3;
    base.drift = drift;
    {
        ModelSpec m = base;
        m.kind = ModelKind::bessel_zero_corr;
        models.push_back(m);
    }
    {
        ModelSpec m = base;
        m.kind = ModelKind::bessel_corr;
        m.rho = -0.5;
        m.bessel = {3.0, 0.3};
        models.push_back(m);
    }
    {
        ModelSpec m = base;
        m.kind = ModelKind::heston;
        m.cir = {2.0, 0.04, 0.4, 0.04};
        m.rho = 0.3;
        models.push_back(m);
    }
    {
        ModelSpec m = base;
        m.kind = ModelKind::transformed;
        m.transform = TransformSpec::identity({2.0, 0.0}, 1.3);
        models.push_back(m);
    }
    {
        ModelSpec m = base;
        m.kind = ModelKind::local_vol;
        m.surface = LocalVolSurface::flat(0.04, {0.5, 1.0}, {0.5, 1.0, 2.0});
        models.push_back(m);
    }
    {
        ModelSpec m = base;
        m.kind = ModelKind::hybrid;
        RatesSpec r;
        r.curve = drift;
        r.rho_rs = 0.4;
        m.rates = r;
        m.hybrid_variance = HybridVariance::heston;
        m.cir = {1.0, 0.04, 0.3, 0.04};
        models.push_back(m);
    }
    const double t = 1.0;
    const double growth = std::exp(drift.integral(0.0, t));
    std::uint64_t seed = 40;
    for (const auto& m : models) {
        const auto b = simulate_model(m, t, config(100000, 50, ++seed));
        const auto est = stats::estimate_mean(exp_of(b.terminal_log_stock));
        EXPECT_NEAR(est.mean, 1.3 * growth, 3.0 * est.std_error) << "kind " << static_cast<int>(m.kind);
        EXPECT_NEAR(b.integrated_rate[0], drift.integral(0.0, t), 1e-14);
    }
}

TEST(SimulateModel, DiscountedMartingaleUnderVasicek) {
    ModelSpec m;
    m.kind = ModelKind::hybrid;
    RatesSpec r;
    r.kind = RatesKind::vasicek;
    r.a = 0.3;
    r.sigma_r = 0.02;
    r.r0 = 0.03;
    r.theta = 0.05;
    r.rho_rs = 0.5;
    m.rates = r;
    m.sigma = 0.25;
    const double t = 2.0;
    const auto b = simulate_model(m, t, config(100000, 20, 3));
    std::vector<double> disc(b.size());
    std::vector<double> disc_s(b.size());
    std::vector<double> rt(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        disc[i] = std::exp(-b.integrated_rate[i]);
        disc_s[i] = std::exp(b.terminal_log_stock[i] - b.integrated_rate[i]);
        rt[i] = b.terminal_rate[i];
    }
    const auto bond = stats::estimate_mean(disc);
    EXPECT_NEAR(bond.mean, vasicek::bond(r, t), 3.0 * bond.std_error);
    const auto s = stats::estimate_mean(disc_s);
    EXPECT_NEAR(s.mean, 1.0, 3.0 * s.std_error);
    const auto rm = stats::estimate_mean(rt);
    EXPECT_NEAR(rm.mean, 0.05 + (0.03 - 0.05) * std::exp(-0.6), 3.0 * rm.std_error);
    const double var = 0.02 * 0.02 * (1.0 - std::exp(-1.2)) / 0.6;
    EXPECT_NEAR(rm.std_dev * rm.std_dev, var, 0.02 * var);
}

TEST(SimulateModel, FlatLocalVolMatchesBlackScholes) {
    ModelSpec m;
    m.kind = ModelKind::local_vol;
    m.surface = LocalVolSurface::flat(0.04, {0.1, 2.0}, {0.2, 5.0});
    const auto b = simulate_model(m, 1.0, config(200000, 50, 8));
    const auto c = call_estimate(b, 1.0);
    EXPECT_NEAR(bs_call(1.0, 1.0, 0.2, 1.0), 0.0797, 5e-5);
    EXPECT_NEAR(c.mean, bs_call(1.0, 1.0, 0.2, 1.0), 3.0 * c.std_error);
}

TEST(SimulateModel, CorrelatedRoutesAgree) {
    ModelSpec m;
    m.kind = ModelKind::bessel_corr;
    m.rho = -0.5;
    const auto exact = simulate_model(m, 1.0, config(100000, 100, 31));
    auto ecfg = config(50000, 2000, 32);
    ecfg.scheme = Scheme::euler;
    const auto euler = simulate_model(m, 1.0, ecfg);
    for (double k : {0.9, 1.0, 1.1}) {
        const auto a = call_estimate(exact, k);
        const auto b = call_estimate(euler, k);
        EXPECT_NEAR(a.mean, b.mean, 3.0 * std::hypot(a.std_error, b.std_error)) << "K=" << k;
    }
}

TEST(SimulateCir, TransformMatchesEulerMoments) {
    const CirSpec cir{1.5, 0.05, 0.4, 0.03};
    auto ecfg = config(100000, 400, 2);
    ecfg.scheme = Scheme::euler;
    const auto exact = simulate_cir(cir, 1.0, config(100000, 1, 1));
    const auto euler = simulate_cir(cir, 1.0, ecfg);
    const double mean = cir.theta + (cir.v0 - cir.theta) * std::exp(-cir.kappa);
    const auto a = stats::estimate_mean(exact);
    const auto b = stats::estimate_mean(euler);
    EXPECT_NEAR(a.mean, mean, 3.0 * a.std_error);
    EXPECT_NEAR(a.mean, b.mean, 3.0 * std::hypot(a.std_error, b.std_error));
    auto sq = [](std::vector<double> v) {
        for (double& x : v) {
            x *= x;
        }
        return stats::estimate_mean(v);
    };
    const auto a2 = sq(exact);
    const auto b2 = sq(euler);
    EXPECT_NEAR(a2.mean, b2.mean, 3.0 * std::hypot(a2.std_error, b2.std_error));
}

TEST(Kernel, ConstantResponseIsExact) {
    Philox rng(1, 0);
    std::normal_distribution<double> n;
    std::vector<double> x(5000);
    for (double& v : x) {
        v = n(rng);
    }
    const std::vector<double> y(x.size(), 0.1234567);
    for (Estimator e : {Estimator::local_linear, Estimator::nadaraya_watson}) {
        auto cfg = config(5000, 1, 1);
        cfg.estimator = e;
        for (double x0 : {-1.0, 0.0, 0.7}) {
            const auto est = kernel_conditional(x, y, x0, cfg);
            EXPECT_EQ(est.value, 0.1234567);
            EXPECT_GT(est.std_error, 0.0);
            EXPECT_GT(est.n_effective, 1.0);
        }
    }
}

TEST(Kernel, IdentityRegression) {
    Philox rng(2, 0);
    std::normal_distribution<double> n;
    std::vector<double> x(100000);
    for (double& v : x) {
        v = n(rng);
    }
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] + 0.3 * n(rng);
    }
    for (Estimator e : {Estimator::local_linear, Estimator::nadaraya_watson}) {
        auto cfg = config(x.size(), 1, 1);
        cfg.estimator = e;
        const auto est = kernel_conditional(x, y, 0.5, cfg);
        EXPECT_NEAR(est.value, 0.5, 3.0 * est.std_error);
    }
}

TEST(Kernel, LowMassAndSizeErrors) {
    std::vector<double> x(2000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i) / 2000.0;
    }
    const std::vector<double> y(x.size(), 1.0);
    const auto cfg = config(2000, 1, 1);
    EXPECT_THROW(kernel_conditional(x, y, 5.0, cfg), LowMassError);
    const std::vector<double> small(500, 1.0);
    EXPECT_THROW(kernel_conditional(small, small, 0.0, cfg), ValidationError);
    const std::vector<double> shorter(1999, 1.0);
    EXPECT_THROW(kernel_conditional(x, shorter, 0.5, cfg), ValidationError);
}

TEST(Kernel, SquaredBesselGivenArea) {
    const double t = 1.0;
    std::vector<double> grid;
    for (int k = 1; k <= 100; ++k) {
        grid.push_back(0.01 * k);
    }
    const auto b = simulate_besq({2.0, 0.0}, grid, config(200000, 1, 77));
    for (double a : {0.5, 1.0}) {
        const auto est = kernel_conditional(b.integrated_variance, b.terminal_variance, a, config(200000, 1, 1));
        EXPECT_NEAR(est.value, 2.0 * a / t, 3.0 * est.std_error) << "a=" << a;
    }
}

TEST(Kernel, WeightedReducesToUnweightedForConstantWeights) {
    Philox rng(3, 0);
    std::normal_distribution<double> n;
    std::vector<double> x(20000);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = n(rng);
        y[i] = x[i] * x[i] + n(rng);
    }
    const std::vector<double> w(x.size(), 0.87);
    const auto cfg = config(x.size(), 1, 1);
    const auto a = kernel_conditional(x, y, 0.3, cfg);
    const auto b = kernel_conditional_weighted(x, y, w, 0.3, cfg);
    EXPECT_NEAR(a.value, b.value, 1e-12);
    EXPECT_NEAR(a.std_error, b.std_error, 1e-12);
}

TEST(MimicCheck, FlatModelsPassAndMismatchFails) {
    ModelSpec m;
    m.kind = ModelKind::local_vol;
    m.surface = LocalVolSurface::flat(0.04, {0.1, 2.0}, {0.2, 5.0});
    const double ts[] = {0.5, 1.0};
    const double ks[] = {0.8, 1.0, 1.25};
    const auto good = mimic_check(m, *m.surface, ts, ks, config(50000, 50, 9));
    EXPECT_TRUE(good.all_pass());
    EXPECT_EQ(good.cells.size(), 6u);
    const auto bad = mimic_check(m, m.surface->scaled(1.5), ts, ks, config(50000, 50, 9));
    EXPECT_FALSE(bad.all_pass());
}

TEST(Config, Validation) {
    auto cfg = config(1000, 10, 1);
    cfg.scheme = Scheme::euler;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg.scheme = Scheme::exact_besq;
    cfg.bandwidth_rule = BandwidthRule::fixed;
    EXPECT_THROW(cfg.validate(), ValidationError);
    ModelSpec m;
    m.rho = 1.5;
    try {
        m.validate();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.key(), "rho");
    }
    m.rho = 0.0;
    m.kind = ModelKind::local_vol;
    EXPECT_THROW(m.validate(), ValidationError);
}
