#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mimicvol/cli/run.hpp"

using namespace mimicvol;
using namespace mimicvol::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mimicvol_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* minimal = R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2},
                          "grid": {"t_nodes": [0.5, 1], "x_nodes": [0.9, 1, 1.1]}})";

template <typename F>
ValidationError validation_error(F&& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        return e;
    }
    ADD_FAILURE() << "no ValidationError";
    return ValidationError("", "");
}

void flat_surface(const fs::path& p, double sigma2) {
    std::string s = "t,x,sigma2,method,err\n";
    for (double t : {0.25, 0.5, 1.0, 1.5}) {
        for (double x : {0.3, 0.6, 0.8, 1.0, 1.2, 1.5, 2.0, 3.0}) {
            s += std::to_string(t) + "," + std::to_string(x) + "," + std::to_string(sigma2) + ",fd,0\n";
        }
    }
    write(p, s);
}

} // namespace

TEST(Config, MinimalDocumentGetsDefaults) {
    const RunConfig c = parse_config(minimal);
    EXPECT_EQ(c.command, Command::localvol);
    EXPECT_EQ(c.mc.paths, 100000u);
    EXPECT_EQ(c.mc.steps, 100u);
    EXPECT_EQ(c.mc.seed, 12345u);
    EXPECT_EQ(c.mc.scheme, Scheme::exact_besq);
    EXPECT_EQ(c.mc.bandwidth_rule, BandwidthRule::silverman);
    EXPECT_EQ(c.model->bessel.start, 0.0);
    EXPECT_EQ(c.model->s0, 1.0);
    EXPECT_EQ(c.report_format, ReportFormat::csv);
    EXPECT_EQ(c.resolved["mc"]["paths"], 100000);
    EXPECT_EQ(c.resolved["model"]["start"], 0.0);
    EXPECT_EQ(c.resolved["localvol"]["method"], "analytic");
}

TEST(Config, UnknownKeyIsNamed) {
    const std::string doc = R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2, "volvol": 0.3},
                               "grid": {"t_nodes": [1], "x_nodes": [1]}})";
    const auto e = validation_error([&] { parse_config(doc); });
    EXPECT_EQ(e.key(), "volvol");
    EXPECT_NE(std::string(e.what()).find("model.volvol"), std::string::npos);
    const auto top = validation_error([] { parse_config(R"({"command": "localvol", "volvol": 1})"); });
    EXPECT_EQ(top.key(), "volvol");
}

TEST(Config, RangeViolationNamesKey) {
    const std::string doc = R"({"command": "localvol", "model": {"kind": "bessel_corr", "delta": 2, "rho": 1.5},
                               "grid": {"t_nodes": [1], "x_nodes": [1]}})";
    EXPECT_EQ(validation_error([&] { parse_config(doc); }).key(), "rho");
}

TEST(Config, ParseErrorReportsLineAndPosition) {
    const std::string doc = "{\"command\": \"localvol\",\n  \"model\": {\"kind\" \"x\"}}";
    try {
        parse_config(doc);
        FAIL();
    } catch (const ConfigParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.column(), 22u);
        EXPECT_NE(std::string(e.what()).find("line 2, position 22"), std::string::npos);
    }
    EXPECT_THROW(parse_config("{\"command\": \"localvol\",}"), ConfigParseError);
    EXPECT_THROW(parse_config(""), ConfigParseError);
}

TEST(Config, StrictnessCases) {
    auto key = [](const std::string& doc) { return validation_error([&] { parse_config(doc); }).key(); };
    EXPECT_EQ(key(R"({"command": "localvol", "command": "density"})"), "command");
    EXPECT_EQ(key(R"({"command": "smile"})"), "command");
    EXPECT_EQ(key(R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2,
                      "cir": {"kappa": 1}}, "grid": {"t_nodes": [1], "x_nodes": [1]}})"),
              "cir");
    EXPECT_EQ(key(R"({"command": "localvol", "model": {"kind": "bessel_zero_corr"},
                      "grid": {"t_nodes": [1], "x_nodes": [1]}})"),
              "delta");
    EXPECT_EQ(key(R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2},
                      "grid": {"t_nodes": [1], "x_nodes": [1]}, "mc": {"paths": 1.5}})"),
              "paths");
    EXPECT_EQ(key(R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2},
                      "grid": {"t_nodes": [1], "x_nodes": [1]}, "mc": {"scheme": "milstein"}})"),
              "scheme");
    EXPECT_EQ(key(R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2},
                      "grid": {"t_nodes": [1, 0.5], "x_nodes": [1]}})"),
              "t_nodes");
    EXPECT_EQ(key(R"({"command": "localvol", "model": {"kind": "bessel_zero_corr", "delta": 2},
                      "grid": {"t_nodes": [1], "x_nodes": [1]}, "pde": {}})"),
              "pde");
    EXPECT_EQ(key(R"({"command": "pde-price", "model": {"kind": "local_vol", "surface": "/nonexistent/s.csv"},
                      "grid": {"t_nodes": [1], "x_nodes": [1]}})"),
              "surface");
    EXPECT_EQ(key(R"({"command": "hybrid", "model": {"kind": "hybrid", "rates": {"kind": "vasicek", "curve": 0.1}},
                      "grid": {"t_nodes": [0.5, 1, 1.5], "x_nodes": [0.9, 1, 1.1]}})"),
              "curve");
    EXPECT_EQ(key(R"({"command": "density", "model": {"kind": "heston", "cir": {}}, "grid": {"t_nodes": [1], "x_nodes": [1]}})"),
              "kind");
}

TEST(Config, RelativeInputPathsFollowTheConfig) {
    const fs::path dir = scratch("relative");
    flat_surface(dir / "flat.csv", 0.04);
    const std::string doc = R"({"command": "pde-price", "model": {"kind": "local_vol", "surface": "flat.csv"},
                               "grid": {"t_nodes": [1], "x_nodes": [1]}})";
    write(dir / "cfg.json", doc);
    const RunConfig c = parse_config_file(dir / "cfg.json");
    EXPECT_EQ(c.model->surface->sigma2.front(), 0.04);
}

TEST(Run, OutputsAreByteIdenticalAcrossRunsAndWorkerCounts) {
    const fs::path a = scratch("ident_a");
    const fs::path b = scratch("ident_b");
    const std::string doc = R"({"command": "simulate",
        "model": {"kind": "heston", "rho": -0.5, "cir": {"kappa": 1.5, "theta": 0.04, "eta": 0.3, "v0": 0.04}},
        "grid": {"t_nodes": [0.5, 1]}, "mc": {"paths": 3000, "seed": 42}})";
    std::ostringstream err;
    ASSERT_EQ(run(parse_config(doc), {a, std::nullopt, 1}, err), 0) << err.str();
    ASSERT_EQ(run(parse_config(doc), {b, std::nullopt, 3}, err), 0) << err.str();
    std::size_t n = 0;
    for (const auto& f : fs::directory_iterator(a)) {
        if (f.path().filename() != "manifest.json") {
            EXPECT_EQ(slurp(f.path()), slurp(b / f.path().filename())) << f.path();
            ++n;
        }
    }
    EXPECT_EQ(n, 3u);
    const auto m = json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(m["seed"], 42);
    EXPECT_EQ(m["config"]["mc"]["paths"], 3000);
    EXPECT_EQ(m["exit_code"], 0);
    EXPECT_EQ(m["outputs"].size(), 3u);
    EXPECT_TRUE(m["durations_ms"].contains("compute"));
    EXPECT_EQ(m["version"], version);
}

TEST(Run, SeedOverrideIsRecorded) {
    const fs::path a = scratch("seed_a");
    const fs::path b = scratch("seed_b");
    const std::string doc = R"({"command": "simulate", "model": {"kind": "bessel_zero_corr", "delta": 2},
        "grid": {"t_nodes": [1]}, "mc": {"paths": 2000}, "simulate": {"write_paths": false}})";
    std::ostringstream err;
    ASSERT_EQ(run(parse_config(doc), {a, 99, 1}, err), 0);
    ASSERT_EQ(run(parse_config(doc), {b, 100, 1}, err), 0);
    EXPECT_NE(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
    const auto m = json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(m["seed"], 99);
    EXPECT_EQ(m["config"]["mc"]["seed"], 99);
}

TEST(Run, MimicCheckExitCodes) {
    const fs::path dir = scratch("mimic");
    flat_surface(dir / "flat.csv", 0.04);
    const std::string base = R"({"command": "mimic-check",
        "model": {"kind": "local_vol", "surface": "flat.csv"}, "grid": {"t_nodes": [1], "x_nodes": [1]},
        "mc": {"paths": 20000, "steps": 50, "seed": 5},
        "check": {"times": [0.5, 1], "strikes": [0.9, 1, 1.1], "surface": "flat.csv" SCALE}})";
    auto doc = [&](const std::string& scale) {
        std::string s = base;
        s.replace(s.find("SCALE"), 5, scale);
        return s;
    };
    std::ostringstream err;
    EXPECT_EQ(run(parse_config(doc(""), dir), {dir / "pass", std::nullopt, 1}, err), 0) << err.str();
    EXPECT_EQ(run(parse_config(doc(", \"scale\": 1.5"), dir), {dir / "fail", std::nullopt, 1}, err), 2);
    EXPECT_NE(err.str().find("numerical check failed"), std::string::npos);
    const auto m = json::parse(slurp(dir / "fail" / "manifest.json"));
    EXPECT_EQ(m["status"], "check_failed");
    EXPECT_GT(m["summary"]["failures"].get<int>(), 0);
    EXPECT_TRUE(fs::exists(dir / "fail" / "mimic.csv"));
}

TEST(Run, DegenerateSurfaceFailsWithoutWritingFiles) {
    const fs::path dir = scratch("degenerate");
    std::string csv = "maturity,strike,price\n";
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 10; ++j) {
            const double t = 0.5 + 0.1 * i;
            const double k = 0.8 + 0.04 * j;
            csv += std::to_string(t) + "," + std::to_string(k) + "," +
                   std::to_string(0.25 + 0.05 * t - (k - 0.8) * (k - 0.8)) + "\n";
        }
    }
    write(dir / "prices.csv", csv);
    std::ostringstream err;
    const int code = run(parse_config(R"({"command": "dupire-extract", "io": {"prices": "prices.csv"}})", dir),
                         {dir / "out", std::nullopt, 1}, err);
    EXPECT_EQ(code, 1);
    const std::string msg = err.str();
    EXPECT_NE(msg.find("degenerate density"), std::string::npos);
    EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Run, AtomicWriteLeavesNoTempFiles) {
    const fs::path dir = scratch("atomic");
    cli::detail::write_atomic(dir / "a.csv", "x\n1\n");
    EXPECT_EQ(slurp(dir / "a.csv"), "x\n1\n");
    EXPECT_THROW(cli::detail::write_atomic(dir / "missing" / "b.csv", "x"), Error);
    std::size_t n = 0;
    for (const auto& f : fs::recursive_directory_iterator(dir)) {
        (void)f;
        ++n;
    }
    EXPECT_EQ(n, 1u);
}

TEST(Run, PdeThenExtractRecoversFlatVariance) {
    const fs::path dir = scratch("roundtrip");
    flat_surface(dir / "flat.csv", 0.04);
    json pde{{"command", "pde-price"},
             {"model", {{"kind", "local_vol"}, {"surface", "flat.csv"}, {"drift", 0.03}}},
             {"grid", {{"t_nodes", json::array()}, {"x_nodes", json::array()}}}};
    for (int i = 0; i <= 20; ++i) {
        pde["grid"]["t_nodes"].push_back(0.4 + 0.05 * i);
    }
    for (int j = 0; j <= 40; ++j) {
        pde["grid"]["x_nodes"].push_back(0.8 + 0.01 * j);
    }
    std::ostringstream err;
    ASSERT_EQ(run(parse_config(pde.dump(), dir), {dir / "p", std::nullopt, 1}, err), 0) << err.str();
    const std::string dx = R"({"command": "dupire-extract", "io": {"prices": "p/prices.csv", "discount": "p/discount.csv"}})";
    ASSERT_EQ(run(parse_config(dx, dir), {dir / "x", std::nullopt, 1}, err), 0) << err.str();
    std::ifstream in(dir / "x" / "extracted.csv");
    const auto s = read_surface_csv(in);
    for (double v : s.sigma2) {
        EXPECT_NEAR(v, 0.04, 2e-3);
    }
}

TEST(Run, JsonReportFormat) {
    const fs::path dir = scratch("json");
    const std::string doc = R"({"command": "density", "model": {"kind": "bessel_zero_corr", "delta": 2},
        "grid": {"t_nodes": [1], "x_nodes": [0.5, 1]}, "report_format": "json"})";
    std::ostringstream err;
    ASSERT_EQ(run(parse_config(doc), {dir, std::nullopt, 1}, err), 0);
    const auto j = json::parse(slurp(dir / "density.json"));
    EXPECT_EQ(j["columns"][2], "density");
    EXPECT_EQ(j["rows"].size(), 2u);
    EXPECT_TRUE(j["rows"][0][2].is_number());
}

TEST(Run, LaplaceCheckPasses) {
    const fs::path dir = scratch("laplace");
    const std::string doc = R"({"command": "laplace", "model": {"kind": "bessel_corr", "delta": 3, "start": 1},
        "grid": {"t_nodes": [0.5, 1]}, "mc": {"paths": 20000, "seed": 4}})";
    std::ostringstream err;
    EXPECT_EQ(run(parse_config(doc), {dir, std::nullopt, 1}, err), 0) << err.str();
}

#ifdef MIMICVOL_BIN
namespace {

int shell(const std::string& args, const fs::path& err_file) {
    const std::string cmd = std::string(MIMICVOL_BIN) + " " + args + " 2>" + err_file.string() + " >/dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Binary, ExitCodesAndSingleLineDiagnostics) {
    const fs::path dir = scratch("binary");
    const fs::path err = dir / "err.txt";
    write(dir / "ok.json", minimal);
    EXPECT_EQ(shell("localvol --config " + (dir / "ok.json").string() + " --out " + (dir / "o").string(), err), 0);
    EXPECT_TRUE(fs::exists(dir / "o" / "localvol.csv"));
    EXPECT_TRUE(fs::exists(dir / "o" / "manifest.json"));

    write(dir / "bad.json", R"({"command": "localvol", "volvol": 1})");
    EXPECT_EQ(shell("localvol --config " + (dir / "bad.json").string(), err), 1);
    const std::string msg = slurp(err);
    EXPECT_NE(msg.find("volvol"), std::string::npos);
    EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1);

    EXPECT_EQ(shell("density --config " + (dir / "ok.json").string(), err), 1);
    EXPECT_EQ(shell("localvol", err), 1);
    EXPECT_EQ(shell("localvol --config " + (dir / "none.json").string(), err), 1);
    EXPECT_EQ(shell("--help", err), 0);
    EXPECT_EQ(shell("localvol --config " + (dir / "ok.json").string() + " --threads 0", err), 1);
}
#endif
