#pragma once

// Command execution, atomic output and run manifests.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "mimicvol/cli/config.hpp"
#include "mimicvol/version.hpp"

namespace mimicvol::cli {

struct RunOptions {
    std::filesystem::path out_dir = "out";
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;  ///< 0: MIMICVOL_THREADS, then hardware concurrency
};

/// Everything a command produces, held in memory until it is written.
struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;  ///< name, content
    json summary = json::object();
    json tolerances = json::object();
    bool check_failed = false;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV text to {"columns": [...], "rows": [[...], ...]}, numbers kept numeric.
inline json csv_to_json(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            out.push_back(cell);
        }
        return out;
    };
    std::getline(is, line);
    json out{{"columns", split(line)}, {"rows", json::array()}};
    while (std::getline(is, line)) {
        json row = json::array();
        for (const auto& c : split(line)) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (!c.empty() && end == c.c_str() + c.size()) {
                row.push_back(v);
            } else {
                row.push_back(c);
            }
        }
        out["rows"].push_back(std::move(row));
    }
    return out;
}

inline void add_table(Outputs& out, const RunConfig& cfg, const std::string& stem, const std::string& csv) {
    if (cfg.report_format == ReportFormat::json) {
        out.files.emplace_back(stem + ".json", csv_to_json(csv).dump(1) + "\n");
    } else {
        out.files.emplace_back(stem + ".csv", csv);
    }
}

template <typename Writer>
std::string to_text(Writer&& w) {
    std::ostringstream os;
    w(os);
    return os.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& data) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
        o.write(data.data(), static_cast<std::streamsize>(data.size()));
        o.flush();
        if (!o) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("cannot write " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline CorrOptions corr_options(const RunConfig& cfg) {
    CorrOptions o;
    o.quad.panels = cfg.quad_panels;
    o.quad.threads = 1;  // nodes already run in parallel
    o.mc = cfg.mc;
    return o;
}

/// Local variance on the configured grid, analytic where a closed form
/// exists, kernel regression on simulated paths otherwise.
inline AnalyticSurface model_surface(const RunConfig& cfg) {
    const ModelSpec& m = *cfg.model;
    if (cfg.localvol_mode == LocalVolMode::mc) {
        AnalyticSurface out;
        out.surface.t_nodes = cfg.t_nodes;
        out.surface.x_nodes = cfg.x_nodes;
        const auto bundles = simulate_snapshots(m, cfg.t_nodes, cfg.mc);
        for (std::size_t i = 0; i < cfg.t_nodes.size(); ++i) {
            for (double x : cfg.x_nodes) {
                const auto e = kernel_conditional(bundles[i].terminal_log_stock, bundles[i].terminal_variance,
                                                  std::log(x), cfg.mc);
                LocalVolPoint p;
                p.t = cfg.t_nodes[i];
                p.x = x;
                p.sigma2 = e.value;
                p.method = LocalVolMethod::mc;
                p.err = e.std_error;
                p.n_effective = e.n_effective;
                out.points.push_back(p);
                out.surface.sigma2.push_back(e.value);
            }
        }
        out.surface.validate();
        return out;
    }
    const unsigned threads = resolve_threads(cfg.mc.threads);
    switch (m.kind) {
    case ModelKind::bessel_zero_corr: {
        if (m.bessel.start != 0.0) {
            throw UnsupportedBranchError("closed form needs start = 0; set localvol.method to \"mc\"");
        }
        const double delta = m.bessel.delta;
        const double s0 = m.s0;
        return build_surface(
            cfg.t_nodes, cfg.x_nodes,
            [&](double t, double x) {
                auto p = local_var_zero_corr(delta, t, std::log(x / s0));
                p.x = x;
                return p;
            },
            threads);
    }
    case ModelKind::bessel_corr: {
        if (m.bessel.start != 0.0) {
            throw UnsupportedBranchError("closed form needs start = 0; set localvol.method to \"mc\"");
        }
        const auto opt = corr_options(cfg);
        return build_surface(
            cfg.t_nodes, cfg.x_nodes,
            [&](double t, double x) {
                auto p = local_var_corr(m.bessel.delta, m.rho, t, std::log(x / m.s0), opt);
                p.x = x;
                return p;
            },
            threads);
    }
    case ModelKind::transformed:
    case ModelKind::heston: {
        const TransformSpec tr = m.kind == ModelKind::heston ? TransformSpec::heston(m.cir, m.s0) : *m.transform;
        TransformOptions opt;
        opt.corr = corr_options(cfg);
        opt.use_mc = tr.spec.start != 0.0;
        return build_surface(
            cfg.t_nodes, cfg.x_nodes, [&](double t, double x) { return local_var_transformed(tr, m.rho, t, x, opt); },
            threads);
    }
    default:
        throw ValidationError("kind", "no analytic local variance for this model kind");
    }
}

inline json series_tolerances() {
    const SeriesConfig sc;
    return {{"series_rel_tol", sc.rel_tol}, {"series_max_terms", sc.max_terms}};
}

inline void run_density(const RunConfig& cfg, Outputs& out) {
    const BesselSpec& b = cfg.model->bessel;
    if (b.start != 0.0) {
        throw UnsupportedBranchError("density of A_t is available for start = 0 only");
    }
    std::string csv = "t,x,density,terms,bound\n";
    for (double t : cfg.t_nodes) {
        for (double x : cfg.x_nodes) {
            // A_t has the law of t^2 A_1.
            const auto e = density_a1(b.delta, x / (t * t));
            csv += fmt(t) + "," + fmt(x) + "," + fmt(e.value / (t * t)) + "," + std::to_string(e.terms_used) + "," +
                   fmt(e.truncation_bound / (t * t)) + "\n";
        }
    }
    add_table(out, cfg, "density", csv);
    out.tolerances = series_tolerances();
}

inline void run_laplace(const RunConfig& cfg, Outputs& out) {
    const BesselSpec& b = cfg.model->bessel;
    std::string csv = "t,a,b,analytic,mc,mc_se,z,pass\n";
    std::size_t failures = 0;
    double max_z = 0.0;
    for (std::size_t i = 0; i < cfg.t_nodes.size(); ++i) {
        const double t = cfg.t_nodes[i];
        MCConfig mc = cfg.mc;
        mc.seed = mimicvol::detail::mix_seed(cfg.mc.seed + i);
        // simulate_besq steps on exactly the grid it is given.
        const double snap[] = {t};
        auto grid = mimicvol::detail::make_grid(snap, cfg.mc.steps).times;
        grid.erase(grid.begin());
        const auto paths = simulate_besq(b, grid, mc);
        std::vector<double> v(paths.size());
        for (double a : cfg.laplace_a) {
            for (double bb : cfg.laplace_b) {
                for (std::size_t p = 0; p < v.size(); ++p) {
                    v[p] = std::exp(-a * paths.terminal_variance[p] - 0.5 * bb * bb * paths.integrated_variance[p]);
                }
                const auto e = stats::estimate_mean(v);
                const double exact = laplace_joint(b, a, bb, t);
                const double z = e.std_error > 0.0 ? (e.mean - exact) / e.std_error : (e.mean == exact ? 0.0 : INFINITY);
                const bool pass = std::abs(z) <= cfg.check_threshold;
                failures += pass ? 0 : 1;
                max_z = std::max(max_z, std::abs(z));
                csv += fmt(t) + "," + fmt(a) + "," + fmt(bb) + "," + fmt(exact) + "," + fmt(e.mean) + "," +
                       fmt(e.std_error) + "," + fmt(z) + "," + (pass ? "1" : "0") + "\n";
            }
        }
    }
    add_table(out, cfg, "laplace", csv);
    out.summary = {{"cells", cfg.t_nodes.size() * cfg.laplace_a.size() * cfg.laplace_b.size()},
                   {"failures", failures},
                   {"max_abs_z", max_z}};
    out.tolerances = {{"threshold_se", cfg.check_threshold}};
    out.check_failed = failures > 0;
}

inline void run_localvol(const RunConfig& cfg, Outputs& out) {
    const auto s = model_surface(cfg);
    add_table(out, cfg, "localvol", to_text([&](std::ostream& os) { write_surface_csv(os, s); }));
    std::map<std::string, std::size_t> methods;
    for (const auto& p : s.points) {
        ++methods[to_string(p.method)];
    }
    out.summary = {{"nodes", s.points.size()}, {"methods", methods}};
    out.tolerances = series_tolerances();
    out.tolerances["quad_panels"] = cfg.quad_panels;
}

inline void run_simulate(const RunConfig& cfg, Outputs& out) {
    const auto bundles = simulate_snapshots(*cfg.model, cfg.t_nodes, cfg.mc);
    std::string csv = "t,mean_s,se_s,mean_disc_s,se_disc_s,mean_v,se_v,mean_int_v,clamped\n";
    std::vector<double> s(cfg.mc.paths);
    std::vector<double> d(cfg.mc.paths);
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const auto& b = bundles[i];
        for (std::size_t p = 0; p < b.size(); ++p) {
            s[p] = std::exp(b.terminal_log_stock[p]);
            d[p] = s[p] * std::exp(-b.integrated_rate[p]);
        }
        const auto es = stats::estimate_mean(s);
        const auto ed = stats::estimate_mean(d);
        const auto ev = stats::estimate_mean(b.terminal_variance);
        const auto ea = stats::estimate_mean(b.integrated_variance);
        csv += fmt(b.t) + "," + fmt(es.mean) + "," + fmt(es.std_error) + "," + fmt(ed.mean) + "," +
               fmt(ed.std_error) + "," + fmt(ev.mean) + "," + fmt(ev.std_error) + "," + fmt(ea.mean) + "," +
               std::to_string(b.clamped_lookups) + "\n";
        if (cfg.write_paths) {
            add_table(out, cfg, "paths_" + std::to_string(i), to_text([&](std::ostream& os) { write_paths_csv(os, b); }));
        }
    }
    add_table(out, cfg, "summary", csv);
    out.summary = {{"times", cfg.t_nodes.size()}, {"paths", cfg.mc.paths}};
}

inline void run_mimic_check(const RunConfig& cfg, Outputs& out) {
    LocalVolSurface surface;
    if (cfg.check_surface) {
        surface = *cfg.check_surface;
    } else {
        const auto s = model_surface(cfg);
        add_table(out, cfg, "surface", to_text([&](std::ostream& os) { write_surface_csv(os, s); }));
        surface = s.surface;
    }
    if (cfg.check_scale != 1.0) {
        surface = surface.scaled(cfg.check_scale);
    }
    const auto rep = mimic_check(*cfg.model, surface, cfg.check_times, cfg.check_strikes, cfg.mc, cfg.check_threshold);
    std::string csv = "t,strike,price_model,se_model,price_local,se_local,z,pass\n";
    for (const auto& c : rep.cells) {
        csv += fmt(c.t) + "," + fmt(c.strike) + "," + fmt(c.price_model) + "," + fmt(c.se_model) + "," +
               fmt(c.price_local) + "," + fmt(c.se_local) + "," + fmt(c.z) + "," + (c.pass ? "1" : "0") + "\n";
    }
    add_table(out, cfg, "mimic", csv);
    out.summary = {{"cells", rep.cells.size()},
                   {"failures", rep.failures},
                   {"max_abs_z", rep.max_abs_z},
                   {"clamped_lookups", rep.clamped_lookups}};
    out.tolerances = series_tolerances();
    out.tolerances["threshold_se"] = rep.threshold;
    out.check_failed = !rep.all_pass();
}

inline void extraction_summary(const ExtractResult& r, json& j, const std::string& prefix = "") {
    j[prefix + "floored"] = r.floored_count;
    j[prefix + "clipped"] = r.clipped_count;
}

inline void run_dupire_extract(const RunConfig& cfg, Outputs& out) {
    const auto r = extract_local_vol(*cfg.prices);
    add_table(out, cfg, "extracted", to_text([&](std::ostream& os) { write_extracted_csv(os, r); }));
    extraction_summary(r, out.summary);
    out.tolerances = {{"density_floor", 1e-10 / cfg.prices->spot}, {"max_floored_fraction", 0.1}};
}

inline void run_pde_price(const RunConfig& cfg, Outputs& out) {
    const ModelSpec& m = *cfg.model;
    const interp::Curve fwd = m.drift ? *m.drift : interp::Curve::constant(0.0);
    const auto r = price_forward_pde(*m.surface, m.s0, fwd, cfg.t_nodes, cfg.x_nodes, cfg.pde);
    add_table(out, cfg, "prices", to_text([&](std::ostream& os) { write_price_csv(os, r.prices); }));
    add_table(out, cfg, "discount", to_text([&](std::ostream& os) { write_discount_csv(os, r.prices); }));
    out.summary = {{"halvings", r.halvings}, {"time_steps", r.time_steps}};
    out.tolerances = {{"monotone_tol", 1e-9 * m.s0}, {"convexity_slope_tol", 1e-6}, {"max_halvings", cfg.pde.max_halvings}};
}

inline void run_hybrid(const RunConfig& cfg, Outputs& out) {
    const ModelSpec& m = *cfg.model;
    const auto p = hybrid_price_surface(m, cfg.t_nodes, cfg.x_nodes, cfg.mc);
    MCConfig cov_cfg = cfg.mc;
    cov_cfg.seed = mimicvol::detail::mix_seed(cfg.mc.seed);
    std::vector<HybridSlice> slices;
    {
        const auto snaps = simulate_snapshots(m, cfg.t_nodes, cov_cfg);
        for (const auto& b : snaps) {
            slices.push_back(hybrid_cov(b, cfg.x_nodes, m.rates));
            slices.back().validate();
        }
    }
    const auto ext = extended_dupire(p.surface, slices);
    const auto plain = extract_local_vol(p.surface);
    std::string se = "maturity,strike,std_error\n";
    for (std::size_t i = 0; i < cfg.t_nodes.size(); ++i) {
        for (std::size_t j = 0; j < cfg.x_nodes.size(); ++j) {
            se += fmt(cfg.t_nodes[i]) + "," + fmt(cfg.x_nodes[j]) + "," + fmt(p.std_error[i * cfg.x_nodes.size() + j]) +
                  "\n";
        }
    }
    add_table(out, cfg, "prices", to_text([&](std::ostream& os) { write_price_csv(os, p.surface); }));
    add_table(out, cfg, "price_errors", se);
    add_table(out, cfg, "discount", to_text([&](std::ostream& os) { write_discount_csv(os, p.surface); }));
    add_table(out, cfg, "slices", to_text([&](std::ostream& os) { write_slices_csv(os, slices); }));
    add_table(out, cfg, "extracted", to_text([&](std::ostream& os) { write_extracted_csv(os, ext); }));
    add_table(out, cfg, "extracted_no_cov", to_text([&](std::ostream& os) { write_extracted_csv(os, plain); }));
    out.summary = {{"conditional_pricing", p.conditional}, {"cov_seed", cov_cfg.seed}};
    extraction_summary(ext, out.summary);
    extraction_summary(plain, out.summary, "no_cov_");
    out.tolerances = {{"density_floor", 1e-10 / m.s0}, {"cov_bound_slack_se", 3.0}};
}

} // namespace detail

/// Runs the command and returns its outputs without touching the disk.
inline Outputs execute(RunConfig cfg) {
    Outputs out;
    switch (cfg.command) {
    case Command::density: detail::run_density(cfg, out); break;
    case Command::laplace: detail::run_laplace(cfg, out); break;
    case Command::localvol: detail::run_localvol(cfg, out); break;
    case Command::simulate: detail::run_simulate(cfg, out); break;
    case Command::mimic_check: detail::run_mimic_check(cfg, out); break;
    case Command::dupire_extract: detail::run_dupire_extract(cfg, out); break;
    case Command::pde_price: detail::run_pde_price(cfg, out); break;
    case Command::hybrid: detail::run_hybrid(cfg, out); break;
    }
    return out;
}

/// Single-line diagnostic for an exception.
inline std::string diagnostic(const std::exception& e) {
    std::string msg;
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
        msg = "invalid config key \"" + v->key() + "\": " + v->what();
    } else {
        msg = e.what();
    }
    for (char& c : msg) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return "mimicvol: " + msg;
}

/// Executes, writes outputs and the manifest. Returns 0, 2 when a numerical
/// check failed, 1 on any error (diagnostic written to err).
inline int run(RunConfig cfg, const RunOptions& opt, std::ostream& err) {
    using clock = std::chrono::steady_clock;
    try {
        const auto t0 = clock::now();
        if (opt.seed) {
            cfg.mc.seed = *opt.seed;
            cfg.resolved["mc"]["seed"] = *opt.seed;
        }
        cfg.mc.threads = resolve_threads(opt.threads);
        const Outputs out = execute(cfg);
        const auto t1 = clock::now();

        std::filesystem::create_directories(opt.out_dir);
        json files = json::array();
        for (const auto& [name, data] : out.files) {
            detail::write_atomic(opt.out_dir / name, data);
            char hash[17];
            std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(detail::fnv1a(data)));
            files.push_back({{"file", name}, {"bytes", data.size()}, {"fnv1a64", hash}});
        }
        const int code = out.check_failed ? 2 : 0;
        const auto t2 = clock::now();
        auto ms = [](auto d) { return std::chrono::duration<double, std::milli>(d).count(); };
        json manifest{{"tool", "mimicvol"},
                      {"version", version},
                      {"command", to_string(cfg.command)},
                      {"seed", cfg.mc.seed},
                      {"threads", cfg.mc.threads},
                      {"config", cfg.resolved},
                      {"tolerances", out.tolerances},
                      {"summary", out.summary},
                      {"outputs", files},
                      {"status", code == 0 ? "ok" : "check_failed"},
                      {"exit_code", code},
                      {"durations_ms", {{"compute", ms(t1 - t0)}, {"write", ms(t2 - t1)}}}};
        detail::write_atomic(opt.out_dir / "manifest.json", manifest.dump(2) + "\n");
        if (code == 2) {
            err << "mimicvol: numerical check failed: " << out.summary.dump() << "\n";
        }
        return code;
    } catch (const std::exception& e) {
        err << diagnostic(e) << "\n";
        return 1;
    }
}

} // namespace mimicvol::cli
