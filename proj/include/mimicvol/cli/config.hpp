#pragma once

// Strict JSON run configuration for the mimicvol command line.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimicvol/dupire.hpp"
#include "mimicvol/hybrid_rates.hpp"
#include "mimicvol/localvol_analytic.hpp"
#include "mimicvol/montecarlo.hpp"

namespace mimicvol::cli {

using json = nlohmann::json;

/// Malformed JSON; carries the 1-based line and column of the offending character.
class ConfigParseError : public Error {
public:
    ConfigParseError(std::size_t line, std::size_t column, const std::string& detail)
        : Error("config parse error at line " + std::to_string(line) + ", position " + std::to_string(column) +
                ": " + detail),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

enum class Command { density, laplace, localvol, simulate, mimic_check, dupire_extract, pde_price, hybrid };
enum class ReportFormat { csv, json };
enum class LocalVolMode { analytic, mc };

inline const std::vector<std::pair<std::string, Command>>& command_names() {
    static const std::vector<std::pair<std::string, Command>> names{
        {"density", Command::density},       {"laplace", Command::laplace},
        {"localvol", Command::localvol},     {"simulate", Command::simulate},
        {"mimic-check", Command::mimic_check}, {"dupire-extract", Command::dupire_extract},
        {"pde-price", Command::pde_price},   {"hybrid", Command::hybrid}};
    return names;
}

inline std::string to_string(Command c) {
    for (const auto& [n, v] : command_names()) {
        if (v == c) {
            return n;
        }
    }
    return "?";
}

struct RunConfig {
    Command command = Command::localvol;
    std::optional<ModelSpec> model;
    std::string model_kind;       // as written, for the manifest
    std::string transform_kind;   // identity | heston
    std::string surface_path;     // model.surface, resolved
    MCConfig mc;
    std::vector<double> t_nodes;
    std::vector<double> x_nodes;
    ReportFormat report_format = ReportFormat::csv;

    // command-specific
    LocalVolMode localvol_mode = LocalVolMode::analytic;
    std::size_t quad_panels = 8;
    std::vector<double> laplace_a{0.0, 0.5, 1.0};
    std::vector<double> laplace_b{0.0, 0.5, 1.0};
    std::vector<double> check_times;
    std::vector<double> check_strikes;
    double check_threshold = 3.0;
    double check_scale = 1.0;
    bool write_paths = true;
    double spot = 1.0;
    std::string prices_path;
    std::string discount_path;
    std::string check_surface_path;
    std::optional<PriceSurface> prices;
    std::optional<LocalVolSurface> check_surface;
    PdeConfig pde;

    /// The configuration with defaults filled in.
    json resolved;
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

/// Object reader that rejects keys outside an allowed set.
class Obj {
public:
    Obj(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) {
            const std::string leaf = path_.substr(path_.rfind('.') + 1);
            throw ValidationError(leaf, "\"" + path_ + "\" must be an object");
        }
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [k, v] : j.items()) {
            if (!ok.count(k)) {
                throw ValidationError(k, "unknown key \"" + join(path_, k) + "\"");
            }
        }
    }

    bool has(const std::string& k) const { return j_.contains(k); }
    const json& raw(const std::string& k) const { return j_.at(k); }
    std::string where(const std::string& k) const { return join(path_, k); }

    [[noreturn]] void fail(const std::string& k, const std::string& what) const {
        throw ValidationError(k, "\"" + where(k) + "\" " + what);
    }

    void require(const std::string& k) const {
        if (!has(k)) {
            throw ValidationError(k, "missing required key \"" + where(k) + "\"");
        }
    }

    double number(const std::string& k, double def) const { return has(k) ? number(k) : def; }
    double number(const std::string& k) const {
        require(k);
        const json& v = j_.at(k);
        if (!v.is_number()) {
            fail(k, "must be a number");
        }
        return v.get<double>();
    }

    std::uint64_t integer(const std::string& k, std::uint64_t def) const {
        if (!has(k)) {
            return def;
        }
        const json& v = j_.at(k);
        if (v.is_number_unsigned()) {
            return v.get<std::uint64_t>();
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0.0 && d < 1.8e19 && d == std::floor(d)) {
                return static_cast<std::uint64_t>(d);
            }
        }
        fail(k, "must be a nonnegative integer");
    }

    bool boolean(const std::string& k, bool def) const {
        if (!has(k)) {
            return def;
        }
        if (!j_.at(k).is_boolean()) {
            fail(k, "must be true or false");
        }
        return j_.at(k).get<bool>();
    }

    std::string string(const std::string& k, const std::string& def) const { return has(k) ? string(k) : def; }
    std::string string(const std::string& k) const {
        require(k);
        if (!j_.at(k).is_string()) {
            fail(k, "must be a string");
        }
        return j_.at(k).get<std::string>();
    }

    std::string choice(const std::string& k, const std::string& def, std::initializer_list<const char*> options) const {
        const std::string v = string(k, def);
        std::string all;
        for (const char* o : options) {
            if (v == o) {
                return v;
            }
            all += (all.empty() ? "" : ", ") + std::string(o);
        }
        fail(k, "must be one of: " + all);
    }

    std::vector<double> numbers(const std::string& k) const {
        require(k);
        const json& v = j_.at(k);
        if (!v.is_array()) {
            fail(k, "must be an array of numbers");
        }
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) {
                fail(k, "must be an array of numbers");
            }
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<double> increasing(const std::string& k) const {
        auto v = numbers(k);
        if (v.empty()) {
            fail(k, "must be non-empty");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0) || (i > 0 && !(v[i] > v[i - 1]))) {
                fail(k, "must be positive and strictly increasing");
            }
        }
        return v;
    }

    Obj object(const std::string& k, std::initializer_list<const char*> allowed) const {
        require(k);
        return Obj(j_.at(k), where(k), allowed);
    }

private:
    const json& j_;
    std::string path_;
};

inline json parse_json(const std::string& text) {
    // Track keys per open object so duplicates are rejected rather than overwritten.
    std::vector<std::set<std::string>> keys;
    json::parser_callback_t cb = [&](int, json::parse_event_t ev, json& parsed) {
        if (ev == json::parse_event_t::object_start) {
            keys.emplace_back();
        } else if (ev == json::parse_event_t::object_end) {
            keys.pop_back();
        } else if (ev == json::parse_event_t::key) {
            const std::string k = parsed.get<std::string>();
            if (!keys.back().insert(k).second) {
                throw ValidationError(k, "duplicate key \"" + k + "\"");
            }
        }
        return true;
    };
    try {
        return json::parse(text, cb, true, false);
    } catch (const json::parse_error& e) {
        // e.byte is the 1-based offset of the last character read.
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string msg = e.what();
        const auto p = msg.find(": ", msg.find("parse error"));
        if (p != std::string::npos) {
            msg = msg.substr(p + 2);
        }
        throw ConfigParseError(line, col, msg);
    }
}

inline interp::Curve read_curve(const Obj& o, const std::string& k) {
    const json& v = o.raw(k);
    if (v.is_number()) {
        return interp::Curve::constant(v.get<double>());
    }
    Obj c(v, o.where(k), {"times", "values"});
    interp::Curve out{c.numbers("times"), c.numbers("values")};
    out.validate(k);
    return out;
}

inline json curve_json(const interp::Curve& c) { return json{{"times", c.times}, {"values", c.values}}; }

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path q(p);
    return (q.is_relative() && !base.empty() ? base / q : q).lexically_normal().string();
}

inline std::ifstream open_input(const std::string& path, const std::string& key) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError(key, "cannot open \"" + key + "\" file " + path);
    }
    return in;
}

inline LocalVolSurface load_surface(const std::string& path, const std::string& key) {
    auto in = open_input(path, key);
    auto s = read_surface_csv(in);
    s.validate();
    return s;
}

inline ModelSpec read_model(const json& j, RunConfig& cfg, const std::filesystem::path& base) {
    Obj all(j, "model", {"kind", "delta", "start", "rho", "s0", "cir", "transform", "drift", "rates", "variance",
                         "sigma", "surface"});
    const std::string kind = all.choice("kind", "", {"bessel_zero_corr", "bessel_corr", "transformed", "heston",
                                                     "local_vol", "hybrid"});
    std::set<std::string> used{"kind", "s0", "drift", "rho"};
    ModelSpec m;
    m.s0 = all.number("s0", 1.0);
    m.rho = all.number("rho", 0.0);
    json r{{"kind", kind}, {"s0", m.s0}, {"rho", m.rho}};
    if (all.has("drift")) {
        m.drift = read_curve(all, "drift");
        r["drift"] = curve_json(*m.drift);
    }
    auto read_cir = [&] {
        Obj c = all.object("cir", {"kappa", "theta", "eta", "v0"});
        m.cir.kappa = c.number("kappa", m.cir.kappa);
        m.cir.theta = c.number("theta", m.cir.theta);
        m.cir.eta = c.number("eta", m.cir.eta);
        m.cir.v0 = c.number("v0", m.cir.v0);
        r["cir"] = {{"kappa", m.cir.kappa}, {"theta", m.cir.theta}, {"eta", m.cir.eta}, {"v0", m.cir.v0}};
        used.insert("cir");
    };
    auto read_bessel = [&] {
        m.bessel.delta = all.number("delta");
        m.bessel.start = all.number("start", 0.0);
        r["delta"] = m.bessel.delta;
        r["start"] = m.bessel.start;
        used.insert({"delta", "start"});
    };
    auto read_surface = [&] {
        cfg.surface_path = resolve(base, all.string("surface"));
        m.surface = load_surface(cfg.surface_path, "surface");
        r["surface"] = cfg.surface_path;
        used.insert("surface");
    };
    if (kind == "bessel_zero_corr" || kind == "bessel_corr") {
        m.kind = kind == "bessel_zero_corr" ? ModelKind::bessel_zero_corr : ModelKind::bessel_corr;
        read_bessel();
    } else if (kind == "transformed") {
        m.kind = ModelKind::transformed;
        cfg.transform_kind = all.choice("transform", "identity", {"identity", "heston"});
        r["transform"] = cfg.transform_kind;
        used.insert("transform");
        if (cfg.transform_kind == "heston") {
            read_cir();
            m.cir.validate();
            m.transform = TransformSpec::heston(m.cir, m.s0);
        } else {
            read_bessel();
            m.bessel.validate();
            m.transform = TransformSpec::identity(m.bessel, m.s0);
        }
    } else if (kind == "heston") {
        m.kind = ModelKind::heston;
        read_cir();
    } else if (kind == "local_vol") {
        m.kind = ModelKind::local_vol;
        read_surface();
    } else {
        m.kind = ModelKind::hybrid;
        const std::string var = all.choice("variance", "flat", {"flat", "heston", "local_vol"});
        r["variance"] = var;
        used.insert("variance");
        if (var == "flat") {
            m.hybrid_variance = HybridVariance::flat;
            m.sigma = all.number("sigma", m.sigma);
            r["sigma"] = m.sigma;
            used.insert("sigma");
        } else if (var == "heston") {
            m.hybrid_variance = HybridVariance::heston;
            read_cir();
        } else {
            m.hybrid_variance = HybridVariance::local_vol;
            read_surface();
        }
        Obj rs = all.object("rates", {"kind", "curve", "a", "sigma_r", "r0", "theta", "rho_rs"});
        used.insert("rates");
        RatesSpec rates;
        const std::string rk = rs.choice("kind", "vasicek", {"deterministic", "vasicek"});
        rates.rho_rs = rs.number("rho_rs", 0.0);
        json rj{{"kind", rk}, {"rho_rs", rates.rho_rs}};
        if (rk == "deterministic") {
            for (const char* k : {"a", "sigma_r", "r0", "theta"}) {
                if (rs.has(k)) {
                    rs.fail(k, "is not used by deterministic rates");
                }
            }
            rates.kind = RatesKind::deterministic;
            rates.curve = rs.has("curve") ? read_curve(rs, "curve") : interp::Curve::constant(0.0);
            rj["curve"] = curve_json(rates.curve);
        } else {
            if (rs.has("curve")) {
                rs.fail("curve", "is not used by vasicek rates");
            }
            rates.kind = RatesKind::vasicek;
            rates.a = rs.number("a", rates.a);
            rates.sigma_r = rs.number("sigma_r", rates.sigma_r);
            rates.r0 = rs.number("r0", rates.r0);
            rates.theta = rs.number("theta", rates.r0);
            rj.update({{"a", rates.a}, {"sigma_r", rates.sigma_r}, {"r0", rates.r0}, {"theta", rates.theta}});
        }
        m.rates = rates;
        r["rates"] = rj;
    }
    for (const auto& [k, v] : j.items()) {
        if (!used.count(k)) {
            all.fail(k, "is not used by model kind \"" + kind + "\"");
        }
    }
    m.validate();
    cfg.model_kind = kind;
    cfg.resolved["model"] = r;
    return m;
}

inline void read_mc(const json& j, RunConfig& cfg) {
    Obj o(j, "mc", {"paths", "steps", "seed", "scheme", "bandwidth_rule", "bandwidth", "estimator"});
    MCConfig& mc = cfg.mc;
    mc.paths = o.integer("paths", mc.paths);
    mc.steps = o.integer("steps", mc.steps);
    mc.seed = o.integer("seed", mc.seed);
    mc.scheme = o.choice("scheme", "exact_besq", {"exact_besq", "euler"}) == "euler" ? Scheme::euler
                                                                                   : Scheme::exact_besq;
    const std::string bw = o.choice("bandwidth_rule", "silverman", {"silverman", "fixed"});
    mc.bandwidth_rule = bw == "fixed" ? BandwidthRule::fixed : BandwidthRule::silverman;
    mc.bandwidth = o.number("bandwidth", 0.0);
    if (bw == "silverman" && o.has("bandwidth")) {
        o.fail("bandwidth", "requires bandwidth_rule \"fixed\"");
    }
    const std::string est = o.choice("estimator", "local_linear", {"local_linear", "nadaraya_watson"});
    mc.estimator = est == "nadaraya_watson" ? Estimator::nadaraya_watson : Estimator::local_linear;
    mc.validate();
}

inline json mc_json(const MCConfig& mc) {
    json r{{"paths", mc.paths},
           {"steps", mc.steps},
           {"seed", mc.seed},
           {"scheme", mc.scheme == Scheme::euler ? "euler" : "exact_besq"},
           {"bandwidth_rule", mc.bandwidth_rule == BandwidthRule::fixed ? "fixed" : "silverman"},
           {"estimator", mc.estimator == Estimator::nadaraya_watson ? "nadaraya_watson" : "local_linear"}};
    if (mc.bandwidth_rule == BandwidthRule::fixed) {
        r["bandwidth"] = mc.bandwidth;
    }
    return r;
}

} // namespace detail

/// Parses and validates a configuration document. Relative file paths are
/// taken relative to base_dir; referenced files are read here, before any
/// computation.
inline RunConfig parse_config(const std::string& source, const std::filesystem::path& base_dir = {}) {
    using detail::Obj;
    const json doc = detail::parse_json(source);
    Obj top(doc, "", {"command", "model", "mc", "grid", "io", "report_format", "localvol", "laplace", "check",
                      "simulate", "pde", "spot"});
    RunConfig cfg;
    const std::string cmd = top.string("command");
    bool found = false;
    for (const auto& [n, c] : command_names()) {
        if (n == cmd) {
            cfg.command = c;
            found = true;
        }
    }
    if (!found) {
        top.fail("command", "must be one of: density, laplace, localvol, simulate, mimic-check, dupire-extract, "
                            "pde-price, hybrid");
    }
    cfg.resolved["command"] = cmd;
    const Command c = cfg.command;

    // Which optional sections each command accepts.
    auto only_for = [&](const char* key, std::initializer_list<Command> cmds) {
        if (!top.has(key)) {
            return false;
        }
        for (Command x : cmds) {
            if (x == c) {
                return true;
            }
        }
        top.fail(key, "is not used by command \"" + cmd + "\"");
    };

    const bool needs_model = c != Command::dupire_extract;
    if (needs_model) {
        top.require("model");
        cfg.model = detail::read_model(doc.at("model"), cfg, base_dir);
    } else if (top.has("model")) {
        top.fail("model", "is not used by command \"dupire-extract\"");
    }
    if (top.has("mc")) {
        detail::read_mc(doc.at("mc"), cfg);
    }
    cfg.resolved["mc"] = detail::mc_json(cfg.mc);

    const bool needs_grid = c != Command::dupire_extract;
    if (needs_grid) {
        Obj g = top.object("grid", {"t_nodes", "x_nodes"});
        cfg.t_nodes = g.increasing("t_nodes");
        if (c != Command::laplace && c != Command::simulate) {
            cfg.x_nodes = g.increasing("x_nodes");
        } else if (g.has("x_nodes")) {
            g.fail("x_nodes", "is not used by command \"" + cmd + "\"");
        }
        cfg.resolved["grid"] = {{"t_nodes", cfg.t_nodes}};
        if (!cfg.x_nodes.empty()) {
            cfg.resolved["grid"]["x_nodes"] = cfg.x_nodes;
        }
    } else if (top.has("grid")) {
        top.fail("grid", "is not used by command \"dupire-extract\"");
    }

    cfg.report_format = top.choice("report_format", "csv", {"csv", "json"}) == "json" ? ReportFormat::json
                                                                                      : ReportFormat::csv;
    cfg.resolved["report_format"] = cfg.report_format == ReportFormat::json ? "json" : "csv";

    const ModelKind kind = cfg.model ? cfg.model->kind : ModelKind::local_vol;
    auto require_kind = [&](std::initializer_list<ModelKind> ok, const char* what) {
        for (ModelKind k : ok) {
            if (k == kind) {
                return;
            }
        }
        throw ValidationError("kind", "command \"" + cmd + "\" needs " + what);
    };
    if (only_for("localvol", {Command::localvol, Command::mimic_check})) {
        Obj o = top.object("localvol", {"method", "panels"});
        cfg.localvol_mode = o.choice("method", "analytic", {"analytic", "mc"}) == "mc" ? LocalVolMode::mc
                                                                                     : LocalVolMode::analytic;
        cfg.quad_panels = o.integer("panels", cfg.quad_panels);
        if (cfg.quad_panels < 1) {
            o.fail("panels", "must be positive");
        }
    }
    if (c == Command::localvol || c == Command::mimic_check) {
        cfg.resolved["localvol"] = {{"method", cfg.localvol_mode == LocalVolMode::mc ? "mc" : "analytic"},
                                    {"panels", cfg.quad_panels}};
    }

    if (only_for("laplace", {Command::laplace})) {
        Obj o = top.object("laplace", {"a", "b", "threshold"});
        if (o.has("a")) {
            cfg.laplace_a = o.numbers("a");
        }
        if (o.has("b")) {
            cfg.laplace_b = o.numbers("b");
        }
        cfg.check_threshold = o.number("threshold", cfg.check_threshold);
        for (double v : cfg.laplace_a) {
            if (!(v >= 0.0)) {
                o.fail("a", "entries must be nonnegative");
            }
        }
        for (double v : cfg.laplace_b) {
            if (!(v >= 0.0)) {
                o.fail("b", "entries must be nonnegative");
            }
        }
    }

    if (only_for("check", {Command::mimic_check})) {
        Obj o = top.object("check", {"times", "strikes", "threshold", "scale", "surface"});
        cfg.check_times = o.increasing("times");
        cfg.check_strikes = o.increasing("strikes");
        cfg.check_threshold = o.number("threshold", cfg.check_threshold);
        cfg.check_scale = o.number("scale", 1.0);
        if (!(cfg.check_scale > 0.0)) {
            o.fail("scale", "must be positive");
        }
        if (o.has("surface")) {
            cfg.check_surface_path = detail::resolve(base_dir, o.string("surface"));
            cfg.check_surface = detail::load_surface(cfg.check_surface_path, "surface");
        }
    } else if (c == Command::mimic_check) {
        top.require("check");
    }
    if (!(cfg.check_threshold > 0.0)) {
        throw ValidationError("threshold", "\"threshold\" must be positive");
    }
    if (c == Command::laplace || c == Command::mimic_check) {
        json chk{{"threshold", cfg.check_threshold}};
        if (c == Command::laplace) {
            cfg.resolved["laplace"] = {{"a", cfg.laplace_a}, {"b", cfg.laplace_b}, {"threshold", cfg.check_threshold}};
        } else {
            chk.update({{"times", cfg.check_times}, {"strikes", cfg.check_strikes}, {"scale", cfg.check_scale}});
            if (cfg.check_surface) {
                chk["surface"] = cfg.check_surface_path;
            }
            cfg.resolved["check"] = chk;
        }
    }

    if (only_for("simulate", {Command::simulate})) {
        Obj o = top.object("simulate", {"write_paths"});
        cfg.write_paths = o.boolean("write_paths", true);
    }
    if (c == Command::simulate) {
        cfg.resolved["simulate"] = {{"write_paths", cfg.write_paths}};
    }

    if (only_for("pde", {Command::pde_price})) {
        Obj o = top.object("pde", {"nodes", "steps_per_year", "rannacher_steps", "width_sd", "max_halvings"});
        cfg.pde.nodes = o.integer("nodes", cfg.pde.nodes);
        cfg.pde.steps_per_year = o.integer("steps_per_year", cfg.pde.steps_per_year);
        cfg.pde.rannacher_steps = o.integer("rannacher_steps", cfg.pde.rannacher_steps);
        cfg.pde.width_sd = o.number("width_sd", cfg.pde.width_sd);
        cfg.pde.max_halvings = o.integer("max_halvings", cfg.pde.max_halvings);
    }
    if (c == Command::pde_price) {
        cfg.resolved["pde"] = {{"nodes", cfg.pde.nodes},
                               {"steps_per_year", cfg.pde.steps_per_year},
                               {"rannacher_steps", cfg.pde.rannacher_steps},
                               {"width_sd", cfg.pde.width_sd},
                               {"max_halvings", cfg.pde.max_halvings}};
    }

    if (only_for("spot", {Command::dupire_extract})) {
        cfg.spot = top.number("spot");
        if (!(cfg.spot > 0.0)) {
            top.fail("spot", "must be positive");
        }
    }
    if (only_for("io", {Command::dupire_extract})) {
        Obj o = top.object("io", {"prices", "discount"});
        cfg.prices_path = detail::resolve(base_dir, o.string("prices"));
        auto in = detail::open_input(cfg.prices_path, "prices");
        PriceSurface s = read_price_csv(in);
        s.spot = cfg.spot;
        s.discount = interp::Curve::constant(1.0);
        if (o.has("discount")) {
            cfg.discount_path = detail::resolve(base_dir, o.string("discount"));
            auto din = detail::open_input(cfg.discount_path, "discount");
            read_discount_csv(din, s);
        }
        s.validate();
        cfg.prices = std::move(s);
    } else if (c == Command::dupire_extract) {
        top.require("io");
    }
    if (c == Command::dupire_extract) {
        cfg.resolved["spot"] = cfg.spot;
        cfg.resolved["io"] = {{"prices", cfg.prices_path}};
        if (!cfg.discount_path.empty()) {
            cfg.resolved["io"]["discount"] = cfg.discount_path;
        }
    }

    // Command / model compatibility.
    switch (c) {
    case Command::density:
    case Command::laplace:
        require_kind({ModelKind::bessel_zero_corr, ModelKind::bessel_corr}, "a bessel model kind");
        break;
    case Command::localvol:
        require_kind({ModelKind::bessel_zero_corr, ModelKind::bessel_corr, ModelKind::transformed, ModelKind::heston},
                     "a bessel, transformed or heston model kind");
        break;
    case Command::mimic_check:
        if (!cfg.check_surface) {
            require_kind({ModelKind::bessel_zero_corr, ModelKind::bessel_corr, ModelKind::transformed,
                          ModelKind::heston},
                         "check.surface or a model kind with an analytic surface");
        }
        break;
    case Command::pde_price:
        require_kind({ModelKind::local_vol}, "model kind \"local_vol\"");
        break;
    case Command::hybrid:
        require_kind({ModelKind::hybrid}, "model kind \"hybrid\"");
        if (cfg.t_nodes.size() < 3 || cfg.x_nodes.size() < 3) {
            throw ValidationError("grid", "\"grid\" needs at least 3 maturities and 3 strikes for extraction");
        }
        break;
    default:
        break;
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("config", "cannot open config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

} // namespace mimicvol::cli
