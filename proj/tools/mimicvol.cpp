#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mimicvol/cli/run.hpp"

int main(int argc, char** argv) {
    using namespace mimicvol;
    CLI::App app{"Local volatility from Bessel-driven stochastic volatility models", "mimicvol"};
    app.set_version_flag("--version", std::string(version));

    std::vector<std::string> names;
    for (const auto& [n, c] : cli::command_names()) {
        names.push_back(n);
    }
    std::string command;
    std::string config;
    std::string out = "out";
    std::uint64_t seed = 0;
    unsigned threads = 0;
    app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(names));
    app.add_option("--config", config, "JSON run configuration")->required();
    app.add_option("--out", out, "Output directory")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "Override mc.seed");
    app.add_option("--threads", threads, "Worker threads (default MIMICVOL_THREADS, then all cores)")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << "mimicvol: " << e.what() << " (see --help)\n";
        return 1;
    }

    cli::RunConfig cfg;
    try {
        cfg = cli::parse_config_file(config);
    } catch (const std::exception& e) {
        std::cerr << cli::diagnostic(e) << "\n";
        return 1;
    }
    if (cli::to_string(cfg.command) != command) {
        std::cerr << "mimicvol: command \"" << command << "\" does not match config command \""
                  << cli::to_string(cfg.command) << "\"\n";
        return 1;
    }
    cli::RunOptions opt;
    opt.out_dir = out;
    opt.threads = threads;
    if (*seed_opt) {
        opt.seed = seed;
    }
    return cli::run(std::move(cfg), opt, std::cerr);
}
