#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "config.hpp"
#include "runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"magnetokernel: Monte Carlo heat kernels and Green functions of the "
                 "Schrodinger operator in random Gaussian magnetic fields"};
    app.require_subcommand(1);

    struct Common {
        std::string config_path;
        std::string out_dir;
        long seed = -1;
        int workers = 0;
    };

    const std::vector<std::pair<std::string, std::string>> subs = {
        {"sample-paths", "Brownian bridge law diagnostics"},
        {"sample-field", "field sampling and covariance validation"},
        {"kernel", "point kernel estimates, both averaging routes"},
        {"check-bounds", "bound verdict sweeps (kato|jensen|thm2|thm3|cor4|green)"},
        {"trace", "trace of the heat kernel over a confining box"},
        {"green", "Green function estimates via the proper-time integral"},
        {"collapse", "scaling-collapse extraction of the profile function"},
    };

    std::map<std::string, Common> opts;
    std::string bounds_kind;
    for (const auto& [name, desc] : subs) {
        CLI::App* sub = app.add_subcommand(name, desc);
        Common& c = opts[name];
        sub->add_option("--config", c.config_path, "experiment config file")->required();
        sub->add_option("--seed", c.seed, "override the config seed");
        sub->add_option("--out", c.out_dir, "override the output directory");
        sub->add_option("--workers", c.workers,
                        "worker threads (0: MAGNETOKERNEL_WORKERS or hardware)");
        if (name == "check-bounds")
            sub->add_option("kind", bounds_kind, "bound to check: kato|jensen|thm2|thm3|cor4|green");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : mk::cli::kExitUsage;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    const Common& c = opts[name];
    try {
        mk::cli::ExperimentConfig cfg = mk::cli::ExperimentConfig::load(c.config_path);
        if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
        if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
        if (c.workers > 0) cfg.workers = c.workers;
        std::string subcommand = name;
        if (name == "check-bounds" && !bounds_kind.empty()) subcommand += " " + bounds_kind;
        return mk::cli::run_subcommand(subcommand, cfg);
    } catch (const mk::cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return mk::cli::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mk::cli::kExitRuntime;
    }
}
