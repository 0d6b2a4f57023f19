#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lilkit/commands.hpp"
#include "lilkit/config.hpp"
#include "lilkit/errors.hpp"

extern char** environ;

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification toolkit for Markov chain LIL experiments"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> workers;
    std::optional<std::string> format;

    for (const char* name : {"check-conditions", "coupling", "ergodicity", "lil", "simulate"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--workers", workers, "Worker threads")->check(CLI::Range(1, 1024));
        sub->add_option("--format", format, "Artifact formats")->check(CLI::IsMember({"csv", "json", "both"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        lilkit::ExperimentConfig cfg = lilkit::load_config(config_path, command, environ);
        if (seed) cfg.run.seed = *seed;
        if (out_dir) cfg.output.directory = *out_dir;
        if (workers) cfg.run.workers = *workers;
        if (format)
            cfg.output.formats = *format == "csv"    ? lilkit::OutputFormat::csv
                                 : *format == "json" ? lilkit::OutputFormat::json
                                                     : lilkit::OutputFormat::both;
        const int code = lilkit::execute(cfg);
        std::cout << fmt::format("{}: {}\n", command,
                                 code == 0 ? "pass" : code == 1 ? "fail" : code == 3 ? "inconclusive" : "error");
        return code;
    } catch (const lilkit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const lilkit::InputError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
