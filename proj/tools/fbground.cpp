#include <iostream>

#include <CLI11.hpp>

#include "fbground/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Ground states of a critical two-phase free boundary problem"};
    app.require_subcommand(1);

    fbground::CliOptions opt;
    std::string out_dir;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", opt.config_path, "INI configuration file");
        if (config_required) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_flag("--allow-supercritical-kappa", opt.allow_supercritical_kappa,
                      "accept kappa at or above the L-infinity threshold");
        sub->add_option("--seed", opt.seed, "seed for randomized checks");
    };

    auto* spectrum = app.add_subcommand("spectrum", "eigenpair, Sobolev constant, thresholds as JSON");
    add_common(spectrum, true);
    auto* solve = app.add_subcommand("solve", "continuation in eps, trace and field dumps");
    add_common(solve, true);
    auto* verify = app.add_subcommand("verify", "checks on a field file");
    add_common(verify, true);
    verify->add_option("field", opt.field_path, "field file in the grid text format")->required();
    auto* sweep = app.add_subcommand("sweep", "lambda x kappa grid of independent solves");
    add_common(sweep, true);
    auto* report = app.add_subcommand("report", "summary and plot-ready CSV from a solve directory");
    add_common(report, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : fbground::exit_config;
    }
    if (!out_dir.empty()) opt.out_dir = out_dir;

    if (*spectrum) return fbground::cmd_spectrum(opt, std::cout, std::cerr);
    if (*solve) return fbground::cmd_solve(opt, std::cout, std::cerr);
    if (*verify) return fbground::cmd_verify(opt, std::cout, std::cerr);
    if (*sweep) return fbground::cmd_sweep(opt, std::cout, std::cerr);
    return fbground::cmd_report(opt, std::cout, std::cerr);
}
