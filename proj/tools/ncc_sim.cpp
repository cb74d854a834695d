// Command-line front end: validate configs, run scenario grids, reproduce the
// figure grids, print step-model weights, and simulate or analyze one trial.

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "ncc/cli.hpp"

#ifndef NCC_CONFIG_DIR
#define NCC_CONFIG_DIR "configs"
#endif

namespace {

void add_run_flags(CLI::App* cmd, ncc::cli::RunConfig& rc, std::optional<int>& reps,
                   std::optional<std::uint64_t>& seed, std::string& format) {
    cmd->add_option("--reps", reps, "replicates per scenario (overrides config)");
    cmd->add_option("--seed", seed, "master seed (overrides config and NCC_SIM_SEED)");
    cmd->add_option("--out", rc.out_path, "output file; a provenance sidecar is written next to it");
    cmd->add_option("--workers", rc.workers, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--format", format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Platform-trial simulator for time-trend adjusted use of non-concurrent controls"};
    app.require_subcommand(1);

    ncc::cli::RunConfig rc;
    rc.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::optional<int> reps;
    std::optional<std::uint64_t> seed;
    std::string format = "csv";

    auto* validate = app.add_subcommand("validate", "check a configuration file");
    validate->add_option("--config", rc.config_path, "configuration JSON")->required();

    auto* run = app.add_subcommand("run", "run a scenario grid");
    run->add_option("--config", rc.config_path, "configuration JSON")->required();
    add_run_flags(run, rc, reps, seed, format);

    int figure_id = 0;
    std::string config_dir = NCC_CONFIG_DIR;
    auto* figure = app.add_subcommand("figure", "run the bundled grid of a figure (3-6)");
    figure->add_option("id", figure_id, "figure number")->required();
    figure->add_option("--config-dir", config_dir, "directory holding figN.json");
    add_run_flags(figure, rc, reps, seed, format);

    long long n01 = 0, n02 = 0, n11 = 0, n12 = 0;
    auto* weights = app.add_subcommand("weights", "print step-model weights and rho");
    weights->add_option("n01", n01, "control, period 1")->required();
    weights->add_option("n02", n02, "control, period 2")->required();
    weights->add_option("n11", n11, "arm 1, period 1")->required();
    weights->add_option("n12", n12, "arm 1, period 2")->required();

    int scenario_id = 0;
    std::uint64_t trial_seed = 1;
    auto* simulate = app.add_subcommand("simulate", "write one simulated trial as CSV");
    simulate->add_option("--config", rc.config_path, "configuration JSON")->required();
    simulate->add_option("--scenario", scenario_id, "scenario id within the grid");
    simulate->add_option("--seed", trial_seed, "trial seed");
    simulate->add_option("--out", rc.out_path, "output CSV (default stdout)");
    bool sequence_only = false;
    simulate->add_flag("--sequence", sequence_only, "write only the arm assignment sequence");

    std::string data_path, endpoint = "continuous", model_kind = "alltc_step",
                             variance_mode = "homoscedastic";
    int tested_arm = 2;
    double alpha = 0.025;
    auto* analyze = app.add_subcommand("analyze", "fit one model to a trial CSV, print JSON");
    analyze->add_option("--data", data_path, "trial CSV (j,t,arm,period,y)")->required();
    analyze->add_option("--endpoint", endpoint)->check(CLI::IsMember({"continuous", "binary"}));
    analyze->add_option("--model", model_kind, "analysis model kind");
    analyze->add_option("--variance-mode", variance_mode)
        ->check(CLI::IsMember({"homoscedastic", "per_period"}));
    analyze->add_option("--tested-arm", tested_arm);
    analyze->add_option("--alpha", alpha);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ncc::cli::exit_ok : ncc::cli::exit_config;
    }

    rc.replicates = reps;
    rc.seed = seed;
    rc.format = format == "json" ? ncc::cli::OutputFormat::json : ncc::cli::OutputFormat::csv;

    if (*validate) return ncc::cli::cmd_validate(rc.config_path, std::cout, std::cerr);
    if (*run) return ncc::cli::cmd_run(rc, std::cout, std::cerr);
    if (*figure) return ncc::cli::cmd_figure(figure_id, config_dir, rc, std::cout, std::cerr);
    if (*weights) return ncc::cli::cmd_weights(n01, n02, n11, n12, std::cout, std::cerr);
    if (*simulate)
        return ncc::cli::cmd_simulate(rc.config_path, scenario_id, trial_seed, rc.out_path,
                                      sequence_only, std::cout, std::cerr);
    if (*analyze) {
        ncc::AnalysisModel model;
        try {
            model = ncc::parse_model(
                ncc::json{{"kind", model_kind}, {"variance_mode", variance_mode}}, "--model",
                tested_arm);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return ncc::cli::exit_config;
        }
        const auto ep = endpoint == "binary" ? ncc::Endpoint::binary : ncc::Endpoint::continuous;
        return ncc::cli::cmd_analyze(data_path, ep, model, alpha, std::cout, std::cerr);
    }
    return ncc::cli::exit_config;
}
