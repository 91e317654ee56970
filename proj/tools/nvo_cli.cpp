#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nvo/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Stereo visual odometry with ground-normal constraints on simulated pavement scenes"};
    app.require_subcommand(1);

    nvo::SimulateOptions sim;
    std::optional<std::uint64_t> sim_seed;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    simulate->add_option("output", sim.output_dir, "output dataset directory")->required();
    simulate->add_option("-c,--config", sim.config_path, "run configuration file")->check(CLI::ExistingFile);
    simulate->add_option("--seed", sim_seed, "override scene.seed");
    simulate->add_flag("--force", sim.force, "write into a non-empty directory");

    nvo::RunOptions run;
    std::optional<double> run_lambda;
    std::optional<std::uint64_t> run_seed;
    auto* run_cmd = app.add_subcommand("run", "estimate the trajectory of a dataset");
    run_cmd->add_option("dataset", run.dataset_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    run_cmd->add_option("output", run.output_path, "estimated trajectory file")->required();
    run_cmd->add_option("-c,--config", run.config_path, "run configuration (default: dataset config_used.txt)")
        ->check(CLI::ExistingFile);
    run_cmd->add_flag("--no-normal", run.no_normal, "disable normal factors (lambda = 0)");
    run_cmd->add_option("--lambda", run_lambda, "normal factor weight")->check(CLI::NonNegativeNumber);
    run_cmd->add_option("--seed", run_seed, "recorded in the output header");

    nvo::EvaluateOptions eval;
    std::string alignment = "3d";
    auto* evaluate = app.add_subcommand("evaluate", "compute ATE and RDE against ground truth");
    evaluate->add_option("estimate", eval.estimate_path, "estimated trajectory")->required()->check(CLI::ExistingFile);
    evaluate->add_option("ground_truth", eval.ground_truth_path, "ground-truth trajectory")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("-o,--output", eval.output_dir, "report directory");
    evaluate->add_option("--delta", eval.delta, "RDE frame step")->check(CLI::PositiveNumber);
    evaluate->add_option("--alignment", alignment, "3d or yaw")->check(CLI::IsMember({"3d", "yaw"}));
    evaluate->add_option("--label", eval.label, "method name in the table");

    nvo::ExperimentOptions exp;
    auto* experiment = app.add_subcommand("experiment", "A/B comparison over the configured seeds");
    experiment->add_option("output", exp.output_dir, "output directory")->required();
    experiment->add_option("-c,--config", exp.config_path, "run configuration file")->check(CLI::ExistingFile);
    experiment->add_flag("--force", exp.force, "write into a non-empty directory");

    auto* config = app.add_subcommand("config", "print the default configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? nvo::kExitOk : nvo::kExitUsage;
    }

    if (simulate->parsed()) {
        sim.seed = sim_seed;
        return nvo::cmd_simulate(sim, std::cerr);
    }
    if (run_cmd->parsed()) {
        run.lambda = run_lambda;
        run.seed = run_seed;
        return nvo::cmd_run(run, std::cerr);
    }
    if (evaluate->parsed()) {
        eval.alignment = alignment == "yaw" ? nvo::AlignmentMode::Yaw : nvo::AlignmentMode::Full3D;
        return nvo::cmd_evaluate(eval, std::cout);
    }
    if (experiment->parsed()) return nvo::cmd_experiment(exp, std::cout);
    if (config->parsed()) {
        std::cout << nvo::serialize(nvo::RunConfig{});
        return nvo::kExitOk;
    }
    return nvo::kExitUsage;
}
