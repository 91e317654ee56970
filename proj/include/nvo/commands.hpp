#pragma once

// Command implementations behind the nvo_cli executable. Each returns a
// process exit code and writes progress to `log`.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nvo/config.hpp"
#include "nvo/estimator.hpp"
#include "nvo/evaluation.hpp"
#include "nvo/io.hpp"
#include "nvo/simulator.hpp"

namespace nvo {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitEstimator = 3,
};

namespace fs = std::filesystem;

namespace command_detail {

inline bool non_empty_directory(const fs::path& dir) {
    return fs::is_directory(dir) && fs::directory_iterator(dir) != fs::directory_iterator();
}

/// Creates `dir`; refuses an existing non-empty directory unless `force`.
inline bool prepare_output_dir(const fs::path& dir, bool force, std::ostream& log) {
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        log << "error: '" << dir.string() << "' exists and is not a directory\n";
        return false;
    }
    if (non_empty_directory(dir) && !force) {
        log << "error: output directory '" << dir.string() << "' is not empty (use --force to overwrite)\n";
        return false;
    }
    fs::create_directories(dir);
    return true;
}

inline std::string fixed(double v, int digits = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline std::string precise(double v) {
    std::string out;
    io_detail::append(out, v);
    return out;
}

inline std::string per_frame_csv(const Trajectory& est, const MetricReport& report) {
    std::string out = "index,timestamp,error\n";
    for (std::size_t i = 0; i < report.errors.size(); ++i) {
        out += std::to_string(i) + ',' + precise(est[i].timestamp) + ',' + precise(report.errors[i]) + '\n';
    }
    return out;
}

inline void log_costs(std::ostream& log, const EstimatorStats& s) {
    log << "tracking cost: reprojection " << s.tracking_cost.reprojection << " over "
        << s.tracking_cost.reprojection_terms << " terms, normal " << s.tracking_cost.normal << " over "
        << s.tracking_cost.normal_terms << " terms\n";
    log << "bundle adjustment cost: reprojection " << s.bundle_cost.reprojection << " over "
        << s.bundle_cost.reprojection_terms << " terms, normal " << s.bundle_cost.normal << " over "
        << s.bundle_cost.normal_terms << " terms\n";
}

}  // namespace command_detail

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    std::string config_path;  // empty: defaults
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

inline int cmd_simulate(const SimulateOptions& opt, std::ostream& log) {
    try {
        RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
        if (opt.seed) cfg.scene.seed = *opt.seed;
        validate(cfg);
        if (!command_detail::prepare_output_dir(opt.output_dir, opt.force, log)) return kExitUsage;
        const SimulatedSequence seq = simulate(cfg.scene);
        Dataset data = dataset_from_sequence(seq);
        data.config_text = serialize(cfg);
        write_dataset(opt.output_dir, data);
        std::size_t observations = 0;
        std::size_t outliers = 0;
        for (const auto& frame : data.observations) {
            observations += frame.size();
            for (const auto& o : frame) outliers += o.outlier ? 1 : 0;
        }
        log << "wrote " << data.size() << " frames, " << data.landmarks.size() << " landmarks, " << observations
            << " observations (" << outliers << " outliers) to " << opt.output_dir << '\n';
        return kExitOk;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return kExitData;
    }
}

// ---------------------------------------------------------------------------
// run

struct RunOptions {
    std::string dataset_dir;
    std::string output_path;
    std::string config_path;  // empty: the dataset's config_used.txt, else defaults
    bool no_normal = false;
    std::optional<double> lambda;
    std::optional<std::uint64_t> seed;
};

struct RunOutcome {
    int exit_code = kExitOk;
    std::optional<SequenceResult> result;
};

inline RunOutcome run_dataset(const RunOptions& opt, std::ostream& log) {
    RunOutcome outcome;
    try {
        std::vector<std::string> warnings;
        const Dataset data = read_dataset(opt.dataset_dir, &warnings);
        for (const std::string& w : warnings) log << "warning: " << w << '\n';

        RunConfig cfg;
        if (!opt.config_path.empty()) {
            cfg = load_config(opt.config_path);
        } else if (!data.config_text.empty()) {
            cfg = parse_config(data.config_text, {}, (fs::path(opt.dataset_dir) / "config_used.txt").string());
        }
        if (opt.lambda) cfg.solver.loss.normal_weight = *opt.lambda;
        if (opt.no_normal) cfg.solver.loss.normal_weight = 0.0;
        validate(cfg);

        log << "running " << data.size() << " frames with lambda = " << cfg.solver.loss.normal_weight
            << (cfg.solver.normals_enabled() ? "" : " (normal factors disabled)") << '\n';
        try {
            outcome.result = run_sequence(data.frames(), data.intrinsics, cfg.solver);
        } catch (const TrackingLost& e) {
            log << "error: " << e.what() << '\n';
            outcome.exit_code = kExitEstimator;
            return outcome;
        }
        const EstimatorStats& s = outcome.result->stats;
        log << "frames " << s.frames << ", keyframes " << s.keyframes << ", bundle adjustments "
            << s.bundle_adjustments << ", rejected observations " << s.rejected_observations << '\n';
        log << "tracking " << command_detail::fixed(s.tracking_seconds, 3) << " s, mapping "
            << command_detail::fixed(s.mapping_seconds, 3) << " s\n";
        command_detail::log_costs(log, s);

        if (!opt.output_path.empty()) {
            const fs::path out(opt.output_path);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            std::string comment = "lambda " + command_detail::precise(cfg.solver.loss.normal_weight);
            if (opt.seed) comment += " seed " + std::to_string(*opt.seed);
            write_trajectory(out, to_trajectory(outcome.result->trajectory), comment);
            log << "wrote " << out.string() << '\n';
        }
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        outcome.exit_code = kExitData;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        outcome.exit_code = kExitData;
    }
    return outcome;
}

inline int cmd_run(const RunOptions& opt, std::ostream& log) { return run_dataset(opt, log).exit_code; }

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
    std::string estimate_path;
    std::string ground_truth_path;
    std::string output_dir;  // empty: print only
    int delta = kDefaultRdeStep;
    AlignmentMode alignment = AlignmentMode::Full3D;
    std::string label = "estimate";
};

inline int cmd_evaluate(const EvaluateOptions& opt, std::ostream& log) {
    try {
        std::vector<std::string> warnings;
        const Trajectory est = read_trajectory(opt.estimate_path, &warnings);
        const Trajectory gt = read_trajectory(opt.ground_truth_path, &warnings);
        for (const std::string& w : warnings) log << "warning: " << w << '\n';

        const Association a = associate(est, gt);
        const Evaluation ev = evaluate(est, gt, opt.delta, opt.alignment);
        if (a.unmatched > 0) log << "warning: " << a.unmatched << " estimated poses had no ground-truth match\n";

        ComparisonTable ate_table("ATE (m)");
        ate_table.add("sequence", opt.label, ev.ate);
        ComparisonTable rde_table("RDE (m), delta = " + std::to_string(opt.delta));
        rde_table.add("sequence", opt.label, ev.rde);
        const std::string report = ate_table.text() + '\n' + rde_table.text();
        log << report;

        if (!opt.output_dir.empty()) {
            fs::create_directories(opt.output_dir);
            const fs::path dir(opt.output_dir);
            io_detail::write_file(dir / "report.txt", report);
            io_detail::write_file(dir / "ate.csv", command_detail::per_frame_csv(a.estimate, ev.ate));
            io_detail::write_file(dir / "rde.csv", command_detail::per_frame_csv(a.estimate, ev.rde));
            io_detail::write_file(dir / "ate_summary.csv", ate_table.csv());
            io_detail::write_file(dir / "rde_summary.csv", rde_table.csv());
            log << "wrote report to " << dir.string() << '\n';
        }
        return kExitOk;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return kExitData;
    }
}

// ---------------------------------------------------------------------------
// experiment

inline constexpr const char* kWithNormals = "with normals";
inline constexpr const char* kBaseline = "baseline";

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool completed = false;
    std::string status = "ok";
    std::optional<Evaluation> with_normals;
    std::optional<Evaluation> baseline;
    double seconds = 0.0;
};

struct ExperimentResult {
    std::vector<SeedOutcome> seeds;
    ComparisonTable ate{"ATE (m)"};
    ComparisonTable rde{"RDE (m)"};
    int completed = 0;
    double median_ate_rmse_with_normals = 0.0;
    double median_ate_rmse_baseline = 0.0;
    int rde_mean_wins = 0;  // seeds whose RDE mean is strictly lower with normals

    [[nodiscard]] double median_ratio() const {
        return median_ate_rmse_baseline > 0.0 ? median_ate_rmse_with_normals / median_ate_rmse_baseline : 0.0;
    }
};

namespace command_detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline std::string experiment_csv(const ExperimentResult& r) {
    std::string out =
        "seed,status,ate_rmse_normals,ate_rmse_baseline,ate_mean_normals,ate_mean_baseline,rde_mean_normals,"
        "rde_mean_baseline,seconds\n";
    auto cell = [](const std::optional<Evaluation>& e, bool ate, bool rmse) {
        if (!e) return std::string("nan");
        const MetricReport& m = ate ? e->ate : e->rde;
        return precise(rmse ? m.rmse : m.mean);
    };
    for (const SeedOutcome& s : r.seeds) {
        out += std::to_string(s.seed) + ',' + s.status + ',' + cell(s.with_normals, true, true) + ',' +
               cell(s.baseline, true, true) + ',' + cell(s.with_normals, true, false) + ',' +
               cell(s.baseline, true, false) + ',' + cell(s.with_normals, false, false) + ',' +
               cell(s.baseline, false, false) + ',' + precise(s.seconds) + '\n';
    }
    return out;
}

inline std::string experiment_summary(const ExperimentResult& r) {
    std::ostringstream os;
    os << r.ate.text() << '\n' << r.rde.text() << '\n';
    for (const SeedOutcome& s : r.seeds) {
        if (!s.completed) os << "seed " << s.seed << ": FAILED (" << s.status << "), excluded from totals\n";
    }
    os << "completed seeds: " << r.completed << " of " << r.seeds.size() << '\n';
    os << "median ATE RMSE with normals: " << fixed(r.median_ate_rmse_with_normals) << " m\n";
    os << "median ATE RMSE baseline:     " << fixed(r.median_ate_rmse_baseline) << " m\n";
    os << "median ratio (normals / baseline): " << fixed(r.median_ratio(), 4) << '\n';
    os << "seeds with lower RDE mean using normals: " << r.rde_mean_wins << " of " << r.completed << '\n';
    return os.str();
}

}  // namespace command_detail

/// Simulates every seed, runs the estimator with and without normal factors,
/// and evaluates both. When `output_dir` is non-empty each seed gets a
/// `seed_<n>` subdirectory with its dataset, trajectories and reports.
inline ExperimentResult run_experiment(const RunConfig& cfg, const std::string& output_dir, std::ostream& log) {
    validate(cfg);
    ExperimentResult result;
    result.rde = ComparisonTable("RDE (m), delta = " + std::to_string(cfg.rde_delta));
    std::vector<double> rmse_normals;
    std::vector<double> rmse_baseline;

    for (std::uint64_t seed : cfg.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        SeedOutcome outcome;
        outcome.seed = seed;
        RunConfig seed_cfg = cfg;
        seed_cfg.scene.seed = seed;
        const SimulatedSequence seq = simulate(seed_cfg.scene);
        Dataset data = dataset_from_sequence(seq);
        data.config_text = serialize(seed_cfg);

        fs::path dir;
        if (!output_dir.empty()) {
            dir = fs::path(output_dir) / ("seed_" + std::to_string(seed));
            fs::create_directories(dir);
            write_dataset(dir, data);
        }

        const std::vector<FrameInput> frames = data.frames();
        std::vector<std::string> failures;
        auto run_mode = [&](double lambda, const char* name, const char* file) -> std::optional<Evaluation> {
            SolverConfig solver = seed_cfg.solver;
            solver.loss.normal_weight = lambda;
            try {
                const SequenceResult run = run_sequence(frames, data.intrinsics, solver);
                const Trajectory est = to_trajectory(run.trajectory);
                if (!dir.empty()) write_trajectory(dir / file, est, "lambda " + command_detail::precise(lambda));
                return evaluate(est, data.ground_truth, cfg.rde_delta, cfg.alignment);
            } catch (const TrackingLost& e) {
                failures.push_back(std::string(name) + ": " + e.what());
                return std::nullopt;
            } catch (const Error& e) {
                failures.push_back(std::string(name) + ": " + e.what());
                return std::nullopt;
            }
        };
        const double lambda = seed_cfg.solver.loss.normal_weight;
        outcome.with_normals = run_mode(lambda, kWithNormals, "traj_normals.txt");
        outcome.baseline = run_mode(0.0, kBaseline, "traj_baseline.txt");
        outcome.completed = outcome.with_normals.has_value() && outcome.baseline.has_value();
        if (!failures.empty()) {
            outcome.status.clear();
            for (const std::string& f : failures) outcome.status += (outcome.status.empty() ? "" : "; ") + f;
        }
        outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const std::string label = "seed " + std::to_string(seed);
        if (outcome.completed) {
            ++result.completed;
            result.ate.add(label, kWithNormals, outcome.with_normals->ate);
            result.ate.add(label, kBaseline, outcome.baseline->ate);
            result.rde.add(label, kWithNormals, outcome.with_normals->rde);
            result.rde.add(label, kBaseline, outcome.baseline->rde);
            rmse_normals.push_back(outcome.with_normals->ate.rmse);
            rmse_baseline.push_back(outcome.baseline->ate.rmse);
            if (outcome.with_normals->rde.mean < outcome.baseline->rde.mean) ++result.rde_mean_wins;
            log << label << ": ATE RMSE " << command_detail::fixed(outcome.with_normals->ate.rmse) << " m with normals, "
                << command_detail::fixed(outcome.baseline->ate.rmse) << " m baseline; RDE mean "
                << command_detail::fixed(outcome.with_normals->rde.mean) << " / "
                << command_detail::fixed(outcome.baseline->rde.mean) << " m (" << command_detail::fixed(outcome.seconds, 1)
                << " s)\n";
        } else {
            log << label << ": FAILED: " << outcome.status << '\n';
        }
        if (!dir.empty()) {
            std::ostringstream seed_report;
            if (outcome.with_normals) {
                ComparisonTable t("ATE (m)");
                t.add(label, kWithNormals, outcome.with_normals->ate);
                if (outcome.baseline) t.add(label, kBaseline, outcome.baseline->ate);
                seed_report << t.text();
            }
            seed_report << "status: " << outcome.status << '\n';
            io_detail::write_file(dir / "report.txt", seed_report.str());
        }
        result.seeds.push_back(std::move(outcome));
    }

    result.median_ate_rmse_with_normals = command_detail::median(rmse_normals);
    result.median_ate_rmse_baseline = command_detail::median(rmse_baseline);

    if (!output_dir.empty()) {
        const fs::path dir(output_dir);
        io_detail::write_file(dir / "summary.txt", command_detail::experiment_summary(result));
        io_detail::write_file(dir / "per_seed.csv", command_detail::experiment_csv(result));
        io_detail::write_file(dir / "ate_table.csv", result.ate.csv());
        io_detail::write_file(dir / "rde_table.csv", result.rde.csv());
        io_detail::write_file(dir / "config_used.txt", serialize(cfg));
    }
    return result;
}

struct ExperimentOptions {
    std::string config_path;  // empty: defaults
    std::string output_dir;
    bool force = false;
};

inline int cmd_experiment(const ExperimentOptions& opt, std::ostream& log) {
    try {
        const RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
        if (!command_detail::prepare_output_dir(opt.output_dir, opt.force, log)) return kExitUsage;
        const ExperimentResult r = run_experiment(cfg, opt.output_dir, log);
        log << '\n' << command_detail::experiment_summary(r);
        return r.completed > 0 ? kExitOk : kExitEstimator;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace nvo
