#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "nvo/commands.hpp"

using namespace nvo;
namespace fs = std::filesystem;

namespace {

class CommandTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root_ = fs::temp_directory_path() / (std::string("nvo_cmd_") + info->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
        config_ = (root_ / "small.cfg").string();
        io_detail::write_file(config_,
                              "scene.shape = line\n"
                              "scene.frame_count = 90\n"
                              "scene.landmark_count = 1500\n"
                              "experiment.seeds = 4\n");
    }
    void TearDown() override { fs::remove_all(root_); }

    [[nodiscard]] std::string path(const std::string& name) const { return (root_ / name).string(); }

    std::string simulate_small(const std::string& name) {
        std::ostringstream log;
        SimulateOptions opt;
        opt.config_path = config_;
        opt.output_dir = path(name);
        EXPECT_EQ(cmd_simulate(opt, log), kExitOk) << log.str();
        return opt.output_dir;
    }

    static std::size_t lines(const std::string& file) {
        const std::string text = io_detail::read_file(file);
        return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    }

    fs::path root_;
    std::string config_;
};

}  // namespace

TEST_F(CommandTest, SimulateIsByteDeterministic) {
    const std::string a = simulate_small("a");
    const std::string b = simulate_small("b");
    for (const char* f : {"intrinsics.txt", "traj_gt.txt", "landmarks.csv", "obs.csv", "normals.csv", "config_used.txt"}) {
        EXPECT_EQ(io_detail::read_file(fs::path(a) / f), io_detail::read_file(fs::path(b) / f)) << f;
    }
    EXPECT_EQ(lines((fs::path(a) / "traj_gt.txt").string()), 91u);
}

TEST_F(CommandTest, SimulateSeedOverrideChangesData) {
    const std::string a = simulate_small("a");
    std::ostringstream log;
    SimulateOptions opt;
    opt.config_path = config_;
    opt.output_dir = path("c");
    opt.seed = 77;
    ASSERT_EQ(cmd_simulate(opt, log), kExitOk);
    EXPECT_NE(io_detail::read_file(fs::path(a) / "obs.csv"), io_detail::read_file(fs::path(opt.output_dir) / "obs.csv"));
    EXPECT_NE(io_detail::read_file(fs::path(opt.output_dir) / "config_used.txt").find("scene.seed = 77"),
              std::string::npos);
}

TEST_F(CommandTest, SimulateRefusesNonEmptyDirectoryWithoutForce) {
    const std::string dir = simulate_small("a");
    std::ostringstream log;
    SimulateOptions opt;
    opt.config_path = config_;
    opt.output_dir = dir;
    EXPECT_EQ(cmd_simulate(opt, log), kExitUsage);
    EXPECT_NE(log.str().find("--force"), std::string::npos);
    opt.force = true;
    EXPECT_EQ(cmd_simulate(opt, log), kExitOk);
}

TEST_F(CommandTest, SimulateReportsBadConfig) {
    io_detail::write_file(path("bad.cfg"), "scene.frame_count = 90\nscene.bogus = 1\n");
    std::ostringstream log;
    SimulateOptions opt;
    opt.config_path = path("bad.cfg");
    opt.output_dir = path("out");
    EXPECT_EQ(cmd_simulate(opt, log), kExitData);
    EXPECT_NE(log.str().find("bad.cfg:2"), std::string::npos);
}

TEST_F(CommandTest, RunWritesTrajectoryAndCostBreakdown) {
    const std::string data = simulate_small("data");
    std::ostringstream log;
    RunOptions opt;
    opt.dataset_dir = data;
    opt.output_path = path("est.txt");
    opt.seed = 4;
    ASSERT_EQ(cmd_run(opt, log), kExitOk) << log.str();
    EXPECT_EQ(lines(opt.output_path), 92u);
    const std::string text = io_detail::read_file(opt.output_path);
    EXPECT_NE(text.find("# lambda 10000 seed 4"), std::string::npos);
    EXPECT_NE(log.str().find("bundle adjustment cost"), std::string::npos);
    EXPECT_EQ(log.str().find("normal 0 over 0 terms"), std::string::npos);
}

TEST_F(CommandTest, RunWithoutNormalsHasNoNormalTerms) {
    const std::string data = simulate_small("data");
    std::ostringstream log;
    RunOptions opt;
    opt.dataset_dir = data;
    opt.output_path = path("est.txt");
    opt.no_normal = true;
    ASSERT_EQ(cmd_run(opt, log), kExitOk) << log.str();
    EXPECT_NE(log.str().find("normal factors disabled"), std::string::npos);
    EXPECT_NE(log.str().find("tracking cost: reprojection"), std::string::npos);
    std::size_t count = 0;
    for (std::size_t p = log.str().find("normal 0 over 0 terms"); p != std::string::npos;
         p = log.str().find("normal 0 over 0 terms", p + 1)) {
        ++count;
    }
    EXPECT_EQ(count, 2u);
    EXPECT_NE(io_detail::read_file(opt.output_path).find("# lambda 0"), std::string::npos);
}

TEST_F(CommandTest, RunIsDeterministic) {
    const std::string data = simulate_small("data");
    std::ostringstream log;
    RunOptions opt;
    opt.dataset_dir = data;
    opt.output_path = path("one.txt");
    ASSERT_EQ(cmd_run(opt, log), kExitOk);
    opt.output_path = path("two.txt");
    ASSERT_EQ(cmd_run(opt, log), kExitOk);
    EXPECT_EQ(io_detail::read_file(path("one.txt")), io_detail::read_file(path("two.txt")));
}

TEST_F(CommandTest, RunReportsMissingDataset) {
    std::ostringstream log;
    RunOptions opt;
    opt.dataset_dir = path("nowhere");
    opt.output_path = path("est.txt");
    EXPECT_EQ(cmd_run(opt, log), kExitData);
    EXPECT_FALSE(fs::exists(opt.output_path));
}

TEST_F(CommandTest, RunReportsTrackingFailure) {
    const std::string data = simulate_small("data");
    const std::string obs = (fs::path(data) / "obs.csv").string();
    std::istringstream in(io_detail::read_file(obs));
    std::string kept;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("10,", 0) != 0) kept += line + '\n';
    }
    io_detail::write_file(obs, kept);
    std::ostringstream log;
    RunOptions opt;
    opt.dataset_dir = data;
    opt.output_path = path("est.txt");
    EXPECT_EQ(cmd_run(opt, log), kExitEstimator);
    EXPECT_NE(log.str().find("tracking lost at frame 10"), std::string::npos);
}

TEST_F(CommandTest, EvaluateWritesPerFrameFiles) {
    const std::string data = simulate_small("data");
    std::ostringstream log;
    RunOptions run;
    run.dataset_dir = data;
    run.output_path = path("est.txt");
    ASSERT_EQ(cmd_run(run, log), kExitOk);

    EvaluateOptions opt;
    opt.estimate_path = run.output_path;
    opt.ground_truth_path = (fs::path(data) / "traj_gt.txt").string();
    opt.output_dir = path("eval");
    opt.delta = 20;
    ASSERT_EQ(cmd_evaluate(opt, log), kExitOk) << log.str();
    EXPECT_EQ(lines(path("eval/ate.csv")), 91u);
    EXPECT_EQ(lines(path("eval/rde.csv")), 91u - 20u);
    EXPECT_TRUE(fs::exists(path("eval/report.txt")));
    EXPECT_NE(io_detail::read_file(path("eval/ate_summary.csv")).find("Total,estimate,"), std::string::npos);
    EXPECT_NE(log.str().find("Total"), std::string::npos);
}

TEST_F(CommandTest, EvaluateRejectsTooLargeDelta) {
    const std::string data = simulate_small("data");
    std::ostringstream log;
    EvaluateOptions opt;
    opt.estimate_path = (fs::path(data) / "traj_gt.txt").string();
    opt.ground_truth_path = opt.estimate_path;
    opt.delta = 500;
    EXPECT_EQ(cmd_evaluate(opt, log), kExitData);
    EXPECT_NE(log.str().find("RDE"), std::string::npos);
}

TEST_F(CommandTest, ExperimentWritesTablesPerSeed) {
    std::ostringstream log;
    ExperimentOptions opt;
    opt.config_path = config_;
    opt.output_dir = path("exp");
    ASSERT_EQ(cmd_experiment(opt, log), kExitOk) << log.str();
    for (const char* f : {"summary.txt", "per_seed.csv", "ate_table.csv", "rde_table.csv", "config_used.txt",
                          "seed_4/traj_normals.txt", "seed_4/traj_baseline.txt", "seed_4/report.txt",
                          "seed_4/obs.csv"}) {
        EXPECT_TRUE(fs::exists(path("exp/") + f)) << f;
    }
    EXPECT_EQ(lines(path("exp/per_seed.csv")), 2u);
    const std::string summary = io_detail::read_file(path("exp/summary.txt"));
    EXPECT_NE(summary.find("completed seeds: 1 of 1"), std::string::npos);
    EXPECT_NE(summary.find("with normals"), std::string::npos);
    EXPECT_NE(summary.find("baseline"), std::string::npos);
    EXPECT_EQ(cmd_experiment(opt, log), kExitUsage);
}
