#include <gtest/gtest.h>

#include "nvo/estimator.hpp"
#include "nvo/evaluation.hpp"
#include "nvo/simulator.hpp"

using namespace nvo;

namespace {

SceneConfig short_scene() {
    SceneConfig cfg;
    cfg.shape = TrajectoryShape::Line;
    cfg.frame_count = 150;
    cfg.landmark_count = 2000;
    cfg.seed = 11;
    return cfg;
}

SceneConfig noiseless(SceneConfig cfg) {
    cfg.pixel_sigma = 0.0;
    cfg.outlier_rate = 0.0;
    cfg.roughness = 0.0;
    cfg.normal_noise_deg = 0.0;
    return cfg;
}

Trajectory as_trajectory(const std::vector<Pose>& world_to_camera, const std::vector<double>& stamps) {
    Trajectory out;
    for (std::size_t i = 0; i < world_to_camera.size(); ++i) out.push_back({stamps[i], world_to_camera[i].inverse()});
    return out;
}

Trajectory as_trajectory(const std::vector<FrameEstimate>& estimates) {
    Trajectory out;
    for (const FrameEstimate& e : estimates) out.push_back({e.timestamp, e.pose.inverse()});
    return out;
}

}  // namespace

TEST(Estimator, FirstKeyframeSeedsGlobalNormal) {
    const SimulatedSequence seq = simulate(short_scene());
    VisualOdometry vo(seq.intrinsics, SolverConfig{});
    const FrameInput first = seq.frame(0);
    const FrameEstimate& e = vo.process(first);
    EXPECT_TRUE(e.keyframe);
    EXPECT_TRUE(e.pose.rotation().isIdentity(0.0));
    EXPECT_TRUE(vo.map().has_global_normal);
    EXPECT_LE((vo.map().global_normal - first.normal.normalized()).norm(), 1e-15);
    EXPECT_EQ(vo.map().normal_init_remaining, SolverConfig{}.normal_init_window - 1);
    EXPECT_TRUE(vo.map().keyframes.at(0).fixed);
    EXPECT_EQ(vo.map().landmarks.size(), first.observations.size());
}

TEST(Estimator, GlobalNormalFreezesAfterInitWindow) {
    const SimulatedSequence seq = simulate(short_scene());
    SolverConfig cfg;
    cfg.normal_init_window = 4;
    VisualOdometry vo(seq.intrinsics, cfg);
    int keyframes = 0;
    Vec3 frozen = Vec3::Zero();
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const FrameEstimate& e = vo.process(seq.frame(i));
        if (!e.keyframe) continue;
        ++keyframes;
        EXPECT_EQ(vo.map().normal_init_remaining, std::max(0, cfg.normal_init_window - keyframes));
        if (keyframes == cfg.normal_init_window) frozen = vo.map().global_normal;
        if (keyframes > cfg.normal_init_window) EXPECT_EQ(vo.map().global_normal, frozen);
    }
    EXPECT_GT(keyframes, cfg.normal_init_window + 2);
}

TEST(Estimator, NoiselessSequenceIsRecoveredExactly) {
    const SimulatedSequence seq = simulate(noiseless(short_scene()));
    const SequenceResult r = run_sequence(seq.frames(), seq.intrinsics, SolverConfig{});
    ASSERT_EQ(r.trajectory.size(), seq.size());
    const Evaluation ev = evaluate(as_trajectory(r.trajectory), as_trajectory(seq.ground_truth, seq.timestamps), 20);
    EXPECT_LT(ev.ate.rmse, 1e-6);
    EXPECT_LT(ev.rde.max, 1e-6);
    EXPECT_EQ(r.stats.rejected_observations, 0);
    EXPECT_TRUE(r.map.consistent());
}

TEST(Estimator, NoisySequenceStaysClose) {
    const SimulatedSequence seq = simulate(short_scene());
    const SequenceResult r = run_sequence(seq.frames(), seq.intrinsics, SolverConfig{});
    const Evaluation ev = evaluate(as_trajectory(r.trajectory), as_trajectory(seq.ground_truth, seq.timestamps), 20);
    EXPECT_LT(ev.ate.rmse, 0.05);
    EXPECT_GT(r.stats.rejected_observations, 0);
    EXPECT_EQ(r.stats.diverged_bundle_adjustments, 0);
}

TEST(Estimator, DeterministicAcrossRuns) {
    const SimulatedSequence seq = simulate(short_scene());
    const SequenceResult a = run_sequence(seq.frames(), seq.intrinsics, SolverConfig{});
    const SequenceResult b = run_sequence(seq.frames(), seq.intrinsics, SolverConfig{});
    ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        EXPECT_EQ(a.trajectory[i].pose.rotation(), b.trajectory[i].pose.rotation());
        EXPECT_EQ(a.trajectory[i].pose.translation(), b.trajectory[i].pose.translation());
        EXPECT_EQ(a.trajectory[i].keyframe, b.trajectory[i].keyframe);
    }
}

TEST(Estimator, ZeroNormalWeightUsesReprojectionOnly) {
    const SimulatedSequence seq = simulate(short_scene());
    SolverConfig cfg;
    cfg.loss.normal_weight = 0.0;
    const SequenceResult r = run_sequence(seq.frames(), seq.intrinsics, cfg);
    EXPECT_EQ(r.stats.bundle_cost.normal_terms, 0);
    EXPECT_EQ(r.stats.tracking_cost.normal_terms, 0);
    EXPECT_GT(r.stats.bundle_cost.reprojection_terms, 0);

    const SequenceResult with = run_sequence(seq.frames(), seq.intrinsics, SolverConfig{});
    EXPECT_GT(with.stats.bundle_cost.normal_terms, 0);
    EXPECT_GT(with.stats.tracking_cost.normal_terms, 0);
}

TEST(Estimator, KeyframeGapNeverExceedsPolicy) {
    const SimulatedSequence seq = simulate(short_scene());
    const SequenceResult r = run_sequence(seq.frames(), seq.intrinsics, SolverConfig{});
    int gap = 0;
    for (const FrameEstimate& e : r.trajectory) {
        gap = e.keyframe ? 0 : gap + 1;
        EXPECT_LT(gap, SolverConfig{}.keyframes.max_frame_gap);
    }
    EXPECT_EQ(r.stats.keyframes, static_cast<int>(r.map.keyframes.size()));
}

TEST(Estimator, OldLandmarksAreRetired) {
    SceneConfig scene = noiseless(short_scene());
    scene.frame_count = 300;
    const SimulatedSequence seq = simulate(scene);
    SolverConfig cfg;
    cfg.landmark_retire_window = 5;
    const SequenceResult r = run_sequence(seq.frames(), seq.intrinsics, cfg);
    ASSERT_GT(r.map.keyframes.size(), 10u);
    auto it = r.map.keyframes.rbegin();
    std::advance(it, cfg.landmark_retire_window);
    for (const auto& [_, lm] : r.map.landmarks) EXPECT_GT(lm.observations.rbegin()->first, it->first);
}

TEST(Estimator, RejectsUnorderedFrames) {
    const SimulatedSequence seq = simulate(short_scene());
    std::vector<FrameInput> frames = {seq.frame(1), seq.frame(0)};
    EXPECT_THROW(run_sequence(frames, seq.intrinsics, SolverConfig{}), Error);
}

TEST(Estimator, EmptyFrameLosesTracking) {
    const SimulatedSequence seq = simulate(short_scene());
    VisualOdometry vo(seq.intrinsics, SolverConfig{});
    vo.process(seq.frame(0));
    FrameInput blank;
    blank.id = 1;
    blank.timestamp = seq.timestamps[1];
    EXPECT_THROW(vo.process(blank), TrackingLost);
}
