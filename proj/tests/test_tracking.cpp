#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "nvo/tracking.hpp"
#include "test_support.hpp"

using namespace nvo;

namespace {

struct TrackingFixture {
    Intrinsics K;
    MapState map;
    FrameInput frame;
    Pose truth;
};

/// A ground patch seen from two keyframes plus a current frame rendered
/// without noise from `truth`.
TrackingFixture make_fixture(int landmarks, std::uint64_t seed) {
    TrackingFixture f;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-4.0, 4.0);
    std::uniform_real_distribution<double> uy(-2.5, 2.5);
    std::normal_distribution<double> dz(0.0, 0.05);

    const Pose kf0 = Pose::identity();
    const Pose kf1(rotation_exp(Vec3(0.0, 0.01, 0.0)), Vec3(-0.3, 0.0, 0.0));
    f.truth = Pose(rotation_exp(Vec3(0.01, -0.02, 0.015)), Vec3(-0.6, 0.05, 0.02));
    Keyframe a;
    a.id = 0;
    a.pose = kf0;
    f.map.add_keyframe(a);
    Keyframe b;
    b.id = 1;
    b.pose = kf1;
    f.map.add_keyframe(b);

    f.frame.id = 2;
    for (int i = 0; i < landmarks; ++i) {
        const Point3 p(ux(rng), uy(rng), 5.0 + dz(rng));
        const LandmarkId l = f.map.add_landmark(p, i);
        f.map.add_observation(0, l, project(f.K, kf0 * p), 1.0);
        f.map.add_observation(1, l, project(f.K, kf1 * p), 1.0);
        f.frame.observations.push_back({i, project(f.K, f.truth * p)});
    }
    f.frame.normal = f.truth.rotation() * Vec3(0.0, 0.0, -1.0);
    f.frame.has_normal = true;
    f.map.global_normal = Vec3(0.0, 0.0, -1.0);
    f.map.has_global_normal = true;
    return f;
}

Pose perturb(const Pose& T, double norm, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Twist xi;
    xi.head<3>() = nvo::testing::random_unit(rng);
    xi.tail<3>() = nvo::testing::random_unit(rng);
    xi *= norm / xi.norm();
    return apply_update(xi, T);
}

double pose_distance(const Pose& a, const Pose& b) { return (a.inverse() * b).log().norm(); }

}  // namespace

TEST(Tracking, RecoversNoiselessPose) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TrackingFixture f = make_fixture(120, seed);
        const TrackingResult r = track_frame(f.map, f.K, f.frame, perturb(f.truth, 0.05, seed), SolverConfig{});
        EXPECT_LE(pose_distance(r.pose, f.truth), 1e-6);
        EXPECT_EQ(r.inliers, 120);
        EXPECT_EQ(r.cost.normal_terms, 1);
    }
}

TEST(Tracking, RecoversPoseWithoutNormalFactor) {
    TrackingFixture f = make_fixture(80, 9);
    SolverConfig cfg;
    cfg.loss.normal_weight = 0.0;
    const TrackingResult r = track_frame(f.map, f.K, f.frame, perturb(f.truth, 0.05, 9), cfg);
    EXPECT_LE(pose_distance(r.pose, f.truth), 1e-6);
    EXPECT_EQ(r.cost.normal_terms, 0);
}

TEST(Tracking, FlagsGrossOutliers) {
    TrackingFixture f = make_fixture(100, 3);
    for (int i = 0; i < 10; ++i) f.frame.observations[static_cast<std::size_t>(i) * 10].pixel += StereoPixel(40, -30, 40);
    const TrackingResult r = track_frame(f.map, f.K, f.frame, f.truth, SolverConfig{});
    EXPECT_EQ(r.inliers, 90);
    for (const MatchedObservation& m : r.matched) EXPECT_EQ(m.inlier, m.input_index % 10 != 0);
    EXPECT_LE(pose_distance(r.pose, f.truth), 1e-6);
}

TEST(Tracking, LostWhenTooFewMatches) {
    TrackingFixture f = make_fixture(5, 4);
    EXPECT_THROW(track_frame(f.map, f.K, f.frame, f.truth, SolverConfig{}), TrackingLost);
    FrameInput empty;
    empty.id = 3;
    try {
        track_frame(f.map, f.K, empty, f.truth, SolverConfig{});
        FAIL() << "expected TrackingLost";
    } catch (const TrackingLost& e) {
        EXPECT_EQ(e.frame_id, 3);
    }
}

TEST(Tracking, LostWhenMostObservationsAreWrong) {
    TrackingFixture f = make_fixture(60, 5);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-150.0, 150.0);
    for (std::size_t i = 0; i < 45; ++i) {
        const double du = u(rng);
        f.frame.observations[i].pixel += StereoPixel(du, u(rng), du);
    }
    EXPECT_THROW(track_frame(f.map, f.K, f.frame, f.truth, SolverConfig{}), TrackingLost);
}

TEST(Tracking, UnknownTracksAreNotMatched) {
    TrackingFixture f = make_fixture(50, 6);
    f.frame.observations.push_back({9999, StereoPixel(100.0, 100.0, 90.0)});
    const TrackingResult r = track_frame(f.map, f.K, f.frame, f.truth, SolverConfig{});
    EXPECT_EQ(r.matched.size(), 50u);
}

TEST(Tracking, ConstantVelocityPrediction) {
    EXPECT_TRUE(predict_pose(std::nullopt, std::nullopt).rotation().isIdentity(0.0));
    const Pose a(rotation_exp(Vec3(0.0, 0.0, 0.1)), Vec3(1.0, 0.0, 0.0));
    const Pose b(rotation_exp(Vec3(0.0, 0.0, 0.2)), Vec3(2.0, 0.5, 0.0));
    EXPECT_TRUE(predict_pose(a, std::nullopt).translation().isApprox(a.translation()));
    const Pose p = predict_pose(b, a);
    const Pose expected = (b * a.inverse()) * b;
    EXPECT_LE(pose_distance(p, expected), 1e-12);
}

TEST(KeyframePolicy, Selection) {
    const KeyframePolicy policy;
    EXPECT_FALSE(select_keyframe(policy, 1, 100, 100));
    EXPECT_TRUE(select_keyframe(policy, 1, 80, 100));
    EXPECT_FALSE(select_keyframe(policy, 2, 90, 100));
    EXPECT_TRUE(select_keyframe(policy, 2, 89, 100));
    EXPECT_TRUE(select_keyframe(policy, 5, 100, 100));
    EXPECT_FALSE(select_keyframe(policy, 4, 100, 100));
}

TEST(Tracking, TwoHundredObservationsWithinBudget) {
    TrackingFixture f = make_fixture(200, 7);
    const Pose start = perturb(f.truth, 0.01, 7);
    const auto t0 = std::chrono::steady_clock::now();
    const int runs = 20;
    for (int i = 0; i < runs; ++i) track_frame(f.map, f.K, f.frame, start, SolverConfig{});
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / runs;
    EXPECT_LT(ms, 100.0);
}
