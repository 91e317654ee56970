#include <gtest/gtest.h>

#include <random>

#include <Eigen/SVD>

#include "nvo/factors.hpp"
#include "test_support.hpp"

using namespace nvo;
using nvo::testing::random_pose;
using nvo::testing::random_unit;
using nvo::testing::random_vector;
using nvo::testing::relative_error;

namespace {

constexpr double kStep = 1e-6;

Mat36 numeric_pose_jacobian(const Intrinsics& K, const Pose& T, const Point3& p) {
    Mat36 J;
    for (int i = 0; i < 6; ++i) {
        Twist d = Twist::Zero();
        d[i] = kStep;
        J.col(i) = (project(K, apply_update(d, T) * p) - project(K, apply_update(-d, T) * p)) / (2.0 * kStep);
    }
    return J;
}

Mat3 numeric_point_jacobian(const Intrinsics& K, const Pose& T, const Point3& p) {
    Mat3 J;
    for (int i = 0; i < 3; ++i) {
        Vec3 d = Vec3::Zero();
        d[i] = kStep;
        J.col(i) = (project(K, T * (p + d)) - project(K, T * (p - d))) / (2.0 * kStep);
    }
    return J;
}

/// A pose and a world point that lands in front of the camera.
std::pair<Pose, Point3> random_visible_configuration(std::mt19937_64& rng) {
    const Pose T = random_pose(rng, 3.0, 3.0);
    std::uniform_real_distribution<double> depth(1.0, 20.0);
    std::uniform_real_distribution<double> lateral(-0.8, 0.8);
    const double z = depth(rng);
    const Point3 pc(lateral(rng) * z, lateral(rng) * z, z);
    return {T, T.inverse() * pc};
}

}  // namespace

TEST(Huber, QuadraticInsideLinearOutside) {
    const double d = 2.0;
    EXPECT_DOUBLE_EQ(huber(1.5, d).cost, 2.25);
    EXPECT_DOUBLE_EQ(huber(1.5, d).weight, 1.0);
    EXPECT_DOUBLE_EQ(huber(-3.0, d).cost, 2.0 * d * 3.0 - d * d);
    EXPECT_DOUBLE_EQ(huber(3.0, d).weight, d / 3.0);
    EXPECT_DOUBLE_EQ(huber(d, d).cost, d * d);
    EXPECT_DOUBLE_EQ(huber(0.0, d).weight, 1.0);
}

TEST(Huber, ContinuousDerivativeAtThreshold) {
    const double d = std::sqrt(kChi2Threshold3Dof);
    const double h = 1e-7;
    const double left = (huber(d, d).cost - huber(d - h, d).cost) / h;
    const double right = (huber(d + h, d).cost - huber(d, d).cost) / h;
    EXPECT_NEAR(left, right, 1e-5);
}

TEST(RobustLossConfig, Defaults) {
    const RobustLossConfig c;
    EXPECT_DOUBLE_EQ(c.delta_reprojection * c.delta_reprojection, 7.815);
    EXPECT_DOUBLE_EQ(c.delta_normal * c.delta_normal, 5.991);
    EXPECT_DOUBLE_EQ(c.normal_weight, 1e4);
    EXPECT_TRUE(c.valid());
}

TEST(ReprojectionFactor, ZeroAtTruth) {
    std::mt19937_64 rng(10);
    const Intrinsics K;
    const auto [T, p] = random_visible_configuration(rng);
    const StereoPixel measured = project(K, T * p);
    EXPECT_TRUE(reprojection_residual(K, T, p, measured).isZero(0.0));
}

TEST(ReprojectionFactor, JacobiansMatchFiniteDifferences) {
    std::mt19937_64 rng(11);
    const Intrinsics K;
    for (int i = 0; i < 300; ++i) {
        const auto [T, p] = random_visible_configuration(rng);
        const ReprojectionJacobians J = reprojection_jacobians(K, T, p);
        EXPECT_LE(relative_error(J.d_pose, numeric_pose_jacobian(K, T, p)), 1e-5);
        EXPECT_LE(relative_error(J.d_landmark, numeric_point_jacobian(K, T, p)), 1e-5);
    }
}

TEST(ReprojectionFactor, JacobianRejectsPointBehindCamera) {
    const Intrinsics K;
    EXPECT_THROW(reprojection_jacobians(K, Pose::identity(), Point3(0.0, 0.0, -1.0)), NonPositiveDepth);
}

TEST(TangentBasis, OrthonormalAndOrthogonalToNormal) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 n = random_unit(rng);
        const TangentBasis B = make_tangent_basis(n);
        EXPECT_TRUE((B.rows * B.rows.transpose()).isIdentity(1e-12));
        EXPECT_LE((B.rows * n).norm(), 1e-12);
    }
}

TEST(TangentBasis, SeedSwitchesNearXAxis) {
    const TangentBasis a = make_tangent_basis(Vec3::UnitX());
    EXPECT_TRUE((a.rows * a.rows.transpose()).isIdentity(1e-12));
    EXPECT_LE((a.rows * Vec3::UnitX()).norm(), 1e-15);
    const TangentBasis b = make_tangent_basis(Vec3(-0.95, 0.3122499, 0.0).normalized());
    EXPECT_TRUE((b.rows * b.rows.transpose()).isIdentity(1e-12));
}

TEST(NormalFactor, ZeroWhenAligned) {
    std::mt19937_64 rng(13);
    const Pose T = random_pose(rng);
    const Vec3 nw = random_unit(rng);
    const Vec3 nk = T.rotation() * nw;
    EXPECT_LE(normal_residual(make_tangent_basis(nk), T.rotation(), nw, nk).norm(), 1e-15);
}

TEST(NormalFactor, ScaleInvariantInGlobalNormal) {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int i = 0; i < 500; ++i) {
        const Pose T = random_pose(rng);
        const Vec3 nw = random_unit(rng);
        const Vec3 nk = random_unit(rng);
        const TangentBasis B = make_tangent_basis(nk);
        const Eigen::Vector2d a = normal_residual(B, T.rotation(), nw, nk);
        const Eigen::Vector2d b = normal_residual(B, T.rotation(), scale(rng) * nw, nk);
        EXPECT_LE((a - b).norm(), 1e-12);
    }
}

TEST(NormalFactor, AnnihilatesComponentAlongFrameNormal) {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 500; ++i) {
        const Vec3 nk = random_unit(rng);
        const TangentBasis B = make_tangent_basis(nk);
        const Vec3 v = random_vector(rng, 1.0);
        EXPECT_LE((B.rows * (v + u(rng) * nk) - B.rows * v).norm(), 1e-12);
    }
}

TEST(NormalFactor, JacobiansMatchFiniteDifferences) {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> len(0.5, 2.0);
    for (int i = 0; i < 300; ++i) {
        const Pose T = random_pose(rng);
        const Vec3 nw = len(rng) * random_unit(rng);
        const Vec3 nk = random_unit(rng);
        const TangentBasis B = make_tangent_basis(nk);
        const NormalJacobians J = normal_jacobians(B, T.rotation(), nw);

        Mat26 num_pose;
        for (int k = 0; k < 6; ++k) {
            Twist d = Twist::Zero();
            d[k] = kStep;
            num_pose.col(k) = (normal_residual(B, apply_update(d, T).rotation(), nw, nk) -
                               normal_residual(B, apply_update(-d, T).rotation(), nw, nk)) /
                              (2.0 * kStep);
        }
        Mat23 num_normal;
        for (int k = 0; k < 3; ++k) {
            Vec3 d = Vec3::Zero();
            d[k] = kStep;
            num_normal.col(k) = (normal_residual(B, T.rotation(), nw + d, nk) -
                                 normal_residual(B, T.rotation(), nw - d, nk)) /
                                (2.0 * kStep);
        }
        EXPECT_LE(relative_error(J.d_pose, num_pose), 1e-5);
        EXPECT_TRUE(J.d_pose.leftCols<3>().isZero(0.0));
        EXPECT_LE(relative_error(J.d_global_normal, num_normal), 1e-5);
    }
}

TEST(NormalFactor, GlobalNormalJacobianHasRankTwo) {
    std::mt19937_64 rng(17);
    const Pose T = random_pose(rng);
    const Vec3 nw = random_unit(rng);
    const NormalJacobians J = normal_jacobians(make_tangent_basis(random_unit(rng)), T.rotation(), nw);
    const Eigen::JacobiSVD<Mat23> svd(J.d_global_normal);
    EXPECT_GT(svd.singularValues()[1], 1e-6);
    EXPECT_LE((J.d_global_normal * nw).norm(), 1e-12);
}
