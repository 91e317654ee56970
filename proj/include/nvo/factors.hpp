#pragma once

// Residuals, robust loss and analytic Jacobians for the two factor types
// combined in pose tracking and bundle adjustment:
//
//   reprojection  e = pi(R p + t) - (uL, v, uR)                      (3-vector)
//   normal        e = B_k (R n_w / |n_w| - n_k)                       (2-vector)
//
// B_k spans the tangential plane of the measured frame normal n_k. It is
// built once per keyframe and held constant while the pose is optimized.

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "nvo/geometry.hpp"

namespace nvo {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// 95% chi-square quantiles for 3 and 2 degrees of freedom.
inline constexpr double kChi2Threshold3Dof = 7.815;
inline constexpr double kChi2Threshold2Dof = 5.991;

using FrameId = std::int64_t;
using LandmarkId = std::int64_t;

struct StereoObservation {
    FrameId frame_id = 0;
    LandmarkId landmark_id = 0;
    StereoPixel pixel = StereoPixel::Zero();  // (uL, v, uR)
    double weight = 1.0;                      // 1 / sigma_px^2
};

struct RobustLossConfig {
    double delta_reprojection = std::sqrt(kChi2Threshold3Dof);
    double delta_normal = std::sqrt(kChi2Threshold2Dof);
    double normal_weight = 1e4;  // lambda

    [[nodiscard]] bool valid() const {
        return delta_reprojection > 0.0 && delta_normal > 0.0 && normal_weight >= 0.0;
    }
};

// ---------------------------------------------------------------------------
// Robust loss

struct HuberResult {
    double cost;
    double weight;  // rho'(r) / (2 r), 1 at r = 0
};

/// rho(r) = r^2 inside [-delta, delta], 2 delta |r| - delta^2 outside.
inline HuberResult huber(double r, double delta) {
    const double a = std::abs(r);
    if (a <= delta) return {a * a, 1.0};
    return {2.0 * delta * a - delta * delta, delta / a};
}

// ---------------------------------------------------------------------------
// Reprojection factor

/// d pi / d p_c at a camera-frame point.
inline Mat3 stereo_projection_jacobian(const Intrinsics& K, const Point3& pc) {
    if (!(pc.z() > 0.0)) throw NonPositiveDepth(pc.z());
    const double iz = 1.0 / pc.z();
    const double iz2 = iz * iz;
    Mat3 J;
    J << K.fx * iz, 0.0, -K.fx * pc.x() * iz2,
         0.0, K.fy * iz, -K.fy * pc.y() * iz2,
         K.fx * iz, 0.0, -K.fx * (pc.x() - K.baseline) * iz2;
    return J;
}

inline Vec3 reprojection_residual(const Intrinsics& K, const Pose& pose, const Point3& p, const StereoPixel& measured) {
    return project(K, pose * p) - measured;
}

inline Vec3 reprojection_residual(const Intrinsics& K, const Pose& pose, const Point3& p, const StereoObservation& obs) {
    return reprojection_residual(K, pose, p, obs.pixel);
}

struct ReprojectionJacobians {
    Mat36 d_pose;      // wrt the left-multiplied twist (rho, phi) at xi = 0
    Mat3 d_landmark;   // wrt the world point
};

inline ReprojectionJacobians reprojection_jacobians(const Intrinsics& K, const Pose& pose, const Point3& p) {
    const Point3 pc = pose * p;
    const Mat3 Jpix = stereo_projection_jacobian(K, pc);
    ReprojectionJacobians J;
    // exp(xi) p_c ~ p_c + rho + phi x p_c
    J.d_pose.leftCols<3>() = Jpix;
    J.d_pose.rightCols<3>() = -Jpix * skew(pc);
    J.d_landmark = Jpix * pose.rotation();
    return J;
}

// ---------------------------------------------------------------------------
// Normal factor

struct TangentBasis {
    Mat23 rows = Mat23::Zero();  // b0 and b1 as rows

    [[nodiscard]] Vec3 b0() const { return rows.row(0).transpose(); }
    [[nodiscard]] Vec3 b1() const { return rows.row(1).transpose(); }
};

/// Tangent-plane basis of a unit normal. The helper vector is (1,0,0) unless
/// the normal is within ~25 degrees of it, then (0,1,0).
inline TangentBasis make_tangent_basis(const Vec3& n) {
    const Vec3 seed = std::abs(n.x()) > 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    const Vec3 b0 = n.cross(seed).normalized();
    const Vec3 b1 = n.cross(b0).normalized();
    TangentBasis B;
    B.rows.row(0) = b0.transpose();
    B.rows.row(1) = b1.transpose();
    return B;
}

inline Eigen::Vector2d normal_residual(const TangentBasis& B, const Mat3& R, const Vec3& global_normal,
                                       const Vec3& frame_normal) {
    return B.rows * (R * global_normal.normalized() - frame_normal);
}

struct NormalJacobians {
    Mat26 d_pose;      // translation columns are zero
    Mat23 d_rotation;  // same as d_pose.rightCols<3>()
    Mat23 d_global_normal;
};

inline NormalJacobians normal_jacobians(const TangentBasis& B, const Mat3& R, const Vec3& global_normal) {
    const double len = global_normal.norm();
    const Vec3 n_hat = global_normal / len;
    NormalJacobians J;
    J.d_rotation = -B.rows * skew(R * n_hat);
    J.d_pose.leftCols<3>().setZero();
    J.d_pose.rightCols<3>() = J.d_rotation;
    J.d_global_normal = B.rows * R * (Mat3::Identity() - n_hat * n_hat.transpose()) / len;
    return J;
}

}  // namespace nvo
