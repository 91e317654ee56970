#pragma once

// SE(3) kernel and the rectified stereo camera model.
//
// Conventions used throughout the library:
//  * A Pose maps world points into a camera frame: p_c = R * p_w + t.
//  * Twists are ordered (rho, phi): translational part first, rotational second.
//  * Pose increments are applied on the left: T <- exp(xi) * T.
//  * A stereo measurement is the 3-vector (uL, v, uR).

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "nvo/errors.hpp"

namespace nvo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

using Point3 = Vec3;
using Twist = Vec6;
/// (uL, v, uR) in pixels.
using StereoPixel = Vec3;

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kNearPiMargin = 1e-6;
inline constexpr double kDefaultMinDisparity = 0.5;

inline Mat3 skew(const Vec3& w) {
    Mat3 s;
    s << 0.0, -w.z(), w.y(),
         w.z(), 0.0, -w.x(),
         -w.y(), w.x(), 0.0;
    return s;
}

inline Vec3 vee(const Mat3& s) { return {s(2, 1), s(0, 2), s(1, 0)}; }

struct Intrinsics {
    double fx = 400.0;
    double fy = 400.0;
    double cx = 412.0;
    double cy = 224.5;
    double baseline = 0.05;  // meters

    [[nodiscard]] bool valid() const {
        return fx > 0.0 && fy > 0.0 && baseline > 0.0 && std::isfinite(cx) && std::isfinite(cy);
    }
};

namespace detail {

inline constexpr double kSeriesAngle = 0.1;

/// (1 - cos t) / t^2, written with the half angle so it never cancels.
inline double one_minus_cos_over_t2(double t) {
    if (t < kSmallAngle) return 0.5 - t * t / 24.0;
    const double s = std::sin(0.5 * t) / (0.5 * t);
    return 0.5 * s * s;
}

/// (t - sin t) / t^3.
inline double t_minus_sin_over_t3(double t) {
    if (t < kSeriesAngle) {
        const double t2 = t * t;
        return 1.0 / 6.0 - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 / 362880.0));
    }
    return (t - std::sin(t)) / (t * t * t);
}

/// (1 - (t/2) cot(t/2)) / t^2, the quadratic coefficient of the inverse left Jacobian.
inline double inverse_jacobian_coefficient(double t) {
    if (t < kSeriesAngle) {
        const double t2 = t * t;
        return 1.0 / 12.0 + t2 * (1.0 / 720.0 + t2 * (1.0 / 30240.0 + t2 / 1209600.0));
    }
    const double h = 0.5 * t;
    return (1.0 - h * std::cos(h) / std::sin(h)) / (t * t);
}

}  // namespace detail

/// Rotation about a unit axis, Rodrigues form. `phi` is the rotation vector.
inline Mat3 rotation_exp(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 w = skew(phi);
    const double a = theta < kSmallAngle ? 1.0 - theta * theta / 6.0 : std::sin(theta) / theta;
    return Mat3::Identity() + a * w + detail::one_minus_cos_over_t2(theta) * w * w;
}

struct RotationLog {
    Vec3 phi;
    bool near_pi = false;
};

inline RotationLog rotation_log(const Mat3& R) {
    const Vec3 axis_sin = 0.5 * vee(R - R.transpose());  // sin(theta) * axis
    const double s = axis_sin.norm();
    const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
    const double theta = std::atan2(s, c);

    RotationLog out;
    out.near_pi = theta > std::numbers::pi - kNearPiMargin;
    if (theta < kSmallAngle) {
        out.phi = axis_sin;  // first order; sin(theta) ~ theta
        return out;
    }
    if (theta < std::numbers::pi - 1e-3) {
        out.phi = (theta / s) * axis_sin;
        return out;
    }
    // Close to pi the antisymmetric part vanishes; read the axis off the
    // symmetric part, (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T.
    const Mat3 sym = 0.5 * (R + R.transpose()) - c * Mat3::Identity();
    Eigen::Index col = 0;
    sym.diagonal().maxCoeff(&col);
    Vec3 axis = sym.col(col).normalized();
    if (axis.dot(axis_sin) < 0.0) axis = -axis;
    out.phi = theta * axis;
    return out;
}

/// Left Jacobian of SO(3), the V matrix coupling translation in exp(xi).
inline Mat3 so3_left_jacobian(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 w = skew(phi);
    return Mat3::Identity() + detail::one_minus_cos_over_t2(theta) * w + detail::t_minus_sin_over_t3(theta) * w * w;
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 w = skew(phi);
    return Mat3::Identity() - 0.5 * w + detail::inverse_jacobian_coefficient(theta) * w * w;
}

class Pose {
public:
    Pose() : R_(Mat3::Identity()), t_(Vec3::Zero()) {}
    Pose(const Mat3& R, const Vec3& t) : R_(R), t_(t) {}

    static Pose identity() { return {}; }

    static Pose exp(const Twist& xi) {
        const Vec3 rho = xi.head<3>();
        const Vec3 phi = xi.tail<3>();
        return {rotation_exp(phi), so3_left_jacobian(phi) * rho};
    }

    struct LogResult {
        Twist xi;
        bool near_pi = false;
    };

    /// Inverse of exp. Rotations within 1e-6 of pi are flagged; the value is
    /// still computed through the symmetric-part branch.
    [[nodiscard]] LogResult log_checked() const {
        const RotationLog r = rotation_log(R_);
        LogResult out;
        out.xi.head<3>() = so3_left_jacobian_inverse(r.phi) * t_;
        out.xi.tail<3>() = r.phi;
        out.near_pi = r.near_pi;
        return out;
    }

    [[nodiscard]] Twist log() const { return log_checked().xi; }

    [[nodiscard]] Pose inverse() const {
        const Mat3 Rt = R_.transpose();
        return {Rt, -(Rt * t_)};
    }

    [[nodiscard]] Point3 operator*(const Point3& p) const { return R_ * p + t_; }
    [[nodiscard]] Pose operator*(const Pose& o) const { return {R_ * o.R_, R_ * o.t_ + t_}; }

    [[nodiscard]] const Mat3& rotation() const { return R_; }
    [[nodiscard]] const Vec3& translation() const { return t_; }
    Mat3& rotation() { return R_; }
    Vec3& translation() { return t_; }

    [[nodiscard]] Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(R_); }
    static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
        return {q.normalized().toRotationMatrix(), t};
    }

    /// Orthonormality and determinant within `tol`.
    [[nodiscard]] bool valid(double tol = 1e-9) const {
        const Mat3 e = R_.transpose() * R_ - Mat3::Identity();
        return e.cwiseAbs().maxCoeff() <= tol && std::abs(R_.determinant() - 1.0) <= tol && t_.allFinite();
    }

    /// Re-orthonormalizes R through a unit quaternion.
    void normalize() { R_ = Eigen::Quaterniond(R_).normalized().toRotationMatrix(); }

private:
    Mat3 R_;
    Vec3 t_;
};

inline Point3 transform_point(const Pose& pose, const Point3& p) { return pose * p; }

/// xi (+) T := exp(xi) * T.
inline Pose apply_update(const Twist& xi, const Pose& pose) { return Pose::exp(xi) * pose; }

/// Stereo projection of a camera-frame point.
inline StereoPixel project(const Intrinsics& K, const Point3& pc) {
    if (!(pc.z() > 0.0)) throw NonPositiveDepth(pc.z());
    const double inv_z = 1.0 / pc.z();
    return {K.fx * pc.x() * inv_z + K.cx,
            K.fy * pc.y() * inv_z + K.cy,
            K.fx * (pc.x() - K.baseline) * inv_z + K.cx};
}

/// Camera-frame point from a stereo measurement.
inline Point3 triangulate(const Intrinsics& K, const StereoPixel& obs, double min_disparity = kDefaultMinDisparity) {
    const double d = obs[0] - obs[2];
    if (!(d > min_disparity)) throw DegenerateDisparity(d, min_disparity);
    const double z = K.fx * K.baseline / d;
    return {(obs[0] - K.cx) * z / K.fx, (obs[1] - K.cy) * z / K.fy, z};
}

}  // namespace nvo
