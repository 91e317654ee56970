#pragma once

// Pose-only optimization of the current frame against fixed map landmarks,
// with an optional normal factor tying the camera attitude to the global
// normal.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "nvo/factors.hpp"
#include "nvo/levenberg_marquardt.hpp"
#include "nvo/map_state.hpp"
#include "nvo/solver_config.hpp"

namespace nvo {

class PoseOnlyProblem {
public:
    PoseOnlyProblem(const Intrinsics& K, const Pose& initial, const RobustLossConfig& loss)
        : K_(K), loss_(loss), pose_(initial), backup_(initial) {}

    void add_observation(const Point3& landmark, const StereoPixel& measured, double weight) {
        terms_.push_back({landmark, measured, weight});
    }

    void set_normal_factor(const Vec3& frame_normal, const Vec3& global_normal) {
        normal_ = NormalTerm{make_tangent_basis(frame_normal), frame_normal, global_normal};
    }

    [[nodiscard]] std::size_t size() const { return terms_.size(); }

    double linearize() {
        H_.setZero();
        g_.setZero();
        double cost = 0.0;
        for (const Term& term : terms_) {
            const Point3 pc = pose_ * term.landmark;
            if (!(pc.z() > 0.0)) continue;
            const Vec3 e = project(K_, pc) - term.measured;
            const HuberResult h = huber(std::sqrt(term.weight) * e.norm(), loss_.delta_reprojection);
            cost += h.cost;
            const Mat3 Jpix = stereo_projection_jacobian(K_, pc);
            Mat36 J;
            J.leftCols<3>() = Jpix;
            J.rightCols<3>() = -Jpix * skew(pc);
            const double w = h.weight * term.weight;
            H_.noalias() += w * J.transpose() * J;
            g_.noalias() += w * J.transpose() * e;
        }
        if (normal_ && loss_.normal_weight > 0.0) {
            const Eigen::Vector2d e = normal_residual(normal_->basis, pose_.rotation(), normal_->global, normal_->frame);
            const HuberResult h = huber(std::sqrt(loss_.normal_weight) * e.norm(), loss_.delta_normal);
            cost += h.cost;
            const NormalJacobians J = normal_jacobians(normal_->basis, pose_.rotation(), normal_->global);
            const double w = h.weight * loss_.normal_weight;
            H_.noalias() += w * J.d_pose.transpose() * J.d_pose;
            g_.noalias() += w * J.d_pose.transpose() * e;
        }
        return cost;
    }

    double solve(double mu) {
        Mat6 A = H_;
        for (int i = 0; i < 6; ++i) A(i, i) += mu * std::max(A(i, i), 1e-9);
        const Eigen::LDLT<Mat6> ldlt(A);
        if (ldlt.info() != Eigen::Success) return NAN;
        step_ = -ldlt.solve(g_);
        return step_.allFinite() ? step_.norm() : NAN;
    }

    void apply_step() {
        backup_ = pose_;
        pose_ = apply_update(step_, pose_);
    }

    void revert_step() { pose_ = backup_; }

    [[nodiscard]] double cost() const { return breakdown().total(); }

    [[nodiscard]] CostBreakdown breakdown() const {
        CostBreakdown out;
        for (const Term& term : terms_) {
            const Point3 pc = pose_ * term.landmark;
            if (!(pc.z() > 0.0)) continue;
            const Vec3 e = project(K_, pc) - term.measured;
            out.reprojection += huber(std::sqrt(term.weight) * e.norm(), loss_.delta_reprojection).cost;
            ++out.reprojection_terms;
        }
        if (normal_ && loss_.normal_weight > 0.0) {
            const Eigen::Vector2d e = normal_residual(normal_->basis, pose_.rotation(), normal_->global, normal_->frame);
            out.normal = huber(std::sqrt(loss_.normal_weight) * e.norm(), loss_.delta_normal).cost;
            out.normal_terms = 1;
        }
        return out;
    }

    /// Whitened squared reprojection error of term `i`; +inf behind the camera.
    [[nodiscard]] double chi2(std::size_t i) const {
        const Term& term = terms_[i];
        const Point3 pc = pose_ * term.landmark;
        if (!(pc.z() > 0.0)) return INFINITY;
        return term.weight * (project(K_, pc) - term.measured).squaredNorm();
    }

    [[nodiscard]] const Pose& pose() const { return pose_; }

private:
    struct Term {
        Point3 landmark;
        StereoPixel measured;
        double weight;
    };
    struct NormalTerm {
        TangentBasis basis;
        Vec3 frame;
        Vec3 global;
    };

    Intrinsics K_;
    RobustLossConfig loss_;
    std::vector<Term> terms_;
    std::optional<NormalTerm> normal_;
    Pose pose_;
    Pose backup_;
    Mat6 H_ = Mat6::Zero();
    Vec6 g_ = Vec6::Zero();
    Vec6 step_ = Vec6::Zero();
};

struct MatchedObservation {
    std::size_t input_index = 0;  // into FrameInput::observations
    LandmarkId landmark = 0;
    bool inlier = true;
    bool established = false;  // landmark already observed by two or more keyframes
};

struct TrackingResult {
    Pose pose;
    std::vector<MatchedObservation> matched;
    int inliers = 0;
    LmSummary summary;
    CostBreakdown cost;
};

/// Constant-velocity prediction (T_{k-1} T_{k-2}^-1) T_{k-1}; falls back to
/// the last pose, or identity for the very first frame.
inline Pose predict_pose(const std::optional<Pose>& last, const std::optional<Pose>& before_last) {
    if (!last) return Pose::identity();
    if (!before_last) return *last;
    Pose predicted = (*last * before_last->inverse()) * *last;
    predicted.normalize();
    return predicted;
}

/// Pose-only damped Gauss-Newton of one frame against the map, with one
/// chi-square rejection pass followed by re-optimization on the inliers.
/// Throws TrackingLost when fewer than the configured minimum of matched
/// observations exist or too few survive rejection.
inline TrackingResult track_frame(const MapState& map, const Intrinsics& K, const FrameInput& frame,
                                  const Pose& initial, const SolverConfig& cfg) {
    TrackingResult result;
    for (std::size_t i = 0; i < frame.observations.size(); ++i) {
        if (const auto lm = map.landmark_for_track(frame.observations[i].track_id)) {
            result.matched.push_back({i, *lm, true, map.landmarks.at(*lm).observations.size() >= 2});
        }
    }
    const int matched = static_cast<int>(result.matched.size());
    if (matched < cfg.min_tracking_observations) {
        throw TrackingLost(frame.id, std::to_string(matched) + " observations of mapped landmarks");
    }

    const bool use_normal =
        cfg.normals_enabled() && cfg.normal_in_tracking && frame.has_normal && map.has_global_normal;
    const double weight = cfg.observation_weight();

    auto build = [&](const Pose& start) {
        PoseOnlyProblem problem(K, start, cfg.loss);
        for (const MatchedObservation& m : result.matched) {
            if (!m.inlier) continue;
            problem.add_observation(map.landmarks.at(m.landmark).position, frame.observations[m.input_index].pixel,
                                    weight);
        }
        if (use_normal) problem.set_normal_factor(frame.normal, map.global_normal);
        return problem;
    };

    auto classify = [&](const Pose& pose) {
        PoseOnlyProblem probe(K, pose, cfg.loss);
        for (const MatchedObservation& m : result.matched) {
            probe.add_observation(map.landmarks.at(m.landmark).position, frame.observations[m.input_index].pixel,
                                  weight);
        }
        int inliers = 0;
        for (std::size_t i = 0; i < result.matched.size(); ++i) {
            result.matched[i].inlier = probe.chi2(i) <= cfg.chi2_threshold;
            inliers += result.matched[i].inlier ? 1 : 0;
        }
        return inliers;
    };

    PoseOnlyProblem first = build(initial);
    levenberg_marquardt(first, cfg.lm);
    Pose pose = first.pose();
    if (classify(pose) >= cfg.min_tracking_observations) {
        PoseOnlyProblem second = build(pose);
        result.summary = levenberg_marquardt(second, cfg.lm);
        pose = second.pose();
        result.cost = second.breakdown();
    }
    pose.normalize();
    result.pose = pose;
    result.inliers = classify(pose);

    // Landmarks seen from a single keyframe carry the full stereo depth
    // uncertainty and are excluded from the ratio once enough others exist.
    int considered = 0;
    int considered_inliers = 0;
    for (const MatchedObservation& m : result.matched) {
        if (!m.established) continue;
        ++considered;
        considered_inliers += m.inlier ? 1 : 0;
    }
    if (considered < cfg.min_tracking_observations) {
        considered = matched;
        considered_inliers = result.inliers;
    }
    if (result.inliers < cfg.min_tracking_observations ||
        considered_inliers < cfg.min_tracking_inlier_ratio * static_cast<double>(considered)) {
        throw TrackingLost(frame.id, std::to_string(considered_inliers) + " of " + std::to_string(considered) +
                                         " observations are inliers");
    }
    return result;
}

/// Keyframe when the tracked inliers fall below a fraction of the last
/// keyframe's reference count, or after a maximum number of frames.
inline bool select_keyframe(const KeyframePolicy& policy, int frames_since_keyframe, int inliers,
                            int reference_inliers) {
    if (frames_since_keyframe >= policy.max_frame_gap) return true;
    return static_cast<double>(inliers) < policy.min_inlier_ratio * static_cast<double>(reference_inliers);
}

}  // namespace nvo
