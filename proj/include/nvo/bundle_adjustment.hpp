#pragma once

// Local bundle adjustment over keyframe poses, landmarks and (during
// initialization) the global normal. Landmarks are eliminated through the
// Schur complement; the reduced camera system is dense.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "nvo/factors.hpp"
#include "nvo/levenberg_marquardt.hpp"
#include "nvo/map_state.hpp"
#include "nvo/solver_config.hpp"

namespace nvo {

/// Removes every observation in `scope` whose whitened squared residual
/// exceeds `threshold` (or whose landmark falls behind the camera). Landmarks
/// left without observations are deleted. Returns the number removed.
inline int reject_outliers(MapState& map, const Intrinsics& K, const std::vector<ObservationId>& scope,
                           double threshold) {
    std::vector<ObservationId> doomed;
    for (ObservationId id : scope) {
        const auto it = map.observations.find(id);
        if (it == map.observations.end()) continue;
        const StereoObservation& obs = it->second;
        const Point3 pc = map.keyframes.at(obs.frame_id).pose * map.landmarks.at(obs.landmark_id).position;
        if (!(pc.z() > 0.0) || obs.weight * (project(K, pc) - obs.pixel).squaredNorm() > threshold) {
            doomed.push_back(id);
        }
    }
    for (ObservationId id : doomed) map.remove_observation(id);
    return static_cast<int>(doomed.size());
}

/// All observations currently in the map.
inline std::vector<ObservationId> all_observations(const MapState& map) {
    std::vector<ObservationId> ids;
    ids.reserve(map.observations.size());
    for (const auto& [id, _] : map.observations) ids.push_back(id);
    return ids;
}

class BundleProblem {
public:
    struct Selection {
        std::vector<KeyframeId> local;  // optimized unless gauge-fixed; carry normal factors
        std::vector<KeyframeId> fixed;  // observe local landmarks, held constant
        std::vector<LandmarkId> landmarks;
        KeyframeId gauge = 0;
        bool optimize_global_normal = false;
    };

    BundleProblem(const MapState& map, const Intrinsics& K, const Selection& sel, const SolverConfig& cfg)
        : K_(K), loss_(cfg.loss), optimize_normal_(sel.optimize_global_normal) {
        std::map<KeyframeId, int> pose_index;
        auto add_pose = [&](KeyframeId id, bool optimizable, bool with_normal) {
            const Keyframe& kf = map.keyframes.at(id);
            PoseBlock block;
            block.id = id;
            block.pose = kf.pose;
            if (optimizable) block.param = num_pose_params_++;
            block.normal = with_normal && kf.has_normal && loss_.normal_weight > 0.0;
            block.basis = kf.basis;
            block.frame_normal = kf.normal;
            pose_index[id] = static_cast<int>(poses_.size());
            poses_.push_back(block);
        };
        for (KeyframeId id : sel.local) add_pose(id, id != sel.gauge, true);
        for (KeyframeId id : sel.fixed) add_pose(id, false, false);

        global_normal_ = map.global_normal;
        if (!map.has_global_normal || loss_.normal_weight <= 0.0) {
            optimize_normal_ = false;
            for (PoseBlock& p : poses_) p.normal = false;
        }
        reduced_dim_ = 6 * num_pose_params_ + (optimize_normal_ ? 3 : 0);

        for (LandmarkId lid : sel.landmarks) {
            const Landmark& lm = map.landmarks.at(lid);
            PointBlock point;
            point.id = lid;
            point.position = lm.position;
            point.first_obs = static_cast<int>(obs_.size());
            for (const auto& [kf_id, oid] : lm.observations) {
                const auto p = pose_index.find(kf_id);
                if (p == pose_index.end()) continue;
                const StereoObservation& o = map.observations.at(oid);
                obs_.push_back({oid, p->second, static_cast<int>(points_.size()), o.pixel, o.weight});
            }
            point.end_obs = static_cast<int>(obs_.size());
            points_.push_back(point);
        }
        W_.resize(obs_.size());
        Hll_.resize(points_.size());
        gl_.resize(points_.size());
        dl_.resize(points_.size());
    }

    double linearize() {
        Hcc_.setZero(reduced_dim_, reduced_dim_);
        gc_.setZero(reduced_dim_);
        double cost = 0.0;
        const double sqrt_lambda = std::sqrt(loss_.normal_weight);

        for (std::size_t l = 0; l < points_.size(); ++l) {
            const PointBlock& point = points_[l];
            Mat3 H = Mat3::Zero();
            Vec3 g = Vec3::Zero();
            for (int k = point.first_obs; k < point.end_obs; ++k) {
                ObsTerm& o = obs_[k];
                const PoseBlock& pose = poses_[o.pose];
                const Point3 pc = pose.pose * point.position;
                o.valid = pc.z() > 0.0;
                if (!o.valid) continue;
                const Vec3 e = project(K_, pc) - o.measured;
                const HuberResult h = huber(std::sqrt(o.weight) * e.norm(), loss_.delta_reprojection);
                cost += h.cost;
                const double w = h.weight * o.weight;
                const Mat3 Jpix = stereo_projection_jacobian(K_, pc);
                const Mat3 Jp = Jpix * pose.pose.rotation();
                H.noalias() += w * Jp.transpose() * Jp;
                g.noalias() += w * Jp.transpose() * e;
                if (pose.param >= 0) {
                    Mat36 Jx;
                    Jx.leftCols<3>() = Jpix;
                    Jx.rightCols<3>() = -Jpix * skew(pc);
                    const int c = 6 * pose.param;
                    Hcc_.block<6, 6>(c, c).noalias() += w * Jx.transpose() * Jx;
                    gc_.segment<6>(c).noalias() += w * Jx.transpose() * e;
                    W_[k].noalias() = w * Jx.transpose() * Jp;
                }
            }
            Hll_[l] = H;
            gl_[l] = g;
        }

        const int n = 6 * num_pose_params_;
        for (const PoseBlock& pose : poses_) {
            if (!pose.normal) continue;
            const Eigen::Vector2d e = normal_residual(pose.basis, pose.pose.rotation(), global_normal_, pose.frame_normal);
            const HuberResult h = huber(sqrt_lambda * e.norm(), loss_.delta_normal);
            cost += h.cost;
            if (pose.param < 0 && !optimize_normal_) continue;
            const NormalJacobians J = normal_jacobians(pose.basis, pose.pose.rotation(), global_normal_);
            const double w = h.weight * loss_.normal_weight;
            if (pose.param >= 0) {
                const int c = 6 * pose.param + 3;
                Hcc_.block<3, 3>(c, c).noalias() += w * J.d_rotation.transpose() * J.d_rotation;
                gc_.segment<3>(c).noalias() += w * J.d_rotation.transpose() * e;
                if (optimize_normal_) {
                    const Mat3 cross = w * J.d_global_normal.transpose() * J.d_rotation;
                    Hcc_.block<3, 3>(n, c) += cross;
                    Hcc_.block<3, 3>(c, n) += cross.transpose();
                }
            }
            if (optimize_normal_) {
                Hcc_.block<3, 3>(n, n).noalias() += w * J.d_global_normal.transpose() * J.d_global_normal;
                gc_.segment<3>(n).noalias() += w * J.d_global_normal.transpose() * e;
            }
        }
        return cost;
    }

    double solve(double mu) {
        Eigen::MatrixXd S = Hcc_;
        Eigen::VectorXd rhs = -gc_;
        for (int i = 0; i < reduced_dim_; ++i) S(i, i) += mu * std::max(S(i, i), 1e-9);

        Hll_inv_.resize(points_.size());
        std::vector<int> params;
        std::vector<Eigen::Matrix<double, 6, 3>> V;
        for (std::size_t l = 0; l < points_.size(); ++l) {
            Mat3 H = Hll_[l];
            for (int i = 0; i < 3; ++i) H(i, i) += mu * std::max(H(i, i), 1e-9);
            // A landmark whose block is numerically singular (no valid
            // observation, or effectively at infinity) is held in place.
            const Eigen::LDLT<Mat3> block(H);
            const double scale = H.diagonal().maxCoeff();
            if (block.info() != Eigen::Success || !(block.vectorD().minCoeff() > 1e-12 * scale)) {
                Hll_inv_[l].setZero();
                continue;
            }
            Hll_inv_[l] = block.solve(Mat3::Identity());

            const PointBlock& point = points_[l];
            params.clear();
            V.clear();
            for (int k = point.first_obs; k < point.end_obs; ++k) {
                const ObsTerm& o = obs_[k];
                const int param = poses_[o.pose].param;
                if (!o.valid || param < 0) continue;
                params.push_back(k);
                V.push_back(W_[k] * Hll_inv_[l]);
            }
            for (std::size_t a = 0; a < params.size(); ++a) {
                const int ca = 6 * poses_[obs_[params[a]].pose].param;
                rhs.segment<6>(ca).noalias() += V[a] * gl_[l];
                for (std::size_t b = 0; b < params.size(); ++b) {
                    const int cb = 6 * poses_[obs_[params[b]].pose].param;
                    if (cb > ca) continue;  // lower triangle only
                    S.block<6, 6>(ca, cb).noalias() -= V[a] * W_[params[b]].transpose();
                }
            }
        }

        if (reduced_dim_ > 0) {
            const Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt(S);
            if (ldlt.info() != Eigen::Success) return NAN;
            dc_ = ldlt.solve(rhs);
            if (!dc_.allFinite()) return NAN;
        } else {
            dc_.resize(0);
        }

        double sq = dc_.squaredNorm();
        for (std::size_t l = 0; l < points_.size(); ++l) {
            Vec3 r = -gl_[l];
            const PointBlock& point = points_[l];
            for (int k = point.first_obs; k < point.end_obs; ++k) {
                const ObsTerm& o = obs_[k];
                const int param = poses_[o.pose].param;
                if (!o.valid || param < 0) continue;
                r.noalias() -= W_[k].transpose() * dc_.segment<6>(6 * param);
            }
            dl_[l] = Hll_inv_[l] * r;
            sq += dl_[l].squaredNorm();
        }
        const double norm = std::sqrt(sq);
        return std::isfinite(norm) ? norm : NAN;
    }

    void apply_step() {
        backup_poses_.resize(poses_.size());
        backup_points_.resize(points_.size());
        for (std::size_t i = 0; i < poses_.size(); ++i) {
            backup_poses_[i] = poses_[i].pose;
            if (poses_[i].param >= 0) {
                poses_[i].pose = apply_update(dc_.segment<6>(6 * poses_[i].param), poses_[i].pose);
            }
        }
        for (std::size_t l = 0; l < points_.size(); ++l) {
            backup_points_[l] = points_[l].position;
            points_[l].position += dl_[l];
        }
        backup_normal_ = global_normal_;
        if (optimize_normal_) global_normal_ += dc_.segment<3>(6 * num_pose_params_);
    }

    void revert_step() {
        for (std::size_t i = 0; i < poses_.size(); ++i) poses_[i].pose = backup_poses_[i];
        for (std::size_t l = 0; l < points_.size(); ++l) points_[l].position = backup_points_[l];
        global_normal_ = backup_normal_;
    }

    [[nodiscard]] double cost() const { return breakdown().total(); }

    [[nodiscard]] CostBreakdown breakdown() const {
        CostBreakdown out;
        for (const ObsTerm& o : obs_) {
            const Point3 pc = poses_[o.pose].pose * points_[o.point].position;
            if (!(pc.z() > 0.0)) continue;
            const Vec3 e = project(K_, pc) - o.measured;
            out.reprojection += huber(std::sqrt(o.weight) * e.norm(), loss_.delta_reprojection).cost;
            ++out.reprojection_terms;
        }
        const double sqrt_lambda = std::sqrt(loss_.normal_weight);
        for (const PoseBlock& pose : poses_) {
            if (!pose.normal) continue;
            const Eigen::Vector2d e = normal_residual(pose.basis, pose.pose.rotation(), global_normal_, pose.frame_normal);
            out.normal += huber(sqrt_lambda * e.norm(), loss_.delta_normal).cost;
            ++out.normal_terms;
        }
        return out;
    }

    /// Copies optimized poses, landmarks and the global normal into `map`.
    void write_back(MapState& map) const {
        for (const PoseBlock& pose : poses_) {
            if (pose.param < 0) continue;
            Pose p = pose.pose;
            p.normalize();
            map.keyframes.at(pose.id).pose = p;
        }
        for (const PointBlock& point : points_) {
            const auto it = map.landmarks.find(point.id);
            if (it != map.landmarks.end()) it->second.position = point.position;
        }
        if (optimize_normal_) map.global_normal = global_normal_.normalized();
    }

    [[nodiscard]] std::vector<ObservationId> observation_ids() const {
        std::vector<ObservationId> ids;
        ids.reserve(obs_.size());
        for (const ObsTerm& o : obs_) ids.push_back(o.id);
        return ids;
    }

    [[nodiscard]] int optimized_poses() const { return num_pose_params_; }
    [[nodiscard]] bool optimizes_global_normal() const { return optimize_normal_; }

private:
    struct PoseBlock {
        KeyframeId id = 0;
        Pose pose;
        int param = -1;
        bool normal = false;
        TangentBasis basis;
        Vec3 frame_normal;
    };
    struct PointBlock {
        LandmarkId id = 0;
        Point3 position;
        int first_obs = 0;
        int end_obs = 0;
    };
    struct ObsTerm {
        ObservationId id;
        int pose;
        int point;
        StereoPixel measured;
        double weight;
        bool valid = true;
    };

    Intrinsics K_;
    RobustLossConfig loss_;
    bool optimize_normal_;
    int num_pose_params_ = 0;
    int reduced_dim_ = 0;

    std::vector<PoseBlock> poses_;
    std::vector<PointBlock> points_;
    std::vector<ObsTerm> obs_;
    Vec3 global_normal_;

    Eigen::MatrixXd Hcc_;
    Eigen::VectorXd gc_;
    std::vector<Eigen::Matrix<double, 6, 3>> W_;
    std::vector<Mat3> Hll_;
    std::vector<Mat3> Hll_inv_;
    std::vector<Vec3> gl_;

    Eigen::VectorXd dc_;
    std::vector<Vec3> dl_;
    std::vector<Pose> backup_poses_;
    std::vector<Point3> backup_points_;
    Vec3 backup_normal_;
};

struct BundleSummary {
    LmSummary first;
    LmSummary second;
    bool ran_second = false;
    int rejected = 0;
    int local_keyframes = 0;
    int fixed_keyframes = 0;
    int landmarks = 0;
    int observations = 0;
    bool optimized_global_normal = false;
    CostBreakdown initial_cost;
    CostBreakdown final_cost;

    [[nodiscard]] int iterations() const { return first.iterations + (ran_second ? second.iterations : 0); }
    [[nodiscard]] bool diverged() const { return first.diverged() && (!ran_second || second.diverged()); }
};

/// Keyframes and landmarks entering a local BA around `current`.
inline BundleProblem::Selection select_local_window(MapState& map, KeyframeId current, const SolverConfig& cfg) {
    BundleProblem::Selection sel;
    sel.gauge = map.keyframes.begin()->first;
    sel.local.push_back(current);
    auto neighbours = map.covisible(current, cfg.covisibility_min_shared);
    if (cfg.max_local_keyframes > 0 && static_cast<int>(neighbours.size()) > cfg.max_local_keyframes) {
        neighbours.resize(static_cast<std::size_t>(cfg.max_local_keyframes));
    }
    for (const auto& [id, _] : neighbours) sel.local.push_back(id);
    std::sort(sel.local.begin(), sel.local.end());

    const std::set<KeyframeId> local(sel.local.begin(), sel.local.end());
    std::set<LandmarkId> landmarks;
    std::set<KeyframeId> fixed;
    for (KeyframeId id : sel.local) {
        for (ObservationId oid : map.keyframes.at(id).observations) {
            landmarks.insert(map.observations.at(oid).landmark_id);
        }
    }
    for (LandmarkId lid : landmarks) {
        for (const auto& [kf, _] : map.landmarks.at(lid).observations) {
            if (!local.contains(kf)) fixed.insert(kf);
        }
    }
    sel.landmarks.assign(landmarks.begin(), landmarks.end());
    sel.fixed.assign(fixed.begin(), fixed.end());
    sel.optimize_global_normal =
        cfg.normals_enabled() && map.has_global_normal && map.normal_init_remaining > 0;

    for (auto& [id, kf] : map.keyframes) kf.fixed = id == sel.gauge || fixed.contains(id);
    return sel;
}

/// Local BA around `current`: optimizes the covisible keyframes, their
/// landmarks and, while the initialization window is open, the global
/// normal. Runs half of the iteration budget, rejects chi-square outliers
/// among the involved observations, then spends the remaining budget.
inline BundleSummary local_bundle_adjustment(MapState& map, const Intrinsics& K, KeyframeId current,
                                             const SolverConfig& cfg) {
    BundleSummary summary;
    if (map.keyframes.size() < 2) return summary;

    BundleProblem::Selection sel = select_local_window(map, current, cfg);
    summary.local_keyframes = static_cast<int>(sel.local.size());
    summary.fixed_keyframes = static_cast<int>(sel.fixed.size());
    summary.landmarks = static_cast<int>(sel.landmarks.size());

    LmOptions first_opts = cfg.lm;
    first_opts.max_iterations = std::max(1, cfg.lm.max_iterations / 2);
    LmOptions second_opts = cfg.lm;
    second_opts.max_iterations = std::max(0, cfg.lm.max_iterations - first_opts.max_iterations);

    BundleProblem problem(map, K, sel, cfg);
    summary.observations = static_cast<int>(problem.observation_ids().size());
    summary.optimized_global_normal = problem.optimizes_global_normal();
    summary.initial_cost = problem.breakdown();
    summary.first = levenberg_marquardt(problem, first_opts);
    problem.write_back(map);
    summary.final_cost = problem.breakdown();

    summary.rejected = reject_outliers(map, K, problem.observation_ids(), cfg.chi2_threshold);
    const bool converged = summary.first.status != LmStatus::MaxIterations;
    if ((summary.rejected == 0 && converged) || second_opts.max_iterations == 0) return summary;

    std::erase_if(sel.landmarks, [&](LandmarkId id) { return !map.landmarks.contains(id); });
    BundleProblem refined(map, K, sel, cfg);
    summary.ran_second = true;
    summary.second = levenberg_marquardt(refined, second_opts);
    refined.write_back(map);
    summary.final_cost = refined.breakdown();
    return summary;
}

}  // namespace nvo
