#pragma once

// Tracking / mapping loop: every frame is tracked against the map; frames
// selected as keyframes extend the map and trigger a local BA.

#include <chrono>
#include <iterator>
#include <optional>
#include <set>
#include <vector>

#include "nvo/bundle_adjustment.hpp"
#include "nvo/map_state.hpp"
#include "nvo/solver_config.hpp"
#include "nvo/tracking.hpp"

namespace nvo {

/// Adds `frame` as a keyframe at `pose`. Every match from tracking becomes an
/// observation of its landmark (the following BA rejects the bad ones); unmatched tracks with enough disparity
/// are triangulated into new landmarks. The first keyframe is the gauge and
/// seeds the global normal.
inline KeyframeId insert_keyframe(MapState& map, const Intrinsics& K, const FrameInput& frame, const Pose& pose,
                                  const std::vector<MatchedObservation>& matched, const SolverConfig& cfg) {
    const bool first = map.keyframes.empty();
    Keyframe kf;
    kf.id = frame.id;
    kf.timestamp = frame.timestamp;
    kf.pose = pose;
    kf.has_normal = frame.has_normal;
    if (frame.has_normal) {
        kf.normal = frame.normal.normalized();
        kf.basis = make_tangent_basis(kf.normal);
    }
    kf.fixed = first;
    map.add_keyframe(std::move(kf));

    if (first && frame.has_normal) {
        map.global_normal = pose.rotation().transpose() * frame.normal.normalized();
        map.has_global_normal = true;
        map.normal_init_remaining = cfg.normal_init_window;
    }

    const double weight = cfg.observation_weight();
    std::set<std::size_t> used;
    for (const MatchedObservation& m : matched) {
        used.insert(m.input_index);
        if (!map.landmarks.contains(m.landmark)) continue;
        map.add_observation(frame.id, m.landmark, frame.observations[m.input_index].pixel, weight);
    }

    const Pose camera_to_world = pose.inverse();
    for (std::size_t i = 0; i < frame.observations.size(); ++i) {
        if (used.contains(i)) continue;
        const TrackObservation& obs = frame.observations[i];
        if (map.landmark_for_track(obs.track_id)) continue;
        const double disparity = obs.pixel[0] - obs.pixel[2];
        if (!(disparity > cfg.min_disparity)) continue;
        const Point3 pc = triangulate(K, obs.pixel, cfg.min_disparity);
        const LandmarkId lid = map.add_landmark(camera_to_world * pc, obs.track_id);
        map.add_observation(frame.id, lid, obs.pixel, weight);
    }

    if (map.normal_init_remaining > 0) --map.normal_init_remaining;

    if (cfg.landmark_retire_window > 0 && static_cast<int>(map.keyframes.size()) > cfg.landmark_retire_window) {
        auto it = map.keyframes.rbegin();
        std::advance(it, cfg.landmark_retire_window);
        const KeyframeId horizon = it->first;  // landmarks last seen at or before this leave the local map
        std::vector<LandmarkId> stale;
        for (const auto& [lid, lm] : map.landmarks) {
            if (lm.observations.rbegin()->first <= horizon) stale.push_back(lid);
        }
        for (LandmarkId lid : stale) map.remove_landmark(lid);
    }

    Keyframe& inserted = map.keyframes.at(frame.id);
    inserted.reference_inliers = static_cast<int>(inserted.observations.size());
    return frame.id;
}

struct FrameEstimate {
    FrameId frame_id = 0;
    double timestamp = 0.0;
    Pose pose;  // world -> camera
    bool keyframe = false;
    int inliers = 0;
};

struct EstimatorStats {
    int frames = 0;
    int keyframes = 0;
    int bundle_adjustments = 0;
    int diverged_bundle_adjustments = 0;
    int rejected_observations = 0;
    double tracking_seconds = 0.0;
    double mapping_seconds = 0.0;
    /// Sum over all BA calls of the final cost split; normal_terms stays 0
    /// when normal factors are disabled.
    CostBreakdown bundle_cost;
    CostBreakdown tracking_cost;
};

class VisualOdometry {
public:
    VisualOdometry(const Intrinsics& K, const SolverConfig& cfg) : K_(K), cfg_(cfg) {}

    /// Processes one frame. Throws TrackingLost.
    const FrameEstimate& process(const FrameInput& frame);

    /// Per-frame estimates with keyframes replaced by their current map poses.
    [[nodiscard]] std::vector<FrameEstimate> trajectory() const {
        std::vector<FrameEstimate> out = estimates_;
        for (FrameEstimate& e : out) {
            if (!e.keyframe) continue;
            const auto it = map_.keyframes.find(e.frame_id);
            if (it != map_.keyframes.end()) e.pose = it->second.pose;
        }
        return out;
    }

    [[nodiscard]] const MapState& map() const { return map_; }
    [[nodiscard]] MapState& map() { return map_; }
    [[nodiscard]] const EstimatorStats& stats() const { return stats_; }
    [[nodiscard]] const SolverConfig& config() const { return cfg_; }

private:
    Intrinsics K_;
    SolverConfig cfg_;
    MapState map_;
    std::vector<FrameEstimate> estimates_;
    std::optional<Pose> last_pose_;
    std::optional<Pose> before_last_pose_;
    int frames_since_keyframe_ = 0;
    KeyframeId last_keyframe_ = 0;
    EstimatorStats stats_;
};

inline const FrameEstimate& VisualOdometry::process(const FrameInput& frame) {
    using Clock = std::chrono::steady_clock;
    FrameEstimate estimate;
    estimate.frame_id = frame.id;
    estimate.timestamp = frame.timestamp;
    ++stats_.frames;

    if (map_.keyframes.empty()) {
        // The world frame is the first camera frame.
        const auto t0 = Clock::now();
        insert_keyframe(map_, K_, frame, Pose::identity(), {}, cfg_);
        stats_.mapping_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
        ++stats_.keyframes;
        last_keyframe_ = frame.id;
        frames_since_keyframe_ = 0;
        estimate.keyframe = true;
        estimate.inliers = map_.keyframes.at(frame.id).reference_inliers;
    } else {
        const auto t0 = Clock::now();
        const Pose predicted = predict_pose(last_pose_, before_last_pose_);
        TrackingResult tracked = track_frame(map_, K_, frame, predicted, cfg_);
        stats_.tracking_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
        stats_.tracking_cost.reprojection += tracked.cost.reprojection;
        stats_.tracking_cost.normal += tracked.cost.normal;
        stats_.tracking_cost.reprojection_terms += tracked.cost.reprojection_terms;
        stats_.tracking_cost.normal_terms += tracked.cost.normal_terms;

        estimate.pose = tracked.pose;
        estimate.inliers = tracked.inliers;
        ++frames_since_keyframe_;

        const int reference = map_.keyframes.at(last_keyframe_).reference_inliers;
        if (select_keyframe(cfg_.keyframes, frames_since_keyframe_, tracked.inliers, reference)) {
            const auto t1 = Clock::now();
            insert_keyframe(map_, K_, frame, tracked.pose, tracked.matched, cfg_);
            const BundleSummary ba = local_bundle_adjustment(map_, K_, frame.id, cfg_);
            stats_.mapping_seconds += std::chrono::duration<double>(Clock::now() - t1).count();
            ++stats_.keyframes;
            ++stats_.bundle_adjustments;
            stats_.diverged_bundle_adjustments += ba.diverged() ? 1 : 0;
            stats_.rejected_observations += ba.rejected;
            stats_.bundle_cost.reprojection += ba.final_cost.reprojection;
            stats_.bundle_cost.normal += ba.final_cost.normal;
            stats_.bundle_cost.reprojection_terms += ba.final_cost.reprojection_terms;
            stats_.bundle_cost.normal_terms += ba.final_cost.normal_terms;
            last_keyframe_ = frame.id;
            frames_since_keyframe_ = 0;
            estimate.keyframe = true;
            estimate.pose = map_.keyframes.at(frame.id).pose;
        }
    }

    before_last_pose_ = last_pose_;
    last_pose_ = estimate.pose;
    estimates_.push_back(estimate);
    return estimates_.back();
}

struct SequenceResult {
    std::vector<FrameEstimate> trajectory;
    MapState map;
    EstimatorStats stats;
};

/// Runs the full loop over an ordered frame stream. Throws TrackingLost with
/// the offending frame id.
inline SequenceResult run_sequence(const std::vector<FrameInput>& frames, const Intrinsics& K,
                                   const SolverConfig& cfg) {
    VisualOdometry vo(K, cfg);
    std::optional<FrameId> previous;
    for (const FrameInput& frame : frames) {
        if (previous && frame.id <= *previous) throw Error("frame stream is not ordered by frame id");
        previous = frame.id;
        vo.process(frame);
    }
    return {vo.trajectory(), vo.map(), vo.stats()};
}

}  // namespace nvo
