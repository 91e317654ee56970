#pragma once

#include <vector>

#include "nvo/factors.hpp"
#include "nvo/geometry.hpp"
#include "nvo/levenberg_marquardt.hpp"
#include "nvo/map_state.hpp"

namespace nvo {

struct KeyframePolicy {
    double min_inlier_ratio = 0.9;  // of the last keyframe's reference count
    int max_frame_gap = 5;
};

struct SolverConfig {
    LmOptions lm;
    RobustLossConfig loss;
    KeyframePolicy keyframes;

    double chi2_threshold = kChi2Threshold3Dof;
    /// Pixel standard deviation assumed by the estimator; weight = 1/sigma^2.
    double pixel_sigma = 1.0;
    double min_disparity = kDefaultMinDisparity;
    /// Keyframes during which the global normal stays in the parameter set.
    int normal_init_window = 10;
    int covisibility_min_shared = 15;
    /// Most covisible neighbours optimized per local BA; 0 = unlimited.
    int max_local_keyframes = 10;  // strongest covisible neighbours; 0 = all
    /// Landmarks not observed by any of the last N keyframes leave the local
    /// map and can no longer be matched; 0 keeps them forever.
    int landmark_retire_window = 20;

    int min_tracking_observations = 6;
    double min_tracking_inlier_ratio = 0.5;
    bool normal_in_tracking = true;

    [[nodiscard]] bool normals_enabled() const { return loss.normal_weight > 0.0; }
    [[nodiscard]] double observation_weight() const { return 1.0 / (pixel_sigma * pixel_sigma); }
};

/// One stereo feature of an incoming frame.
struct TrackObservation {
    TrackId track_id = 0;
    StereoPixel pixel = StereoPixel::Zero();
};

struct FrameInput {
    FrameId id = 0;
    double timestamp = 0.0;
    std::vector<TrackObservation> observations;
    Vec3 normal = -Vec3::UnitZ();
    bool has_normal = false;
};

/// Robust cost split by factor type.
struct CostBreakdown {
    double reprojection = 0.0;
    double normal = 0.0;
    int reprojection_terms = 0;
    int normal_terms = 0;

    [[nodiscard]] double total() const { return reprojection + normal; }
};

}  // namespace nvo
