#pragma once

// Synthetic near-planar pavement scenes observed by a downward-looking
// stereo camera. Produces ground truth, labeled noisy observations with
// known data association, and per-frame plane-fit normals.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nvo/errors.hpp"
#include "nvo/geometry.hpp"
#include "nvo/solver_config.hpp"

namespace nvo {

enum class TrajectoryShape { LawnMower, Line };

inline std::string to_string(TrajectoryShape s) { return s == TrajectoryShape::Line ? "line" : "lawnmower"; }

struct SceneConfig {
    Intrinsics intrinsics;
    int image_width = 824;
    int image_height = 449;

    int landmark_count = 3500;
    double plane_height = 0.0;
    double roughness = 0.01;  // vertical scatter sigma_h, meters
    double field_length = 52.0;
    double field_width = 26.0;

    double pixel_sigma = 0.5;
    double outlier_rate = 0.05;
    double outlier_magnitude = 50.0;  // pixels
    double min_disparity = kDefaultMinDisparity;
    double normal_noise_deg = 0.3;

    TrajectoryShape shape = TrajectoryShape::LawnMower;
    int rows = 2;
    double row_spacing = 12.0;
    double altitude = 5.0;
    double speed = 1.5;  // m/s
    double frame_rate = 30.0;
    int frame_count = 1500;

    std::uint64_t seed = 42;

    /// Empty when valid, otherwise the offending key.
    [[nodiscard]] std::string invalid_key() const {
        if (!intrinsics.valid()) return "fx/fy/baseline";
        if (image_width <= 0) return "image_width";
        if (image_height <= 0) return "image_height";
        if (landmark_count <= 0) return "landmark_count";
        if (roughness < 0.0) return "roughness";
        if (field_length <= 0.0) return "field_length";
        if (field_width <= 0.0) return "field_width";
        if (pixel_sigma < 0.0) return "pixel_sigma";
        if (outlier_rate < 0.0 || outlier_rate > 0.5) return "outlier_rate";
        if (outlier_magnitude < 0.0) return "outlier_magnitude";
        if (normal_noise_deg < 0.0) return "normal_noise_deg";
        if (rows <= 0) return "rows";
        if (row_spacing <= 0.0) return "row_spacing";
        if (altitude <= 0.0) return "altitude";
        if (speed <= 0.0) return "speed";
        if (frame_rate <= 0.0) return "frame_rate";
        if (frame_count < 2) return "frame_count";
        return {};
    }
};

/// Deterministic RNG for a (seed, stream, index) triple.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// Plane fit

struct PlaneFit {
    Vec3 normal;      // unit, z-component <= 0
    double planarity;  // smallest / middle scatter eigenvalue
    Vec3 centroid;
};

/// Least-squares plane through camera-frame points: eigenvector of the
/// smallest eigenvalue of the centered scatter matrix, oriented toward the
/// camera (negative z).
inline PlaneFit estimate_frame_normal(const std::vector<Point3>& points) {
    if (points.size() < 3) throw DegenerateCloud("plane fit needs at least 3 points, got " + std::to_string(points.size()));
    Vec3 centroid = Vec3::Zero();
    for (const Point3& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());
    Mat3 scatter = Mat3::Zero();
    for (const Point3& p : points) {
        const Vec3 d = p - centroid;
        scatter.noalias() += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
    const Vec3 values = eig.eigenvalues();  // ascending
    if (!(values[1] > 1e-12 * std::max(values[2], 1e-300))) {
        throw DegenerateCloud("points are collinear or coincident");
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.z() > 0.0) n = -n;
    return {n, std::max(values[0], 0.0) / values[1], centroid};
}

// ---------------------------------------------------------------------------
// Scene and trajectory

struct Scene {
    std::vector<Point3> landmarks;  // scene frame, z up
    Vec3 plane_normal = Vec3::UnitZ();
};

inline Scene generate_scene(const SceneConfig& cfg) {
    std::mt19937_64 rng = make_rng(cfg.seed, 1);
    std::uniform_real_distribution<double> ux(0.0, cfg.field_length);
    std::uniform_real_distribution<double> uy(0.0, cfg.field_width);
    std::normal_distribution<double> height(0.0, 1.0);
    Scene scene;
    scene.landmarks.reserve(static_cast<std::size_t>(cfg.landmark_count));
    for (int i = 0; i < cfg.landmark_count; ++i) {
        const double x = ux(rng);
        const double y = uy(rng);
        const double z = cfg.plane_height + cfg.roughness * height(rng);
        scene.landmarks.emplace_back(x, y, z);
    }
    return scene;
}

/// Position and heading (yaw about scene z) along the flight path.
struct PathSample {
    Eigen::Vector2d position;
    double heading;
};

inline PathSample sample_path(const SceneConfig& cfg, double s) {
    const double total = cfg.speed * (cfg.frame_count - 1) / cfg.frame_rate;
    if (cfg.shape == TrajectoryShape::Line || cfg.rows == 1) {
        const double x0 = 0.5 * (cfg.field_length - total);
        return {{x0 + s, 0.5 * cfg.field_width}, 0.0};
    }
    const double r = 0.5 * cfg.row_spacing;
    const double turn = std::numbers::pi * r;
    const double row = (total - (cfg.rows - 1) * turn) / cfg.rows;
    const double x0 = 0.5 * (cfg.field_length - row);
    const double y0 = 0.5 * (cfg.field_width - (cfg.rows - 1) * cfg.row_spacing);

    for (int j = 0; j < cfg.rows; ++j) {
        const bool forward = j % 2 == 0;
        const double y = y0 + j * cfg.row_spacing;
        const double x_start = forward ? x0 : x0 + row;
        if (s <= row || j == cfg.rows - 1) {
            const double x = forward ? x_start + s : x_start - s;
            return {{x, y}, forward ? 0.0 : std::numbers::pi};
        }
        s -= row;
        if (s <= turn) {
            const double a = s / r;
            if (forward) {
                return {{x0 + row + r * std::sin(a), y + r - r * std::cos(a)}, a};
            }
            return {{x0 - r * std::sin(a), y + r - r * std::cos(a)}, std::numbers::pi - a};
        }
        s -= turn;
    }
    return {{x0, y0}, 0.0};  // unreachable for s within the path
}

/// Camera-to-scene pose of a downward-looking camera; image v runs along the
/// heading.
inline Pose camera_to_scene(const SceneConfig& cfg, const PathSample& sample) {
    const double c = std::cos(sample.heading);
    const double s = std::sin(sample.heading);
    Mat3 R;
    R.col(0) = Vec3(-s, c, 0.0);
    R.col(1) = Vec3(c, s, 0.0);
    R.col(2) = Vec3(0.0, 0.0, -1.0);
    return {R, Vec3(sample.position.x(), sample.position.y(), cfg.plane_height + cfg.altitude)};
}

/// Minimum row length the lawn-mower pattern needs to be well-formed.
inline double lawnmower_row_length(const SceneConfig& cfg) {
    const double total = cfg.speed * (cfg.frame_count - 1) / cfg.frame_rate;
    return (total - (cfg.rows - 1) * std::numbers::pi * 0.5 * cfg.row_spacing) / cfg.rows;
}

struct GroundTruthTrajectory {
    std::vector<Pose> camera_to_scene;
    std::vector<double> timestamps;
};

inline GroundTruthTrajectory generate_trajectory(const SceneConfig& cfg) {
    if (cfg.shape == TrajectoryShape::LawnMower && cfg.rows > 1 && !(lawnmower_row_length(cfg) > 0.0)) {
        throw ConfigError("frame_count too small for the requested lawn-mower rows");
    }
    GroundTruthTrajectory out;
    for (int i = 0; i < cfg.frame_count; ++i) {
        const double t = i / cfg.frame_rate;
        out.timestamps.push_back(t);
        out.camera_to_scene.push_back(camera_to_scene(cfg, sample_path(cfg, cfg.speed * t)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observations

struct SimObservation {
    TrackId landmark_id = 0;
    StereoPixel pixel = StereoPixel::Zero();
    bool outlier = false;
};

inline bool in_image(const SceneConfig& cfg, const StereoPixel& px) {
    return px[0] >= 0.0 && px[0] < cfg.image_width && px[2] >= 0.0 && px[2] < cfg.image_width && px[1] >= 0.0 &&
           px[1] < cfg.image_height;
}

/// Visible landmarks of one frame: noiseless projection, then Gaussian pixel
/// noise, then an outlier fraction shifted by a fixed-magnitude offset in a
/// uniformly random image direction (disparity preserved).
inline std::vector<SimObservation> render_observations(const std::vector<Point3>& landmarks_world,
                                                       const Pose& world_to_camera, const SceneConfig& cfg,
                                                       std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SimObservation> out;
    for (std::size_t i = 0; i < landmarks_world.size(); ++i) {
        const Point3 pc = world_to_camera * landmarks_world[i];
        if (!(pc.z() > 0.0)) continue;
        const StereoPixel px = project(cfg.intrinsics, pc);
        if (!in_image(cfg, px) || !(px[0] - px[2] > cfg.min_disparity)) continue;
        SimObservation obs;
        obs.landmark_id = static_cast<TrackId>(i);
        obs.pixel = px;
        out.push_back(obs);
    }
    for (SimObservation& obs : out) {
        const Vec3 n(noise(rng), noise(rng), noise(rng));
        obs.pixel += cfg.pixel_sigma * n;
        if (unit(rng) < cfg.outlier_rate) {
            const double angle = 2.0 * std::numbers::pi * unit(rng);
            const double du = cfg.outlier_magnitude * std::cos(angle);
            const double dv = cfg.outlier_magnitude * std::sin(angle);
            obs.pixel += Vec3(du, dv, du);
            obs.outlier = true;
        }
    }
    return out;
}

/// Rotates a unit normal by a Gaussian angle about a random axis
/// perpendicular to it.
inline Vec3 perturb_normal(const Vec3& n, double sigma_rad, std::mt19937_64& rng) {
    if (sigma_rad <= 0.0) return n;
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 2.0 * std::numbers::pi);
    const TangentBasis B = make_tangent_basis(n);
    const double psi = unit(rng);
    const Vec3 axis = std::cos(psi) * B.b0() + std::sin(psi) * B.b1();
    const double angle = sigma_rad * g(rng);
    return (rotation_exp(angle * axis) * n).normalized();
}

struct SimulatedSequence {
    SceneConfig config;
    Intrinsics intrinsics;
    std::vector<Pose> ground_truth;  // world -> camera, world = first camera frame
    std::vector<double> timestamps;
    std::vector<Point3> landmarks;   // world frame
    Vec3 plane_normal_world = -Vec3::UnitZ();
    std::vector<std::vector<SimObservation>> observations;
    std::vector<Vec3> normals;       // camera frame, z < 0
    std::vector<bool> has_normal;

    [[nodiscard]] std::size_t size() const { return ground_truth.size(); }

    /// Estimator input for frame `i`.
    [[nodiscard]] FrameInput frame(std::size_t i) const {
        FrameInput f;
        f.id = static_cast<FrameId>(i);
        f.timestamp = timestamps[i];
        f.observations.reserve(observations[i].size());
        for (const SimObservation& o : observations[i]) f.observations.push_back({o.landmark_id, o.pixel});
        f.normal = normals[i];
        f.has_normal = has_normal[i];
        return f;
    }

    [[nodiscard]] std::vector<FrameInput> frames() const {
        std::vector<FrameInput> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) out.push_back(frame(i));
        return out;
    }
};

inline SimulatedSequence simulate(const SceneConfig& cfg) {
    if (const std::string key = cfg.invalid_key(); !key.empty()) throw ConfigError("invalid value for " + key);
    const Scene scene = generate_scene(cfg);
    const GroundTruthTrajectory traj = generate_trajectory(cfg);

    SimulatedSequence seq;
    seq.config = cfg;
    seq.intrinsics = cfg.intrinsics;
    seq.timestamps = traj.timestamps;
    const Pose scene_to_world = traj.camera_to_scene.front().inverse();
    seq.landmarks.reserve(scene.landmarks.size());
    for (const Point3& p : scene.landmarks) seq.landmarks.push_back(scene_to_world * p);
    seq.plane_normal_world = scene_to_world.rotation() * scene.plane_normal;

    const double sigma_n = cfg.normal_noise_deg * std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < traj.camera_to_scene.size(); ++i) {
        Pose world_to_camera = (scene_to_world * traj.camera_to_scene[i]).inverse();
        if (i == 0) world_to_camera = Pose::identity();
        seq.ground_truth.push_back(world_to_camera);

        std::mt19937_64 rng = make_rng(cfg.seed, 2, i);
        seq.observations.push_back(render_observations(seq.landmarks, world_to_camera, cfg, rng));

        std::vector<Point3> visible;
        visible.reserve(seq.observations.back().size());
        for (const SimObservation& o : seq.observations.back()) {
            visible.push_back(world_to_camera * seq.landmarks[static_cast<std::size_t>(o.landmark_id)]);
        }
        Vec3 normal = -Vec3::UnitZ();
        bool ok = false;
        try {
            normal = estimate_frame_normal(visible).normal;
            std::mt19937_64 nrng = make_rng(cfg.seed, 3, i);
            normal = perturb_normal(normal, sigma_n, nrng);
            ok = true;
        } catch (const DegenerateCloud&) {
        }
        seq.normals.push_back(normal);
        seq.has_normal.push_back(ok);
    }
    return seq;
}

}  // namespace nvo
