#pragma once

// Flat `key = value` run configuration covering the scene, the solver, and
// evaluation/experiment settings. Lines starting with '#' are comments.
// Unknown keys and malformed values are errors naming the key.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "nvo/errors.hpp"
#include "nvo/evaluation.hpp"
#include "nvo/simulator.hpp"
#include "nvo/solver_config.hpp"

namespace nvo {

struct RunConfig {
    SceneConfig scene;
    SolverConfig solver;
    int rde_delta = kDefaultRdeStep;
    AlignmentMode alignment = AlignmentMode::Full3D;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

    /// Empty when valid, otherwise the offending key.
    [[nodiscard]] std::string invalid_key() const;
};

namespace config_detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    return {buf, end};
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
    }
    return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(text) + "' for key '" + std::string(key) + "'");
}

struct Field {
    std::string key;
    std::string doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T, typename Access>
Field numeric(std::string key, std::string doc, Access access) {
    Field f;
    f.key = key;
    f.doc = std::move(doc);
    f.get = [access](const RunConfig& c) {
        const T v = access(const_cast<RunConfig&>(c));
        if constexpr (std::is_floating_point_v<T>) {
            return format_double(v);
        } else {
            return std::to_string(v);
        }
    };
    f.set = [access, key](RunConfig& c, std::string_view text) { access(c) = parse_number<T>(key, text); };
    return f;
}

inline Field boolean(std::string key, std::string doc, std::function<bool&(RunConfig&)> access) {
    Field f;
    f.key = key;
    f.doc = std::move(doc);
    f.get = [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); };
    f.set = [access, key](RunConfig& c, std::string_view text) { access(c) = parse_bool(key, text); };
    return f;
}

#define NVO_FIELD(T, key, doc, expr) numeric<T>(key, doc, [](RunConfig& c) -> T& { return expr; })

inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        // scene
        t.push_back(NVO_FIELD(double, "scene.fx", "focal length x (px)", c.scene.intrinsics.fx));
        t.push_back(NVO_FIELD(double, "scene.fy", "focal length y (px)", c.scene.intrinsics.fy));
        t.push_back(NVO_FIELD(double, "scene.cx", "principal point x (px)", c.scene.intrinsics.cx));
        t.push_back(NVO_FIELD(double, "scene.cy", "principal point y (px)", c.scene.intrinsics.cy));
        t.push_back(NVO_FIELD(double, "scene.baseline", "stereo baseline (m)", c.scene.intrinsics.baseline));
        t.push_back(NVO_FIELD(int, "scene.image_width", "image width (px)", c.scene.image_width));
        t.push_back(NVO_FIELD(int, "scene.image_height", "image height (px)", c.scene.image_height));
        t.push_back(NVO_FIELD(int, "scene.landmark_count", "landmarks scattered over the field", c.scene.landmark_count));
        t.push_back(NVO_FIELD(double, "scene.plane_height", "ground plane height (m)", c.scene.plane_height));
        t.push_back(NVO_FIELD(double, "scene.roughness", "vertical landmark scatter sigma (m)", c.scene.roughness));
        t.push_back(NVO_FIELD(double, "scene.field_length", "field extent along x (m)", c.scene.field_length));
        t.push_back(NVO_FIELD(double, "scene.field_width", "field extent along y (m)", c.scene.field_width));
        t.push_back(NVO_FIELD(double, "scene.pixel_sigma", "observation noise sigma (px)", c.scene.pixel_sigma));
        t.push_back(NVO_FIELD(double, "scene.outlier_rate", "fraction of gross outliers", c.scene.outlier_rate));
        t.push_back(NVO_FIELD(double, "scene.outlier_magnitude", "outlier offset (px)", c.scene.outlier_magnitude));
        t.push_back(NVO_FIELD(double, "scene.min_disparity", "minimum rendered disparity (px)", c.scene.min_disparity));
        t.push_back(NVO_FIELD(double, "scene.normal_noise_deg", "frame normal noise sigma (deg)", c.scene.normal_noise_deg));
        {
            Field f;
            f.key = "scene.shape";
            f.doc = "trajectory shape: lawnmower | line";
            f.get = [](const RunConfig& c) { return to_string(c.scene.shape); };
            f.set = [](RunConfig& c, std::string_view v) {
                if (v == "lawnmower") {
                    c.scene.shape = TrajectoryShape::LawnMower;
                } else if (v == "line") {
                    c.scene.shape = TrajectoryShape::Line;
                } else {
                    throw ConfigError("invalid value '" + std::string(v) + "' for key 'scene.shape'");
                }
            };
            t.push_back(std::move(f));
        }
        t.push_back(NVO_FIELD(int, "scene.rows", "lawn-mower rows", c.scene.rows));
        t.push_back(NVO_FIELD(double, "scene.row_spacing", "distance between rows (m)", c.scene.row_spacing));
        t.push_back(NVO_FIELD(double, "scene.altitude", "camera height above the plane (m)", c.scene.altitude));
        t.push_back(NVO_FIELD(double, "scene.speed", "ground speed (m/s)", c.scene.speed));
        t.push_back(NVO_FIELD(double, "scene.frame_rate", "frames per second", c.scene.frame_rate));
        t.push_back(NVO_FIELD(int, "scene.frame_count", "number of frames", c.scene.frame_count));
        t.push_back(NVO_FIELD(std::uint64_t, "scene.seed", "simulation seed", c.scene.seed));
        // solver
        t.push_back(NVO_FIELD(int, "lm.max_iterations", "iteration budget per optimization", c.solver.lm.max_iterations));
        t.push_back(NVO_FIELD(double, "lm.initial_damping", "initial damping", c.solver.lm.initial_damping));
        t.push_back(NVO_FIELD(double, "lm.damping_increase", "damping factor on rejected steps", c.solver.lm.damping_increase));
        t.push_back(NVO_FIELD(double, "lm.damping_decrease", "damping divisor on accepted steps", c.solver.lm.damping_decrease));
        t.push_back(NVO_FIELD(double, "lm.max_damping", "damping ceiling", c.solver.lm.max_damping));
        t.push_back(NVO_FIELD(double, "lm.step_tolerance", "stop when the step norm falls below", c.solver.lm.step_tolerance));
        t.push_back(NVO_FIELD(double, "lm.relative_cost_tolerance", "stop when the relative decrease falls below",
                              c.solver.lm.relative_cost_tolerance));
        t.push_back(NVO_FIELD(double, "loss.delta_reprojection", "Huber threshold, reprojection (whitened)",
                              c.solver.loss.delta_reprojection));
        t.push_back(NVO_FIELD(double, "loss.delta_normal", "Huber threshold, normal (whitened)", c.solver.loss.delta_normal));
        t.push_back(NVO_FIELD(double, "loss.normal_weight", "lambda; 0 disables normal factors", c.solver.loss.normal_weight));
        t.push_back(NVO_FIELD(double, "solver.chi2_threshold", "outlier threshold on whitened squared error",
                              c.solver.chi2_threshold));
        t.push_back(NVO_FIELD(double, "solver.pixel_sigma", "pixel sigma assumed by the estimator", c.solver.pixel_sigma));
        t.push_back(NVO_FIELD(double, "solver.min_disparity", "minimum disparity for triangulation (px)",
                              c.solver.min_disparity));
        t.push_back(NVO_FIELD(int, "solver.normal_init_window", "keyframes during which the global normal is optimized",
                              c.solver.normal_init_window));
        t.push_back(NVO_FIELD(int, "solver.covisibility_min_shared", "shared landmarks for a covisibility edge",
                              c.solver.covisibility_min_shared));
        t.push_back(NVO_FIELD(int, "solver.max_local_keyframes", "covisible neighbours per local BA (0 = all)",
                              c.solver.max_local_keyframes));
        t.push_back(NVO_FIELD(int, "solver.landmark_retire_window", "keyframes before an unseen landmark retires",
                              c.solver.landmark_retire_window));
        t.push_back(NVO_FIELD(int, "solver.min_tracking_observations", "minimum matched observations",
                              c.solver.min_tracking_observations));
        t.push_back(NVO_FIELD(double, "solver.min_tracking_inlier_ratio", "minimum inlier fraction",
                              c.solver.min_tracking_inlier_ratio));
        t.push_back(boolean("solver.normal_in_tracking", "add the normal factor to pose-only tracking",
                            [](RunConfig& c) -> bool& { return c.solver.normal_in_tracking; }));
        t.push_back(NVO_FIELD(double, "keyframe.min_inlier_ratio", "new keyframe below this fraction of reference",
                              c.solver.keyframes.min_inlier_ratio));
        t.push_back(NVO_FIELD(int, "keyframe.max_frame_gap", "new keyframe after this many frames",
                              c.solver.keyframes.max_frame_gap));
        // evaluation / experiment
        t.push_back(NVO_FIELD(int, "eval.rde_delta", "frame step of the relative distance error", c.rde_delta));
        {
            Field f;
            f.key = "eval.alignment";
            f.doc = "trajectory alignment: 3d | yaw";
            f.get = [](const RunConfig& c) { return std::string(c.alignment == AlignmentMode::Yaw ? "yaw" : "3d"); };
            f.set = [](RunConfig& c, std::string_view v) {
                if (v == "3d") {
                    c.alignment = AlignmentMode::Full3D;
                } else if (v == "yaw") {
                    c.alignment = AlignmentMode::Yaw;
                } else {
                    throw ConfigError("invalid value '" + std::string(v) + "' for key 'eval.alignment'");
                }
            };
            t.push_back(std::move(f));
        }
        {
            Field f;
            f.key = "experiment.seeds";
            f.doc = "comma-separated simulation seeds";
            f.get = [](const RunConfig& c) {
                std::string out;
                for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
                return out;
            };
            f.set = [](RunConfig& c, std::string_view v) {
                c.seeds.clear();
                while (!v.empty()) {
                    const auto comma = v.find(',');
                    const std::string_view item = trim(v.substr(0, comma));
                    c.seeds.push_back(parse_number<std::uint64_t>("experiment.seeds", item));
                    if (comma == std::string_view::npos) break;
                    v.remove_prefix(comma + 1);
                }
            };
            t.push_back(std::move(f));
        }
        return t;
    }();
    return table;
}

#undef NVO_FIELD

}  // namespace config_detail

inline std::string RunConfig::invalid_key() const {
    if (std::string k = scene.invalid_key(); !k.empty()) return "scene." + k;
    if (solver.lm.max_iterations < 1) return "lm.max_iterations";
    if (!(solver.lm.initial_damping > 0.0)) return "lm.initial_damping";
    if (!(solver.lm.damping_increase > 1.0)) return "lm.damping_increase";
    if (!(solver.lm.damping_decrease > 1.0)) return "lm.damping_decrease";
    if (!(solver.lm.max_damping > solver.lm.initial_damping)) return "lm.max_damping";
    if (solver.lm.step_tolerance < 0.0) return "lm.step_tolerance";
    if (solver.lm.relative_cost_tolerance < 0.0) return "lm.relative_cost_tolerance";
    if (!(solver.loss.delta_reprojection > 0.0)) return "loss.delta_reprojection";
    if (!(solver.loss.delta_normal > 0.0)) return "loss.delta_normal";
    if (solver.loss.normal_weight < 0.0) return "loss.normal_weight";
    if (!(solver.chi2_threshold > 0.0)) return "solver.chi2_threshold";
    if (!(solver.pixel_sigma > 0.0)) return "solver.pixel_sigma";
    if (!(solver.min_disparity > 0.0)) return "solver.min_disparity";
    if (solver.normal_init_window < 0) return "solver.normal_init_window";
    if (solver.covisibility_min_shared < 1) return "solver.covisibility_min_shared";
    if (solver.max_local_keyframes < 0) return "solver.max_local_keyframes";
    if (solver.landmark_retire_window < 0) return "solver.landmark_retire_window";
    if (solver.min_tracking_observations < 3) return "solver.min_tracking_observations";
    if (solver.min_tracking_inlier_ratio < 0.0 || solver.min_tracking_inlier_ratio > 1.0) {
        return "solver.min_tracking_inlier_ratio";
    }
    if (solver.keyframes.min_inlier_ratio < 0.0 || solver.keyframes.min_inlier_ratio > 1.0) {
        return "keyframe.min_inlier_ratio";
    }
    if (solver.keyframes.max_frame_gap < 1) return "keyframe.max_frame_gap";
    if (rde_delta < 1) return "eval.rde_delta";
    if (seeds.empty()) return "experiment.seeds";
    return {};
}

/// Throws ConfigError naming the first invalid key.
inline void validate(const RunConfig& cfg) {
    if (const std::string key = cfg.invalid_key(); !key.empty()) {
        throw ConfigError("invalid value for key '" + key + "'");
    }
}

/// Every key with its current value and a one-line description.
inline std::string serialize(const RunConfig& cfg) {
    std::ostringstream os;
    for (const config_detail::Field& f : config_detail::fields()) {
        os << "# " << f.doc << '\n' << f.key << " = " << f.get(cfg) << '\n';
    }
    return os.str();
}

/// Applies `text` on top of `base`. `source` labels errors.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}, const std::string& source = "<config>") {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string_view content = config_detail::trim(line);
        if (content.empty() || content.front() == '#') continue;
        const auto eq = content.find('=');
        if (eq == std::string_view::npos) throw ParseError(source, number, "expected 'key = value'");
        const std::string_view key = config_detail::trim(content.substr(0, eq));
        const std::string_view value = config_detail::trim(content.substr(eq + 1));
        const auto& table = config_detail::fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.key == key; });
        if (it == table.end()) throw ParseError(source, number, "unknown key '" + std::string(key) + "'");
        try {
            it->set(base, value);
        } catch (const ConfigError& e) {
            throw ParseError(source, number, e.what());
        }
    }
    validate(base);
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), std::move(base), path);
}

/// Names of all recognised keys, in serialization order.
inline std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : config_detail::fields()) keys.push_back(f.key);
    return keys;
}

}  // namespace nvo
