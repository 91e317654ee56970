#pragma once

// Plain-text dataset and trajectory files.
//
//   intrinsics.txt   fx fy cx cy b
//   traj_gt.txt      timestamp tx ty tz qx qy qz qw   (camera -> world)
//   landmarks.csv    id,x,y,z                         (world frame)
//   obs.csv          frame_id,landmark_id,uL,v,uR,is_outlier
//   normals.csv      frame_id,nx,ny,nz                (camera frame)
//   config_used.txt  run configuration
//
// Frame ids index the lines of traj_gt.txt, which also supplies the frame
// timestamps. Numbers are written with 17 significant digits so every file
// reads back bit-exactly. '#' lines are comments everywhere.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nvo/errors.hpp"
#include "nvo/estimator.hpp"
#include "nvo/evaluation.hpp"
#include "nvo/simulator.hpp"
#include "nvo/solver_config.hpp"

namespace nvo {

namespace io_detail {

inline void append(std::string& out, double v) {
    char buf[64];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    out.append(buf, end);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Splits `line` on `separator`; ' ' means runs of blanks or tabs.
inline std::vector<std::string_view> split(std::string_view line, char separator) {
    std::vector<std::string_view> out;
    if (separator == ' ') {
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            if (i >= line.size()) break;
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
            out.push_back(line.substr(i, j - i));
            i = j;
        }
        return out;
    }
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(separator, start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
T number(std::string_view text, const std::string& path, std::size_t line) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ParseError(path, line, "invalid number '" + std::string(text) + "'");
    }
    return value;
}

/// Calls `row(fields, line_number)` for each data line of a delimited file.
/// A first data line equal to `header` is skipped.
template <typename Row>
void for_each_row(const std::string& text, const std::string& path, char separator, std::size_t columns,
                  std::string_view header, Row&& row) {
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view view(line);
        while (!view.empty() && (view.front() == ' ' || view.front() == '\t')) view.remove_prefix(1);
        if (view.empty() || view.front() == '#') continue;
        if (first && !header.empty() && view == header) {
            first = false;
            continue;
        }
        first = false;
        const auto fields = split(view, separator);
        if (fields.size() != columns) {
            throw ParseError(path, number,
                             "expected " + std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
        }
        row(fields, number);
    }
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Intrinsics

inline std::string format_intrinsics(const Intrinsics& K) {
    std::string out;
    for (double v : {K.fx, K.fy, K.cx, K.cy, K.baseline}) {
        if (!out.empty()) out += ' ';
        io_detail::append(out, v);
    }
    return out + '\n';
}

inline Intrinsics parse_intrinsics(const std::string& text, const std::string& path = "intrinsics.txt") {
    std::vector<Intrinsics> found;
    io_detail::for_each_row(text, path, ' ', 5, {}, [&](const auto& f, std::size_t line) {
        Intrinsics K;
        K.fx = io_detail::number<double>(f[0], path, line);
        K.fy = io_detail::number<double>(f[1], path, line);
        K.cx = io_detail::number<double>(f[2], path, line);
        K.cy = io_detail::number<double>(f[3], path, line);
        K.baseline = io_detail::number<double>(f[4], path, line);
        if (!K.valid()) throw ParseError(path, line, "focal lengths and baseline must be positive");
        found.push_back(K);
    });
    if (found.size() != 1) throw ParseError(path, 1, "expected exactly one line 'fx fy cx cy b'");
    return found.front();
}

// ---------------------------------------------------------------------------
// Trajectories

inline std::string format_trajectory(const Trajectory& traj, const std::string& comment = {}) {
    std::string out = "# timestamp tx ty tz qx qy qz qw (camera -> world)\n";
    if (!comment.empty()) out += "# " + comment + '\n';
    for (const TrajectoryRecord& r : traj) {
        const Vec3 t = r.pose.translation();
        const Eigen::Quaterniond q = r.pose.quaternion();
        io_detail::append(out, r.timestamp);
        for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) {
            out += ' ';
            io_detail::append(out, v);
        }
        out += '\n';
    }
    return out;
}

/// Quaternions off unit length by more than 1e-6 are renormalized and a
/// warning naming the line is appended to `warnings` when given.
inline Trajectory parse_trajectory(const std::string& text, const std::string& path = "<trajectory>",
                                   std::vector<std::string>* warnings = nullptr) {
    Trajectory traj;
    io_detail::for_each_row(text, path, ' ', 8, {}, [&](const auto& f, std::size_t line) {
        double v[8];
        for (int i = 0; i < 8; ++i) v[i] = io_detail::number<double>(f[static_cast<std::size_t>(i)], path, line);
        Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
        const double norm = q.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) throw ParseError(path, line, "zero or non-finite quaternion");
        if (std::abs(norm - 1.0) > 1e-6) {
            if (warnings != nullptr) {
                warnings->push_back(path + ":" + std::to_string(line) + ": quaternion norm " + std::to_string(norm) +
                                    " renormalized");
            }
        }
        if (!traj.empty() && !(v[0] > traj.back().timestamp)) {
            throw ParseError(path, line, "timestamps must be strictly increasing");
        }
        traj.push_back({v[0], Pose::from_quaternion(q.normalized(), Vec3(v[1], v[2], v[3]))});
    });
    return traj;
}

inline Trajectory read_trajectory(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
    return parse_trajectory(io_detail::read_file(path), path.string(), warnings);
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj, const std::string& comment = {}) {
    io_detail::write_file(path, format_trajectory(traj, comment));
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetObservation {
    TrackId landmark_id = 0;
    StereoPixel pixel = StereoPixel::Zero();
    bool outlier = false;
};

struct Dataset {
    Intrinsics intrinsics;
    Trajectory ground_truth;                           // camera -> world
    std::map<TrackId, Point3> landmarks;               // world frame
    std::vector<std::vector<DatasetObservation>> observations;  // per frame
    std::vector<Vec3> normals;                          // per frame, camera frame
    std::vector<bool> has_normal;
    std::string config_text;                            // contents of config_used.txt, may be empty

    [[nodiscard]] std::size_t size() const { return ground_truth.size(); }

    [[nodiscard]] std::vector<FrameInput> frames() const {
        std::vector<FrameInput> out(size());
        for (std::size_t i = 0; i < size(); ++i) {
            FrameInput& f = out[i];
            f.id = static_cast<FrameId>(i);
            f.timestamp = ground_truth[i].timestamp;
            for (const DatasetObservation& o : observations[i]) f.observations.push_back({o.landmark_id, o.pixel});
            f.normal = normals[i];
            f.has_normal = has_normal[i];
        }
        return out;
    }
};

inline Dataset dataset_from_sequence(const SimulatedSequence& seq) {
    Dataset d;
    d.intrinsics = seq.intrinsics;
    for (std::size_t i = 0; i < seq.size(); ++i) d.ground_truth.push_back({seq.timestamps[i], seq.ground_truth[i].inverse()});
    for (std::size_t i = 0; i < seq.landmarks.size(); ++i) d.landmarks[static_cast<TrackId>(i)] = seq.landmarks[i];
    d.observations.resize(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        for (const SimObservation& o : seq.observations[i]) d.observations[i].push_back({o.landmark_id, o.pixel, o.outlier});
    }
    d.normals = seq.normals;
    d.has_normal = seq.has_normal;
    return d;
}

inline constexpr std::string_view kLandmarkHeader = "id,x,y,z";
inline constexpr std::string_view kObservationHeader = "frame_id,landmark_id,uL,v,uR,is_outlier";
inline constexpr std::string_view kNormalHeader = "frame_id,nx,ny,nz";

inline std::string format_landmarks(const Dataset& d) {
    std::string out(kLandmarkHeader);
    out += '\n';
    for (const auto& [id, p] : d.landmarks) {
        out += std::to_string(id);
        for (double v : {p.x(), p.y(), p.z()}) {
            out += ',';
            io_detail::append(out, v);
        }
        out += '\n';
    }
    return out;
}

inline std::string format_observations(const Dataset& d) {
    std::string out(kObservationHeader);
    out += '\n';
    for (std::size_t i = 0; i < d.observations.size(); ++i) {
        for (const DatasetObservation& o : d.observations[i]) {
            out += std::to_string(i) + ',' + std::to_string(o.landmark_id);
            for (int k = 0; k < 3; ++k) {
                out += ',';
                io_detail::append(out, o.pixel[k]);
            }
            out += o.outlier ? ",1\n" : ",0\n";
        }
    }
    return out;
}

inline std::string format_normals(const Dataset& d) {
    std::string out(kNormalHeader);
    out += '\n';
    for (std::size_t i = 0; i < d.normals.size(); ++i) {
        if (!d.has_normal[i]) continue;
        out += std::to_string(i);
        for (int k = 0; k < 3; ++k) {
            out += ',';
            io_detail::append(out, d.normals[i][k]);
        }
        out += '\n';
    }
    return out;
}

/// Writes the dataset files into `dir`, which must exist.
inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
    io_detail::write_file(dir / "intrinsics.txt", format_intrinsics(d.intrinsics));
    write_trajectory(dir / "traj_gt.txt", d.ground_truth);
    io_detail::write_file(dir / "landmarks.csv", format_landmarks(d));
    io_detail::write_file(dir / "obs.csv", format_observations(d));
    io_detail::write_file(dir / "normals.csv", format_normals(d));
    if (!d.config_text.empty()) io_detail::write_file(dir / "config_used.txt", d.config_text);
}

inline Dataset read_dataset(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr) {
    Dataset d;
    d.intrinsics = parse_intrinsics(io_detail::read_file(dir / "intrinsics.txt"), (dir / "intrinsics.txt").string());
    d.ground_truth = read_trajectory(dir / "traj_gt.txt", warnings);
    const std::size_t n = d.ground_truth.size();
    d.observations.resize(n);
    d.normals.assign(n, -Vec3::UnitZ());
    d.has_normal.assign(n, false);

    const std::string lpath = (dir / "landmarks.csv").string();
    io_detail::for_each_row(io_detail::read_file(lpath), lpath, ',', 4, kLandmarkHeader,
                            [&](const auto& f, std::size_t line) {
                                const auto id = io_detail::number<TrackId>(f[0], lpath, line);
                                Point3 p;
                                for (int k = 0; k < 3; ++k) {
                                    p[k] = io_detail::number<double>(f[static_cast<std::size_t>(k + 1)], lpath, line);
                                }
                                if (!d.landmarks.emplace(id, p).second) {
                                    throw ParseError(lpath, line, "duplicate landmark id " + std::to_string(id));
                                }
                            });

    const std::string opath = (dir / "obs.csv").string();
    io_detail::for_each_row(io_detail::read_file(opath), opath, ',', 6, kObservationHeader,
                            [&](const auto& f, std::size_t line) {
                                const auto frame = io_detail::number<long long>(f[0], opath, line);
                                if (frame < 0 || static_cast<std::size_t>(frame) >= n) {
                                    throw ParseError(opath, line, "frame id " + std::to_string(frame) + " out of range");
                                }
                                DatasetObservation o;
                                o.landmark_id = io_detail::number<TrackId>(f[1], opath, line);
                                for (int k = 0; k < 3; ++k) {
                                    o.pixel[k] = io_detail::number<double>(f[static_cast<std::size_t>(k + 2)], opath, line);
                                }
                                const int flag = io_detail::number<int>(f[5], opath, line);
                                if (flag != 0 && flag != 1) throw ParseError(opath, line, "is_outlier must be 0 or 1");
                                o.outlier = flag == 1;
                                d.observations[static_cast<std::size_t>(frame)].push_back(o);
                            });

    const std::string npath = (dir / "normals.csv").string();
    io_detail::for_each_row(io_detail::read_file(npath), npath, ',', 4, kNormalHeader,
                            [&](const auto& f, std::size_t line) {
                                const auto frame = io_detail::number<long long>(f[0], npath, line);
                                if (frame < 0 || static_cast<std::size_t>(frame) >= n) {
                                    throw ParseError(npath, line, "frame id " + std::to_string(frame) + " out of range");
                                }
                                Vec3 v;
                                for (int k = 0; k < 3; ++k) {
                                    v[k] = io_detail::number<double>(f[static_cast<std::size_t>(k + 1)], npath, line);
                                }
                                if (!(v.norm() > 0.0)) throw ParseError(npath, line, "zero normal");
                                d.normals[static_cast<std::size_t>(frame)] = v;
                                d.has_normal[static_cast<std::size_t>(frame)] = true;
                            });

    if (std::filesystem::exists(dir / "config_used.txt")) d.config_text = io_detail::read_file(dir / "config_used.txt");
    return d;
}

/// Estimated per-frame poses as a camera -> world trajectory.
inline Trajectory to_trajectory(const std::vector<FrameEstimate>& estimates) {
    Trajectory out;
    out.reserve(estimates.size());
    for (const FrameEstimate& e : estimates) out.push_back({e.timestamp, e.pose.inverse()});
    return out;
}

}  // namespace nvo
