#pragma once

// Trajectory alignment and the absolute trajectory error (ATE) / relative
// distance error (RDE) metrics, both measured on the x-y translation
// components expressed in the estimated camera frame.
//
// Trajectories here hold camera-to-world poses (camera position and
// orientation in the world), the convention of the trajectory file format.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "nvo/errors.hpp"
#include "nvo/geometry.hpp"

namespace nvo {

struct TrajectoryRecord {
    double timestamp = 0.0;
    Pose pose;  // camera -> world
};

using Trajectory = std::vector<TrajectoryRecord>;

inline bool strictly_increasing(const Trajectory& traj) {
    for (std::size_t i = 1; i < traj.size(); ++i) {
        if (!(traj[i].timestamp > traj[i - 1].timestamp)) return false;
    }
    return true;
}

struct MetricReport {
    std::vector<double> errors;
    double mean = 0.0;
    double median = 0.0;
    double rmse = 0.0;
    double sd = 0.0;
    double max = 0.0;
    int unmatched = 0;
};

inline MetricReport summarize(std::vector<double> errors) {
    MetricReport r;
    r.errors = std::move(errors);
    if (r.errors.empty()) return r;
    const double n = static_cast<double>(r.errors.size());
    double sum = 0.0;
    double sq = 0.0;
    for (double e : r.errors) {
        sum += e;
        sq += e * e;
    }
    r.mean = sum / n;
    r.rmse = std::sqrt(sq / n);
    double var = 0.0;
    for (double e : r.errors) var += (e - r.mean) * (e - r.mean);
    r.sd = std::sqrt(var / n);
    std::vector<double> sorted = r.errors;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size() / 2;
    r.median = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
    r.max = sorted.back();
    return r;
}

/// Pairs of (estimate, ground truth) records matched by nearest timestamp
/// within `max_dt`; estimates without a partner are dropped and counted.
struct Association {
    Trajectory estimate;
    Trajectory ground_truth;
    int unmatched = 0;
};

inline double median_period(const Trajectory& traj) {
    if (traj.size() < 2) return 0.0;
    std::vector<double> dt;
    for (std::size_t i = 1; i < traj.size(); ++i) dt.push_back(traj[i].timestamp - traj[i - 1].timestamp);
    std::nth_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2), dt.end());
    return dt[dt.size() / 2];
}

inline Association associate(const Trajectory& est, const Trajectory& gt, double max_dt = -1.0) {
    if (!strictly_increasing(est) || !strictly_increasing(gt)) {
        throw TimestampMismatch("trajectory timestamps are not strictly increasing");
    }
    if (max_dt < 0.0) max_dt = 0.5 * median_period(gt);
    Association out;
    std::size_t j = 0;
    std::size_t last_used = gt.size();
    for (const TrajectoryRecord& e : est) {
        while (j + 1 < gt.size() && std::abs(gt[j + 1].timestamp - e.timestamp) <= std::abs(gt[j].timestamp - e.timestamp)) {
            ++j;
        }
        if (gt.empty() || std::abs(gt[j].timestamp - e.timestamp) > max_dt || j == last_used) {
            ++out.unmatched;
            continue;
        }
        last_used = j;
        out.estimate.push_back(e);
        out.ground_truth.push_back(gt[j]);
    }
    return out;
}

enum class AlignmentMode { Full3D, Yaw };

/// Rigid transform S (no scale) minimizing sum |t_i - S(g_i)|^2, where t_i
/// and g_i are estimated and ground-truth camera positions. Yaw mode
/// restricts the rotation to the world z axis.
inline Pose align(const Trajectory& est, const Trajectory& gt, AlignmentMode mode = AlignmentMode::Full3D) {
    if (est.size() != gt.size()) throw TimestampMismatch("trajectories have different lengths");
    if (est.size() < 3) throw TooFewPoses("alignment needs at least 3 poses, got " + std::to_string(est.size()));
    const double n = static_cast<double>(est.size());
    Vec3 mean_e = Vec3::Zero();
    Vec3 mean_g = Vec3::Zero();
    for (std::size_t i = 0; i < est.size(); ++i) {
        mean_e += est[i].pose.translation();
        mean_g += gt[i].pose.translation();
    }
    mean_e /= n;
    mean_g /= n;
    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < est.size(); ++i) {
        cov.noalias() += (est[i].pose.translation() - mean_e) * (gt[i].pose.translation() - mean_g).transpose();
    }

    Mat3 R;
    if (mode == AlignmentMode::Full3D) {
        const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 D = Mat3::Identity();
        if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
        R = svd.matrixU() * D * svd.matrixV().transpose();
    } else {
        // maximize tr(R^T cov) over rotations about z
        const double yaw = std::atan2(cov(1, 0) - cov(0, 1), cov(0, 0) + cov(1, 1));
        R = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    }
    return {R, mean_e - R * mean_g};
}

/// x-y components of a translation.
inline double planar_norm(const Vec3& t) { return std::hypot(t.x(), t.y()); }

/// Per-frame |Pi(T_i^-1 S T_i^gt)|.
inline MetricReport ate(const Trajectory& est, const Trajectory& gt, const Pose& S) {
    if (est.size() != gt.size()) throw TimestampMismatch("trajectories have different lengths");
    std::vector<double> errors;
    errors.reserve(est.size());
    for (std::size_t i = 0; i < est.size(); ++i) {
        const Pose e = est[i].pose.inverse() * S * gt[i].pose;
        errors.push_back(planar_norm(e.translation()));
    }
    return summarize(std::move(errors));
}

/// Per-frame | |Pi(T_i^-1 T_{i+delta})| - |Pi(G_i^-1 G_{i+delta})| |.
inline MetricReport rde(const Trajectory& est, const Trajectory& gt, int delta) {
    if (est.size() != gt.size()) throw TimestampMismatch("trajectories have different lengths");
    if (delta < 1) throw SequenceTooShort("RDE step must be positive");
    if (static_cast<int>(est.size()) <= delta) {
        throw SequenceTooShort("RDE with step " + std::to_string(delta) + " needs more than " + std::to_string(delta) +
                               " poses, got " + std::to_string(est.size()));
    }
    std::vector<double> errors;
    const std::size_t d = static_cast<std::size_t>(delta);
    for (std::size_t i = 0; i + d < est.size(); ++i) {
        const double de = planar_norm((est[i].pose.inverse() * est[i + d].pose).translation());
        const double dg = planar_norm((gt[i].pose.inverse() * gt[i + d].pose).translation());
        errors.push_back(std::abs(de - dg));
    }
    return summarize(std::move(errors));
}

struct Evaluation {
    Pose alignment;
    MetricReport ate;
    MetricReport rde;
};

inline constexpr int kDefaultRdeStep = 20;

/// Associate, align, and compute both metrics.
inline Evaluation evaluate(const Trajectory& est, const Trajectory& gt, int delta = kDefaultRdeStep,
                           AlignmentMode mode = AlignmentMode::Full3D) {
    const Association a = associate(est, gt);
    Evaluation out;
    out.alignment = align(a.estimate, a.ground_truth, mode);
    out.ate = ate(a.estimate, a.ground_truth, out.alignment);
    out.rde = rde(a.estimate, a.ground_truth, delta);
    out.ate.unmatched = a.unmatched;
    out.rde.unmatched = a.unmatched;
    return out;
}

// ---------------------------------------------------------------------------
// Comparison tables

struct TableEntry {
    std::string dataset;
    std::string method;
    MetricReport report;
};

/// Side-by-side statistics per dataset and method with a pooled Total row.
class ComparisonTable {
public:
    explicit ComparisonTable(std::string title) : title_(std::move(title)) {}

    void add(const std::string& dataset, const std::string& method, const MetricReport& report) {
        if (std::find(datasets_.begin(), datasets_.end(), dataset) == datasets_.end()) datasets_.push_back(dataset);
        if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
        cells_[{dataset, method}] = report;
    }

    [[nodiscard]] MetricReport total(const std::string& method) const {
        std::vector<double> pooled;
        for (const std::string& d : datasets_) {
            const auto it = cells_.find({d, method});
            if (it != cells_.end()) pooled.insert(pooled.end(), it->second.errors.begin(), it->second.errors.end());
        }
        return summarize(std::move(pooled));
    }

    [[nodiscard]] const MetricReport* cell(const std::string& dataset, const std::string& method) const {
        const auto it = cells_.find({dataset, method});
        return it == cells_.end() ? nullptr : &it->second;
    }

    [[nodiscard]] std::string text() const {
        std::ostringstream os;
        std::size_t name_w = 7;
        for (const std::string& d : datasets_) name_w = std::max(name_w, d.size());
        const int col = 11;
        os << title_ << '\n';
        os << std::string(name_w, ' ');
        for (const std::string& m : methods_) {
            os << " | " << std::left << std::setw(4 * col) << m << std::right;
        }
        os << '\n' << std::left << std::setw(static_cast<int>(name_w)) << "Dataset" << std::right;
        for (std::size_t i = 0; i < methods_.size(); ++i) {
            os << " | " << std::setw(col) << "Mean (m)" << std::setw(col) << "Median (m)" << std::setw(col)
               << "RMSE (m)" << std::setw(col) << "SD (m)";
        }
        os << '\n';
        auto row = [&](const std::string& name, auto&& get) {
            os << std::left << std::setw(static_cast<int>(name_w)) << name << std::right;
            for (const std::string& m : methods_) {
                const MetricReport* r = get(m);
                os << " | ";
                if (r == nullptr) {
                    os << std::setw(4 * col) << "n/a";
                    continue;
                }
                os << std::fixed << std::setprecision(3) << std::setw(col) << r->mean << std::setw(col) << r->median
                   << std::setw(col) << r->rmse << std::setw(col) << r->sd;
            }
            os << '\n';
        };
        for (const std::string& d : datasets_) row(d, [&](const std::string& m) { return cell(d, m); });
        std::map<std::string, MetricReport> totals;
        for (const std::string& m : methods_) totals[m] = total(m);
        row("Total", [&](const std::string& m) { return &totals.at(m); });
        return os.str();
    }

    /// dataset,method,mean,median,rmse,sd,count rows including Total.
    [[nodiscard]] std::string csv() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "dataset,method,mean,median,rmse,sd,count\n";
        auto line = [&](const std::string& d, const std::string& m, const MetricReport& r) {
            os << d << ',' << m << ',' << r.mean << ',' << r.median << ',' << r.rmse << ',' << r.sd << ','
               << r.errors.size() << '\n';
        };
        for (const std::string& d : datasets_) {
            for (const std::string& m : methods_) {
                if (const MetricReport* r = cell(d, m)) line(d, m, *r);
            }
        }
        for (const std::string& m : methods_) line("Total", m, total(m));
        return os.str();
    }

    [[nodiscard]] const std::vector<std::string>& datasets() const { return datasets_; }
    [[nodiscard]] const std::vector<std::string>& methods() const { return methods_; }

private:
    std::string title_;
    std::vector<std::string> datasets_;
    std::vector<std::string> methods_;
    std::map<std::pair<std::string, std::string>, MetricReport> cells_;
};

}  // namespace nvo
