#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "nvo/factors.hpp"
#include "nvo/geometry.hpp"

namespace nvo {

using KeyframeId = FrameId;
using ObservationId = std::int64_t;
/// Identifier assigned by the front end to a feature track (known data
/// association in the simulated front end).
using TrackId = std::int64_t;

struct Keyframe {
    KeyframeId id = 0;
    double timestamp = 0.0;
    Pose pose;
    Vec3 normal = -Vec3::UnitZ();
    TangentBasis basis = make_tangent_basis(-Vec3::UnitZ());
    bool has_normal = false;
    std::set<ObservationId> observations;
    /// Set for the gauge keyframe permanently, and for the keyframes held
    /// constant during the current bundle adjustment.
    bool fixed = false;
    /// Landmarks this keyframe observed right after insertion; the keyframe
    /// policy compares tracked inliers of later frames against it.
    int reference_inliers = 0;
};

struct Landmark {
    LandmarkId id = 0;
    TrackId track_id = -1;
    Point3 position = Point3::Zero();
    std::map<KeyframeId, ObservationId> observations;
};

/// Keyframes, landmarks, observations and the covisibility graph. All
/// mutation goes through the member functions so that covisibility counts
/// stay equal to the true shared-landmark counts.
class MapState {
public:
    std::map<KeyframeId, Keyframe> keyframes;
    std::map<LandmarkId, Landmark> landmarks;
    std::map<ObservationId, StereoObservation> observations;
    std::map<TrackId, LandmarkId> track_to_landmark;

    Vec3 global_normal = -Vec3::UnitZ();
    bool has_global_normal = false;
    int normal_init_remaining = 0;

    Keyframe& add_keyframe(Keyframe kf) {
        const KeyframeId id = kf.id;
        auto [it, inserted] = keyframes.emplace(id, std::move(kf));
        if (!inserted) throw Error("duplicate keyframe id " + std::to_string(id));
        covisibility_[id];
        return it->second;
    }

    LandmarkId add_landmark(const Point3& position, TrackId track = -1) {
        const LandmarkId id = next_landmark_id_++;
        Landmark lm;
        lm.id = id;
        lm.track_id = track;
        lm.position = position;
        landmarks.emplace(id, std::move(lm));
        if (track >= 0) track_to_landmark[track] = id;
        return id;
    }

    ObservationId add_observation(KeyframeId kf_id, LandmarkId lm_id, const StereoPixel& pixel, double weight) {
        Keyframe& kf = keyframes.at(kf_id);
        Landmark& lm = landmarks.at(lm_id);
        if (lm.observations.contains(kf_id)) throw Error("landmark already observed by keyframe");
        for (const auto& [other, _] : lm.observations) {
            ++covisibility_[kf_id][other];
            ++covisibility_[other][kf_id];
        }
        const ObservationId id = next_observation_id_++;
        observations.emplace(id, StereoObservation{kf_id, lm_id, pixel, weight});
        lm.observations.emplace(kf_id, id);
        kf.observations.insert(id);
        return id;
    }

    /// Removes one observation; deletes the landmark when it was the last.
    /// Returns true if the landmark was deleted.
    bool remove_observation(ObservationId id) {
        const auto it = observations.find(id);
        if (it == observations.end()) return false;
        const StereoObservation obs = it->second;
        observations.erase(it);
        keyframes.at(obs.frame_id).observations.erase(id);
        Landmark& lm = landmarks.at(obs.landmark_id);
        lm.observations.erase(obs.frame_id);
        for (const auto& [other, _] : lm.observations) {
            decrement(obs.frame_id, other);
            decrement(other, obs.frame_id);
        }
        if (lm.observations.empty()) {
            erase_landmark_record(lm);
            return true;
        }
        return false;
    }

    void remove_landmark(LandmarkId id) {
        const auto it = landmarks.find(id);
        if (it == landmarks.end()) return;
        std::vector<ObservationId> obs_ids;
        for (const auto& [_, oid] : it->second.observations) obs_ids.push_back(oid);
        for (ObservationId oid : obs_ids) remove_observation(oid);
        if (landmarks.contains(id)) erase_landmark_record(landmarks.at(id));
    }

    [[nodiscard]] std::optional<LandmarkId> landmark_for_track(TrackId track) const {
        const auto it = track_to_landmark.find(track);
        if (it == track_to_landmark.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] int shared_landmarks(KeyframeId a, KeyframeId b) const {
        const auto it = covisibility_.find(a);
        if (it == covisibility_.end()) return 0;
        const auto jt = it->second.find(b);
        return jt == it->second.end() ? 0 : jt->second;
    }

    /// Keyframes sharing at least `min_shared` landmarks with `kf`, most
    /// covisible first (ties broken by id).
    [[nodiscard]] std::vector<std::pair<KeyframeId, int>> covisible(KeyframeId kf, int min_shared) const {
        std::vector<std::pair<KeyframeId, int>> out;
        const auto it = covisibility_.find(kf);
        if (it == covisibility_.end()) return out;
        for (const auto& [other, count] : it->second) {
            if (count >= min_shared) out.emplace_back(other, count);
        }
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        return out;
    }

    /// Recounts shared landmarks from scratch and compares with the
    /// incrementally maintained graph; also checks referential integrity.
    [[nodiscard]] bool consistent() const {
        std::map<KeyframeId, std::map<KeyframeId, int>> counts;
        for (const auto& [lid, lm] : landmarks) {
            if (lm.observations.empty()) return false;
            for (const auto& [a, oa] : lm.observations) {
                const auto o = observations.find(oa);
                if (o == observations.end() || o->second.landmark_id != lid || o->second.frame_id != a) return false;
                if (!keyframes.contains(a) || !keyframes.at(a).observations.contains(oa)) return false;
                for (const auto& [b, _] : lm.observations) {
                    if (a != b) ++counts[a][b];
                }
            }
        }
        for (const auto& [a, row] : covisibility_) {
            for (const auto& [b, c] : row) {
                if (c != 0 && (!counts.contains(a) || counts[a][b] != c)) return false;
            }
        }
        for (const auto& [a, row] : counts) {
            for (const auto& [b, c] : row) {
                if (shared_landmarks(a, b) != c) return false;
            }
        }
        std::size_t referenced = 0;
        for (const auto& [_, kf] : keyframes) referenced += kf.observations.size();
        return referenced == observations.size();
    }

private:
    void decrement(KeyframeId a, KeyframeId b) {
        auto& row = covisibility_[a];
        const auto it = row.find(b);
        if (it != row.end() && --it->second <= 0) row.erase(it);
    }

    void erase_landmark_record(const Landmark& lm) {
        const LandmarkId id = lm.id;
        const auto t = track_to_landmark.find(lm.track_id);
        if (t != track_to_landmark.end() && t->second == id) track_to_landmark.erase(t);
        landmarks.erase(id);
    }

    std::map<KeyframeId, std::map<KeyframeId, int>> covisibility_;
    LandmarkId next_landmark_id_ = 0;
    ObservationId next_observation_id_ = 0;
};

}  // namespace nvo
