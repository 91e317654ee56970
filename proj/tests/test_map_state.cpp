#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "nvo/map_state.hpp"

using namespace nvo;

namespace {

Keyframe make_keyframe(KeyframeId id) {
    Keyframe kf;
    kf.id = id;
    kf.timestamp = static_cast<double>(id);
    return kf;
}

StereoPixel pixel() { return {300.0, 200.0, 290.0}; }

}  // namespace

TEST(MapState, CovisibilityCountsSharedLandmarks) {
    MapState map;
    map.add_keyframe(make_keyframe(0));
    map.add_keyframe(make_keyframe(1));
    map.add_keyframe(make_keyframe(2));
    for (int i = 0; i < 40; ++i) {
        const LandmarkId l = map.add_landmark(Point3::Zero(), i);
        map.add_observation(0, l, pixel(), 1.0);
        if (i < 30) map.add_observation(1, l, pixel(), 1.0);
        if (i < 10) map.add_observation(2, l, pixel(), 1.0);
    }
    EXPECT_EQ(map.shared_landmarks(0, 1), 30);
    EXPECT_EQ(map.shared_landmarks(1, 0), 30);
    EXPECT_EQ(map.shared_landmarks(0, 2), 10);
    EXPECT_EQ(map.shared_landmarks(1, 2), 10);
    EXPECT_EQ(map.shared_landmarks(0, 0), 0);

    const auto neighbours = map.covisible(0, 15);
    ASSERT_EQ(neighbours.size(), 1u);
    EXPECT_EQ(neighbours[0].first, 1);
    EXPECT_EQ(neighbours[0].second, 30);
    const auto all = map.covisible(2, 1);
    ASSERT_EQ(all.size(), 2u);
    EXPECT_TRUE(map.consistent());
}

TEST(MapState, CovisibleOrdersByCountThenId) {
    MapState map;
    for (KeyframeId k = 0; k < 4; ++k) map.add_keyframe(make_keyframe(k));
    const int counts[] = {0, 5, 8, 5};
    for (int i = 0; i < 8; ++i) {
        const LandmarkId l = map.add_landmark(Point3::Zero(), i);
        map.add_observation(0, l, pixel(), 1.0);
        for (KeyframeId k = 1; k < 4; ++k) {
            if (i < counts[k]) map.add_observation(k, l, pixel(), 1.0);
        }
    }
    const auto n = map.covisible(0, 1);
    ASSERT_EQ(n.size(), 3u);
    EXPECT_EQ(n[0].first, 2);
    EXPECT_EQ(n[1].first, 1);
    EXPECT_EQ(n[2].first, 3);
}

TEST(MapState, RemovingObservationsUpdatesGraph) {
    MapState map;
    map.add_keyframe(make_keyframe(0));
    map.add_keyframe(make_keyframe(5));
    const LandmarkId a = map.add_landmark(Point3::Zero(), 7);
    const ObservationId oa0 = map.add_observation(0, a, pixel(), 1.0);
    const ObservationId oa5 = map.add_observation(5, a, pixel(), 1.0);
    EXPECT_EQ(map.shared_landmarks(0, 5), 1);

    EXPECT_FALSE(map.remove_observation(oa5));
    EXPECT_EQ(map.shared_landmarks(0, 5), 0);
    EXPECT_TRUE(map.consistent());
    EXPECT_TRUE(map.landmark_for_track(7).has_value());

    EXPECT_TRUE(map.remove_observation(oa0));
    EXPECT_FALSE(map.landmarks.contains(a));
    EXPECT_FALSE(map.landmark_for_track(7).has_value());
    EXPECT_FALSE(map.remove_observation(oa0));
    EXPECT_TRUE(map.consistent());
}

TEST(MapState, RemoveLandmarkDropsAllObservations) {
    MapState map;
    for (KeyframeId k = 0; k < 3; ++k) map.add_keyframe(make_keyframe(k));
    const LandmarkId l = map.add_landmark(Point3::Ones(), 3);
    for (KeyframeId k = 0; k < 3; ++k) map.add_observation(k, l, pixel(), 1.0);
    map.remove_landmark(l);
    EXPECT_TRUE(map.landmarks.empty());
    EXPECT_TRUE(map.observations.empty());
    for (const auto& [_, kf] : map.keyframes) EXPECT_TRUE(kf.observations.empty());
    EXPECT_EQ(map.shared_landmarks(0, 2), 0);
    EXPECT_TRUE(map.consistent());
}

TEST(MapState, RejectsDuplicates) {
    MapState map;
    map.add_keyframe(make_keyframe(0));
    EXPECT_THROW(map.add_keyframe(make_keyframe(0)), Error);
    const LandmarkId l = map.add_landmark(Point3::Zero());
    map.add_observation(0, l, pixel(), 1.0);
    EXPECT_THROW(map.add_observation(0, l, pixel(), 1.0), Error);
}

TEST(MapState, RandomMutationsStayConsistent) {
    std::mt19937_64 rng(21);
    MapState map;
    for (KeyframeId k = 0; k < 8; ++k) map.add_keyframe(make_keyframe(k));
    std::uniform_int_distribution<int> kf(0, 7);
    for (int i = 0; i < 200; ++i) {
        const LandmarkId l = map.add_landmark(Point3::Zero(), i);
        for (int j = 0; j < 4; ++j) {
            const KeyframeId k = kf(rng);
            if (!map.landmarks.at(l).observations.contains(k)) map.add_observation(k, l, pixel(), 1.0);
        }
    }
    ASSERT_TRUE(map.consistent());
    std::vector<ObservationId> ids;
    for (const auto& [id, _] : map.observations) ids.push_back(id);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(ids.size() / 2);
    for (ObservationId id : ids) map.remove_observation(id);
    EXPECT_TRUE(map.consistent());
    for (LandmarkId l = 0; l < 200; l += 7) map.remove_landmark(l);
    EXPECT_TRUE(map.consistent());
}
