#pragma once

#include <variant>
#include <vector>

#include "riskdrive/geometry.hpp"

namespace riskdrive {

constexpr int kNoLane = -1;

struct StraightSegment {
    Vec2 start;
    Vec2 end;
};

// Circular arc from start_angle to end_angle around center. end_angle >
// start_angle means counterclockwise travel. Angles may span more than a
// full turn for loops.
struct ArcSegment {
    Vec2 center;
    double radius = 1.0;
    double start_angle = 0.0;
    double end_angle = 0.0;
};

struct FrenetPoint {
    double s = 0.0;        // longitudinal arc length from lane start, m
    double lateral = 0.0;  // signed offset, positive to the left of travel
};

class Lane {
public:
    int id = kNoLane;
    std::variant<StraightSegment, ArcSegment> geometry;
    double width = 4.0;
    double speed_limit = 25.0;  // m/s
    int successor = kNoLane;
    int left_neighbor = kNoLane;
    int right_neighbor = kNoLane;
    bool loops = false;  // ring lanes wrap s modulo length

    static Lane straight(int id, Vec2 start, Vec2 end, double speed_limit);
    static Lane arc(int id, Vec2 center, double radius, double start_angle, double end_angle,
                    double speed_limit);

    double length() const;
    // world point at (s, lateral)
    Vec2 position(double s, double lateral = 0.0) const;
    // travel heading at arc length s
    double heading_at(double s) const;
    // closest-point projection into lane coordinates; s is clamped to
    // [0, length] for straights and arcs, lateral is unclamped
    FrenetPoint to_frenet(const Vec2& p) const;
    // wrap s into [0, length) for looping lanes; pass-through otherwise
    double wrap_s(double s) const;
};

struct RoadNetwork {
    std::vector<Lane> lanes;

    const Lane& lane(int id) const { return lanes.at(static_cast<size_t>(id)); }
    Lane& lane(int id) { return lanes.at(static_cast<size_t>(id)); }
    // lane whose centerline is closest to p (by |lateral|, with s in range)
    int nearest_lane(const Vec2& p) const;
};

}  // namespace riskdrive
