#include "riskdrive/road.hpp"

#include <algorithm>
#include <limits>

namespace riskdrive {

Lane Lane::straight(int id, Vec2 start, Vec2 end, double speed_limit) {
    if ((end - start).norm() <= 0.0)
        throw std::invalid_argument("Lane::straight: zero-length segment");
    Lane l;
    l.id = id;
    l.geometry = StraightSegment{start, end};
    l.speed_limit = speed_limit;
    return l;
}

Lane Lane::arc(int id, Vec2 center, double radius, double start_angle, double end_angle,
               double speed_limit) {
    if (!(radius > 0.0)) throw std::invalid_argument("Lane::arc: radius must be positive");
    if (start_angle == end_angle) throw std::invalid_argument("Lane::arc: zero sweep");
    Lane l;
    l.id = id;
    l.geometry = ArcSegment{center, radius, start_angle, end_angle};
    l.speed_limit = speed_limit;
    return l;
}

double Lane::length() const {
    if (const auto* seg = std::get_if<StraightSegment>(&geometry))
        return (seg->end - seg->start).norm();
    const auto& arc = std::get<ArcSegment>(geometry);
    return arc.radius * std::abs(arc.end_angle - arc.start_angle);
}

double Lane::wrap_s(double s) const {
    if (!loops) return s;
    const double len = length();
    s = std::fmod(s, len);
    if (s < 0.0) s += len;
    return s;
}

Vec2 Lane::position(double s, double lateral) const {
    if (const auto* seg = std::get_if<StraightSegment>(&geometry)) {
        const Vec2 d = seg->end - seg->start;
        const Vec2 dir = d * (1.0 / d.norm());
        return seg->start + dir * s + dir.perp() * lateral;
    }
    const auto& arc = std::get<ArcSegment>(geometry);
    const bool ccw = arc.end_angle > arc.start_angle;
    const double phi = ccw ? arc.start_angle + s / arc.radius : arc.start_angle - s / arc.radius;
    // left of travel points toward the center on CCW arcs, away on CW
    const double r = ccw ? arc.radius - lateral : arc.radius + lateral;
    return arc.center + unit_from_angle(phi) * r;
}

double Lane::heading_at(double s) const {
    if (const auto* seg = std::get_if<StraightSegment>(&geometry)) {
        const Vec2 d = seg->end - seg->start;
        return std::atan2(d.y, d.x);
    }
    const auto& arc = std::get<ArcSegment>(geometry);
    const bool ccw = arc.end_angle > arc.start_angle;
    const double phi = ccw ? arc.start_angle + s / arc.radius : arc.start_angle - s / arc.radius;
    return wrap_angle(ccw ? phi + M_PI_2 : phi - M_PI_2);
}

FrenetPoint Lane::to_frenet(const Vec2& p) const {
    if (const auto* seg = std::get_if<StraightSegment>(&geometry)) {
        const Vec2 d = seg->end - seg->start;
        const double len = d.norm();
        const Vec2 dir = d * (1.0 / len);
        const Vec2 v = p - seg->start;
        const double s = std::clamp(v.dot(dir), 0.0, len);
        return {s, dir.cross(v)};  // dir x v > 0 when p is left of dir
    }
    const auto& arc = std::get<ArcSegment>(geometry);
    const bool ccw = arc.end_angle > arc.start_angle;
    const Vec2 rel = p - arc.center;
    const double phi = std::atan2(rel.y, rel.x);
    const double sweep = std::abs(arc.end_angle - arc.start_angle);
    // angular advance from the start, in [0, 2*pi)
    double delta = ccw ? phi - arc.start_angle : arc.start_angle - phi;
    delta = std::fmod(delta, 2.0 * M_PI);
    if (delta < 0.0) delta += 2.0 * M_PI;
    if (delta > sweep) {
        // outside the sweep: snap to the closer endpoint
        const double past_end = delta - sweep;
        const double before_start = 2.0 * M_PI - delta;
        delta = past_end <= before_start ? sweep : 0.0;
    }
    const double s = arc.radius * delta;
    const double dist = rel.norm();
    const double lateral = ccw ? arc.radius - dist : dist - arc.radius;
    return {s, lateral};
}

int RoadNetwork::nearest_lane(const Vec2& p) const {
    int best = kNoLane;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& l : lanes) {
        const FrenetPoint f = l.to_frenet(p);
        const double d = (p - l.position(f.s, 0.0)).norm();
        if (d < best_dist) {
            best_dist = d;
            best = l.id;
        }
    }
    return best;
}

}  // namespace riskdrive
