#include "riskdrive/geometry.hpp"

namespace riskdrive {

std::array<Vec2, 4> corners(const OrientedBox& box) {
    const double c = std::cos(box.heading), s = std::sin(box.heading);
    const double hl = box.half_length, hw = box.half_width;
    const std::array<Vec2, 4> local = {Vec2{hl, hw}, Vec2{-hl, hw}, Vec2{-hl, -hw}, Vec2{hl, -hw}};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) {
        out[i] = {box.center.x + c * local[i].x - s * local[i].y,
                  box.center.y + s * local[i].x + c * local[i].y};
    }
    return out;
}

Interval project(const OrientedBox& box, const Vec2& axis) {
    if (std::abs(axis.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("project: axis must be unit length");
    const auto pts = corners(box);
    double lo = pts[0].dot(axis), hi = lo;
    for (int i = 1; i < 4; ++i) {
        const double d = pts[i].dot(axis);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return {lo, hi};
}

bool sat_intersects(const OrientedBox& a, const OrientedBox& b) {
    const std::array<Vec2, 4> axes = {
        unit_from_angle(a.heading),
        unit_from_angle(a.heading).perp(),
        unit_from_angle(b.heading),
        unit_from_angle(b.heading).perp(),
    };
    for (const auto& axis : axes) {
        if (project(a, axis).disjoint(project(b, axis))) return false;
    }
    return true;
}

bool contains_point(const OrientedBox& box, const Vec2& p) {
    const Vec2 d = p - box.center;
    const double c = std::cos(box.heading), s = std::sin(box.heading);
    const double lx = c * d.x + s * d.y;   // into box frame
    const double ly = -s * d.x + c * d.y;
    return std::abs(lx) <= box.half_length && std::abs(ly) <= box.half_width;
}

}  // namespace riskdrive
