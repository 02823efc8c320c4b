#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace riskdrive {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
    constexpr double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    constexpr double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    constexpr double norm_sq() const { return x * x + y * y; }
    // perpendicular, rotated +90 degrees
    constexpr Vec2 perp() const { return {-y, x}; }
    Vec2 rotated(double angle) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {c * x - s * y, s * x + c * y};
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }

// wrap angle to (-pi, pi]
inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool disjoint(const Interval& o) const { return hi < o.lo || o.hi < lo; }
};

// Rotated rectangle footprint; unit of collision detection.
struct OrientedBox {
    Vec2 center;
    double half_length = 1.0;
    double half_width = 1.0;
    double heading = 0.0;

    OrientedBox() = default;
    OrientedBox(Vec2 c, double hl, double hw, double h)
        : center(c), half_length(hl), half_width(hw), heading(h) {
        if (!(hl > 0.0) || !(hw > 0.0))
            throw std::invalid_argument("OrientedBox: half extents must be positive");
    }
};

// World-space corner points, counterclockwise.
std::array<Vec2, 4> corners(const OrientedBox& box);

// Projection of the box onto a unit axis. Throws if |axis| deviates from 1
// by more than 1e-9.
Interval project(const OrientedBox& box, const Vec2& axis);

// Separating axis test specialized to rectangles: 4 candidate axes (2 edge
// normals per box). Touching boundaries count as intersecting.
bool sat_intersects(const OrientedBox& a, const OrientedBox& b);

// true iff p lies inside or on the boundary of the box
bool contains_point(const OrientedBox& box, const Vec2& p);

}  // namespace riskdrive
