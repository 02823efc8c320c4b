#pragma once

#include "riskdrive/behavior.hpp"
#include "riskdrive/geometry.hpp"
#include "riskdrive/road.hpp"

namespace riskdrive {

struct VehicleState {
    Vec2 position;
    double heading = 0.0;
    double speed = 0.0;  // m/s, clamped at 0 (no reversing)
    double length = 5.0;
    double width = 2.0;
    int lane_id = kNoLane;
    int target_lane_id = kNoLane;
    BehaviorParams behavior;
    bool is_ego = false;

    OrientedBox footprint() const {
        return OrientedBox(position, length / 2.0, width / 2.0, heading);
    }
};

// Kinematic bicycle update, forward Euler at fixed dt. Reference point at
// vehicle center, half-wheelbase = length/2.
VehicleState step_bicycle(const VehicleState& state, const ControlInput& u, double dt);

struct LateralGains {
    double kp_lateral = 1.0 / 0.6;  // 1/s
    double kp_heading = 1.0 / 0.2;  // 1/s
};

// Proportional heading/lateral-offset controller steering toward the target
// lane centerline; lookahead shifts the reference heading down the lane.
// Output clamped to the state's str_limit.
double lateral_steering_control(const VehicleState& state, const Lane& target_lane,
                                double lookahead_s = 0.3, const LateralGains& gains = {});

}  // namespace riskdrive
