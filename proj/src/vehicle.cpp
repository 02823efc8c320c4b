#include "riskdrive/vehicle.hpp"

#include <algorithm>

namespace riskdrive {

VehicleState step_bicycle(const VehicleState& state, const ControlInput& u, double dt) {
    VehicleState next = state;
    const double steering =
        std::clamp(u.steering, -state.behavior.str_limit, state.behavior.str_limit);
    const double beta = std::atan(0.5 * std::tan(steering));
    const double course = state.heading + beta;
    next.position.x += state.speed * std::cos(course) * dt;
    next.position.y += state.speed * std::sin(course) * dt;
    next.heading = wrap_angle(state.heading + state.speed / (state.length / 2.0) * std::sin(beta) * dt);
    next.speed = std::max(0.0, state.speed + u.acceleration * dt);
    return next;
}

double lateral_steering_control(const VehicleState& state, const Lane& target_lane,
                                double lookahead_s, const LateralGains& gains) {
    const FrenetPoint f = target_lane.to_frenet(state.position);
    const double speed = std::max(state.speed, 0.5);  // avoid singular low-speed commands

    const double s_ahead = target_lane.wrap_s(f.s + speed * lookahead_s);
    const double lane_heading =
        target_lane.heading_at(std::clamp(s_ahead, 0.0, target_lane.length()));

    // lateral offset -> lateral speed command -> heading reference
    const double lat_speed_cmd = -gains.kp_lateral * f.lateral;
    const double heading_cmd = std::asin(std::clamp(lat_speed_cmd / speed, -1.0, 1.0));
    const double heading_ref = lane_heading + std::clamp(heading_cmd, -M_PI / 4.0, M_PI / 4.0);

    // heading error -> yaw rate command -> front wheel angle
    const double yaw_rate_cmd = gains.kp_heading * wrap_angle(heading_ref - state.heading);
    const double slip =
        std::asin(std::clamp(state.length / 2.0 * yaw_rate_cmd / speed, -1.0, 1.0));
    const double steering = std::atan(2.0 * std::tan(slip));
    return std::clamp(steering, -state.behavior.str_limit, state.behavior.str_limit);
}

}  // namespace riskdrive
