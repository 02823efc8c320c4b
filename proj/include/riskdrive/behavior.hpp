#pragma once

#include <cmath>
#include <optional>

#include "riskdrive/rng.hpp"

namespace riskdrive {

// IDM / MOBIL parameters plus the sampling bounds for randomized
// risk-prone control.
struct BehaviorParams {
    double v0_desired_speed = 25.0;       // m/s
    double T_time_headway = 1.5;          // s
    double s0_min_gap = 5.0;              // m
    double a_max_accel = 3.0;             // m/s^2
    double b_comfort_decel = 5.0;         // m/s^2
    double delta_exponent = 4.0;
    double politeness_p = 0.3;
    double lane_change_min_gain = 0.2;    // m/s^2
    double b_safe_max_imposed_decel = 4.0;  // m/s^2
    double acc_min = -5.0;                // m/s^2 sampling bounds
    double acc_max = 5.0;
    double str_min = -M_PI / 3.0;         // rad sampling bounds
    double str_max = M_PI / 3.0;
    double str_limit = M_PI / 4.0;        // rad, steering clamp

    bool valid() const {
        return a_max_accel > 0.0 && b_comfort_decel > 0.0 && s0_min_gap > 0.0 &&
               T_time_headway >= 0.0 && acc_min <= acc_max && str_min <= str_max;
    }
};

struct ControlInput {
    double acceleration = 0.0;  // m/s^2
    double steering = 0.0;      // rad, front-wheel angle
};

// Longitudinal acceleration from own speed, gap to leader and closing speed.
// gap = nullopt means free road (interaction term vanishes). Gaps at or
// below zero are floored at 1e-3 m; collision termination handles the rest.
double idm_acceleration(double ego_speed, std::optional<double> gap, double closing_speed,
                        const BehaviorParams& p);

enum class LaneChange { Stay, Left, Right };

// Longitudinal snapshot of one surrounding vehicle, measured along the
// shared lane axis (positions are vehicle centers).
struct LongitudinalAgent {
    double s = 0.0;       // m
    double speed = 0.0;   // m/s
    double length = 5.0;  // m
};

struct LaneContext {
    std::optional<LongitudinalAgent> leader;
    std::optional<LongitudinalAgent> follower;
};

struct NeighborSet {
    double subject_s = 0.0;  // subject center along the same axis
    LaneContext current;
    std::optional<LaneContext> left;   // nullopt = no lane on that side
    std::optional<LaneContext> right;
};

// MOBIL lane-change decision: a change is proposed only when the safety
// criterion (imposed deceleration bound on the prospective follower) and the
// politeness-weighted incentive criterion both hold. Ties between left and
// right break toward the larger incentive, then toward staying.
LaneChange mobil_decide(double subject_speed, double subject_length, const NeighborSet& neighbors,
                        const BehaviorParams& p);

// Uniform draw in the closed control-sampling box (acc, then steering).
ControlInput sample_randomized_control(const BehaviorParams& p, Rng& rng);

}  // namespace riskdrive
