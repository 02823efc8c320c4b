#include "riskdrive/behavior.hpp"

#include <algorithm>

namespace riskdrive {

double idm_acceleration(double ego_speed, std::optional<double> gap, double closing_speed,
                        const BehaviorParams& p) {
    const double v = std::max(0.0, ego_speed);
    double interaction = 0.0;
    if (gap.has_value()) {
        const double s = std::max(*gap, 1e-3);
        const double dynamic =
            v * p.T_time_headway +
            v * closing_speed / (2.0 * std::sqrt(p.a_max_accel * p.b_comfort_decel));
        const double s_star = p.s0_min_gap + std::max(0.0, dynamic);
        interaction = (s_star / s) * (s_star / s);
    }
    const double free_term = std::pow(v / p.v0_desired_speed, p.delta_exponent);
    return p.a_max_accel * (1.0 - free_term - interaction);
}

namespace {

std::optional<double> gap_between(const LongitudinalAgent& rear, const LongitudinalAgent& front) {
    return front.s - rear.s - 0.5 * (front.length + rear.length);
}

double accel_of(const LongitudinalAgent& self, const std::optional<LongitudinalAgent>& leader,
                const BehaviorParams& p) {
    if (!leader.has_value())
        return idm_acceleration(self.speed, std::nullopt, 0.0, p);
    return idm_acceleration(self.speed, gap_between(self, *leader), self.speed - leader->speed, p);
}

struct CandidateGain {
    bool safe = false;
    double incentive = 0.0;
};

CandidateGain evaluate_candidate(const LongitudinalAgent& subject, const LaneContext& current,
                                 const LaneContext& target, const BehaviorParams& p) {
    CandidateGain out;

    // accelerations before the change
    const double a_subject = accel_of(subject, current.leader, p);
    double a_new_follower = 0.0, a_new_follower_after = 0.0;
    if (target.follower.has_value()) {
        a_new_follower = accel_of(*target.follower, target.leader, p);
        a_new_follower_after =
            accel_of(*target.follower, std::optional<LongitudinalAgent>(subject), p);
    }
    double a_old_follower = 0.0, a_old_follower_after = 0.0;
    if (current.follower.has_value()) {
        a_old_follower = accel_of(*current.follower, std::optional<LongitudinalAgent>(subject), p);
        a_old_follower_after = accel_of(*current.follower, current.leader, p);
    }
    const double a_subject_after = accel_of(subject, target.leader, p);

    // safety criterion: the prospective follower must not be forced below -b_safe
    if (target.follower.has_value() && a_new_follower_after < -p.b_safe_max_imposed_decel)
        return out;
    // never cut in overlapping a neighbor
    if (target.follower.has_value() && gap_between(*target.follower, subject) <= 0.0) return out;
    if (target.leader.has_value() && gap_between(subject, *target.leader) <= 0.0) return out;

    out.safe = true;
    out.incentive = a_subject_after - a_subject +
                    p.politeness_p * ((a_new_follower_after - a_new_follower) +
                                      (a_old_follower_after - a_old_follower));
    return out;
}

}  // namespace

LaneChange mobil_decide(double subject_speed, double subject_length, const NeighborSet& neighbors,
                        const BehaviorParams& p) {
    const LongitudinalAgent subject{neighbors.subject_s, subject_speed, subject_length};

    CandidateGain left, right;
    if (neighbors.left.has_value())
        left = evaluate_candidate(subject, neighbors.current, *neighbors.left, p);
    if (neighbors.right.has_value())
        right = evaluate_candidate(subject, neighbors.current, *neighbors.right, p);

    const bool left_ok = left.safe && left.incentive > p.lane_change_min_gain;
    const bool right_ok = right.safe && right.incentive > p.lane_change_min_gain;
    if (left_ok && right_ok) {
        if (left.incentive > right.incentive) return LaneChange::Left;
        if (right.incentive > left.incentive) return LaneChange::Right;
        return LaneChange::Stay;  // exact tie
    }
    if (left_ok) return LaneChange::Left;
    if (right_ok) return LaneChange::Right;
    return LaneChange::Stay;
}

ControlInput sample_randomized_control(const BehaviorParams& p, Rng& rng) {
    ControlInput u;
    u.acceleration = p.acc_min + rng.uniform() * (p.acc_max - p.acc_min);
    u.steering = p.str_min + rng.uniform() * (p.str_max - p.str_min);
    return u;
}

}  // namespace riskdrive
