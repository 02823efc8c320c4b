#include "riskdrive/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace riskdrive {

namespace {

constexpr double kBroadPhaseDist = 10.0;        // m, SAT gate
constexpr double kRiskTriggerProb = 0.5;        // per-tick override chance
constexpr double kTreatmentBSafe = 8.0;         // relaxed imposed-decel bound
constexpr double kClogRadius = 40.0;            // m around conflict points
constexpr double kClogFactor = 0.5;             // spacing multiplier
constexpr double kLeaderLookahead = 80.0;       // m
constexpr int kTicksPerSecond = 15;
constexpr double kLaneBindHalfWidth = 1.0;      // m, switch binding to target
constexpr double kLaneChangeDoneLateral = 0.3;  // m
constexpr double kOffRoadLateral = 4.0;         // m from nearest centerline
constexpr double kArrivalMinS = 3.0;            // m into the goal lane

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

const char* task_name(Task t) {
    switch (t) {
        case Task::Highway: return "highway";
        case Task::TwoWay: return "two_way";
        case Task::Roundabout: return "roundabout";
        case Task::Intersection: return "intersection";
        case Task::UTurn: return "u_turn";
    }
    return "unknown";
}

std::optional<Task> task_from_name(const std::string& name) {
    if (name == "highway") return Task::Highway;
    if (name == "two_way") return Task::TwoWay;
    if (name == "roundabout") return Task::Roundabout;
    if (name == "intersection") return Task::Intersection;
    if (name == "u_turn") return Task::UTurn;
    return std::nullopt;
}

ScenarioConfig apply_treatment(const ScenarioConfig& cfg) {
    if (cfg.treatment) throw ConfigError("apply_treatment: config already treated");
    ScenarioConfig out = cfg;
    out.treatment = true;
    return out;
}

int two_way_opposite_count(int same_dir_count) {
    return static_cast<int>(std::lround(0.4 * same_dir_count));
}

const WorldVehicle* World::find_vehicle(int id) const {
    for (const auto& v : vehicles)
        if (v.id == id) return &v;
    return nullptr;
}

// ---------------------------------------------------------------------------
// validation

namespace {

void validate_config(const ScenarioConfig& cfg) {
    const int n = cfg.vehicle_count;
    switch (cfg.task) {
        case Task::Highway:
            // paper sweep runs 50-150; smaller counts (down to empty) are
            // legal for desk-scale and free-flow runs
            if (n < 0 || n > 300) throw ConfigError("highway vehicle_count out of range [0, 300]");
            break;
        case Task::TwoWay:
            if (n < 5 || n > 15)
                throw ConfigError("two_way vehicle_count (same-direction) out of range [5, 15]");
            break;
        case Task::Roundabout:
            if (n < 5 || n > 15) throw ConfigError("roundabout vehicle_count out of range [5, 15]");
            break;
        case Task::Intersection:
            if (n < 10 || n > 30)
                throw ConfigError("intersection vehicle_count out of range [10, 30]");
            break;
        case Task::UTurn:
            if (n < 3 || n > 12) throw ConfigError("u_turn vehicle_count out of range [3, 12]");
            break;
    }
    if (cfg.density_multiplier < 1.0) throw ConfigError("density_multiplier must be >= 1");
    if (cfg.spawn_probability < 0.0 || cfg.spawn_probability > 1.0)
        throw ConfigError("spawn_probability must be in [0, 1]");
    if (cfg.perturbed_fraction < 0.0 || cfg.perturbed_fraction > 1.0)
        throw ConfigError("perturbed_fraction must be in [0, 1]");
    if (cfg.road_length_factor <= 0.1 || cfg.road_length_factor > 1.0)
        throw ConfigError("road_length_factor must be in (0.1, 1]");
    if (cfg.episode_duration <= 0.0) throw ConfigError("episode_duration must be positive");
}

// ---------------------------------------------------------------------------
// placement helpers

struct Builder {
    World& w;
    Rng place_rng;
    int attempts = 0;
    int max_attempts = 0;

    explicit Builder(World& world)
        : w(world),
          place_rng(world.cfg.seed),
          max_attempts(100 * std::max(1, world.cfg.vehicle_count)) {}

    double clog_factor(const Vec2& p) const {
        if (!w.cfg.treatment) return 1.0;
        for (const auto& c : w.conflict_points)
            if ((p - c).norm() <= kClogRadius) return kClogFactor;
        return 1.0;
    }

    bool collides_existing(const VehicleState& s) const {
        const OrientedBox box = s.footprint();
        for (const auto& v : w.vehicles) {
            if ((v.state.position - s.position).norm() > kBroadPhaseDist) continue;
            if (sat_intersects(box, v.state.footprint())) return true;
        }
        return false;
    }

    // places a vehicle on the lane centerline; returns false when the slot
    // is occupied (attempt charged)
    bool place(int lane_id, double s, double speed, const BehaviorParams& bp, bool is_ego) {
        const Lane& lane = w.road.lane(lane_id);
        VehicleState st;
        st.position = lane.position(lane.wrap_s(s), 0.0);
        st.heading = lane.heading_at(lane.wrap_s(s));
        st.speed = speed;
        st.lane_id = lane_id;
        st.target_lane_id = lane_id;
        st.behavior = bp;
        st.is_ego = is_ego;
        if (collides_existing(st)) {
            ++attempts;
            if (attempts > max_attempts)
                throw PlacementError(std::string("collision-free placement failed for task ") +
                                     task_name(w.task));
            return false;
        }
        WorldVehicle v;
        v.id = static_cast<int>(w.vehicles.size());
        v.state = st;
        v.target_speed = speed;
        v.frenet_s = lane.wrap_s(s);
        w.vehicles.push_back(v);
        return true;
    }
};

BehaviorParams background_params(const ScenarioConfig& cfg, double v0) {
    BehaviorParams p;
    p.v0_desired_speed = v0;
    if (cfg.treatment) p.b_safe_max_imposed_decel = kTreatmentBSafe;
    return p;
}

void assign_risk_flags(World& w) {
    if (!w.cfg.treatment) return;
    const int n = static_cast<int>(w.vehicles.size()) - 1;  // background only
    if (n <= 0) return;
    const int k = static_cast<int>(std::lround(w.cfg.perturbed_fraction * n));
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 1);  // ids 1..n
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(w.risk_rng.uniform_int(static_cast<uint64_t>(i + 1)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int i = 0; i < k; ++i) {
        auto& v = w.vehicles[static_cast<size_t>(order[static_cast<size_t>(i)])];
        v.risk_flagged = true;
        v.state.behavior.politeness_p = 0.0;
    }
}

// ---------------------------------------------------------------------------
// task networks

void build_highway(World& w, Builder& b) {
    const ScenarioConfig& cfg = w.cfg;
    const int n_lanes = 4;
    const double spacing = 30.0 / cfg.density_multiplier;
    const double length = 800.0 + cfg.vehicle_count * (spacing + 5.0) / n_lanes;
    for (int i = 0; i < n_lanes; ++i) {
        Lane l = Lane::straight(i, {0.0, 4.0 * i}, {length, 4.0 * i}, 30.0);
        l.left_neighbor = (i + 1 < n_lanes) ? i + 1 : kNoLane;
        l.right_neighbor = (i > 0) ? i - 1 : kNoLane;
        w.road.lanes.push_back(l);
    }
    w.background_mobil = true;

    const double ego_s = 140.0;
    const int ego_lane = 1;
    w.conflict_points.push_back(w.road.lane(ego_lane).position(ego_s, 0.0));

    BehaviorParams ego_bp = background_params(cfg, 30.0);
    b.place(ego_lane, ego_s, 23.0, ego_bp, true);

    std::array<double, 4> cursor = {25.0, 25.0, 25.0, 25.0};
    int placed = 0;
    while (placed < cfg.vehicle_count) {
        const int lane = static_cast<int>(b.place_rng.uniform_int(n_lanes));
        const double gap = spacing * b.place_rng.uniform(0.75, 1.25);
        const double v0 = b.place_rng.uniform(21.0, 25.0);
        double s = cursor[static_cast<size_t>(lane)];
        s += gap * b.clog_factor(w.road.lane(lane).position(s, 0.0));
        while (!b.place(lane, s, 0.8 * v0, background_params(cfg, v0), false)) s += 10.0;
        cursor[static_cast<size_t>(lane)] = s + 5.0;
        ++placed;
    }
}

void build_two_way(World& w, Builder& b) {
    const ScenarioConfig& cfg = w.cfg;
    const double length = 1000.0 * cfg.road_length_factor;
    {
        Lane l0 = Lane::straight(0, {0.0, 0.0}, {length, 0.0}, 25.0);  // ego direction
        l0.left_neighbor = 2;
        Lane l1 = Lane::straight(1, {length, 4.0}, {0.0, 4.0}, 15.0);  // oncoming
        Lane l2 = Lane::straight(2, {0.0, 4.0}, {length, 4.0}, 25.0);  // overtake target
        l2.right_neighbor = 0;
        w.road.lanes = {l0, l1, l2};
    }
    w.background_mobil = false;  // traffic holds its lane; only the ego overtakes
    w.conflict_points.push_back({length / 2.0, 2.0});

    b.place(0, 30.0, 14.0, background_params(cfg, 28.0), true);

    // slow same-direction traffic ahead of the ego
    const double span = length - 150.0;
    const double spacing = span / std::max(1, cfg.vehicle_count) / cfg.density_multiplier;
    double cursor = 75.0;
    for (int i = 0; i < cfg.vehicle_count; ++i) {
        const double gap = spacing * b.place_rng.uniform(0.8, 1.2);
        const double v0 = b.place_rng.uniform(9.0, 12.0);
        double s = cursor + gap * b.clog_factor({cursor + gap, 0.0});
        while (!b.place(0, s, 0.8 * v0, background_params(cfg, v0), false)) s += 8.0;
        cursor = s + 5.0;
    }
    // oncoming traffic
    const int n_opp = two_way_opposite_count(cfg.vehicle_count);
    const double opp_spacing = (length - 200.0) / std::max(1, n_opp) / cfg.density_multiplier;
    double opp_cursor = 90.0;
    for (int i = 0; i < n_opp; ++i) {
        const double gap = opp_spacing * b.place_rng.uniform(0.8, 1.2);
        const double v0 = b.place_rng.uniform(10.0, 13.0);
        double s = opp_cursor + gap * b.clog_factor(w.road.lane(1).position(opp_cursor + gap, 0.0));
        while (!b.place(1, s, 0.8 * v0, background_params(cfg, v0), false)) s += 8.0;
        opp_cursor = s + 5.0;
    }
}

void build_roundabout(World& w, Builder& b) {
    const ScenarioConfig& cfg = w.cfg;
    const double R = 22.0;
    const double circumference = 2.0 * M_PI * R;
    Lane ring = Lane::arc(0, {0.0, 0.0}, R, 0.0, 2.0 * M_PI, 9.0);
    ring.loops = true;
    ring.successor = 0;
    w.road.lanes.push_back(ring);

    RoundaboutInfo info;
    info.ring_lane = 0;
    const std::array<double, 4> leg_angles = {-M_PI_2, 0.0, M_PI_2, M_PI};  // S, E, N, W
    for (int k = 0; k < 4; ++k) {
        const double theta_m = leg_angles[static_cast<size_t>(k)] + 0.28;
        const Vec2 end = Vec2{std::cos(theta_m), std::sin(theta_m)} * R;
        const Vec2 tangent = Vec2{-std::sin(theta_m), std::cos(theta_m)};
        const Vec2 dir = tangent.rotated(-0.35);
        Lane entry = Lane::straight(1 + k, end - dir * 60.0, end, 8.0);
        entry.successor = 0;
        w.road.lanes.push_back(entry);
        info.entries.push_back({1 + k, ring.wrap_s(R * theta_m)});
        w.conflict_points.push_back(end);
    }
    // ego exits at the north leg
    {
        const double theta_x = M_PI_2 - 0.25;
        const Vec2 start = Vec2{std::cos(theta_x), std::sin(theta_x)} * R;
        const Vec2 dir = Vec2{-std::sin(theta_x), std::cos(theta_x)}.rotated(-0.4);
        Lane exit = Lane::straight(5, start, start + dir * 60.0, 12.0);
        w.road.lanes.push_back(exit);
        info.ego_exit_lane = 5;
        info.ego_exit_s = ring.wrap_s(R * theta_x);
    }
    w.roundabout = info;
    w.ego_goal_lanes = {5};
    w.background_mobil = false;

    const int ego_entry = 1;  // south
    b.place(ego_entry, 12.0, 7.0, background_params(cfg, 9.0), true);

    // most traffic circulates; the rest queues on the entries
    const int n_ring = std::max(1, static_cast<int>(std::lround(0.65 * cfg.vehicle_count)));
    const double base_gap = circumference / n_ring;
    for (int i = 0; i < n_ring; ++i) {
        const double jitter = b.place_rng.uniform(-0.3, 0.3);
        const double v0 = b.place_rng.uniform(7.0, 9.0);
        double s = base_gap * (i + 0.5 + jitter);
        while (!b.place(0, s, 0.8 * v0, background_params(cfg, v0), false)) s += 6.0;
    }
    int remaining = cfg.vehicle_count - n_ring;
    int entry_idx = 0;
    std::array<double, 4> entry_cursor = {30.0, 46.0, 46.0, 46.0};  // ego sits on the south entry
    int guard = 0;
    while (remaining > 0 && guard++ < 200) {
        const int k = entry_idx % 4;
        entry_idx++;
        double& cur = entry_cursor[static_cast<size_t>(k)];
        if (cur < 8.0) continue;  // entry full
        const Lane& lane = w.road.lane(1 + k);
        const double spacing =
            13.0 * b.place_rng.uniform(0.9, 1.1) * b.clog_factor(lane.position(cur, 0.0));
        if (b.place(1 + k, cur, 4.0, background_params(cfg, b.place_rng.uniform(7.0, 9.0)),
                    false)) {
            --remaining;
        }
        cur -= std::max(spacing, 9.0);
    }
    if (remaining > 0)
        throw PlacementError("collision-free placement failed for task roundabout");
}

void build_intersection(World& w, Builder& b) {
    const ScenarioConfig& cfg = w.cfg;
    const double zone_half = 7.0;
    const double approach_len = 110.0;
    IntersectionInfo info;
    info.zone_half = zone_half;

    // legs S, E, N, W; right-hand lane offsets; straight-through routes
    struct LegGeom {
        Vec2 dir;     // travel direction toward the zone
        Vec2 offset;  // lateral shift of the lane centerline
    };
    const std::array<LegGeom, 4> geom = {
        LegGeom{{0.0, 1.0}, {2.0, 0.0}},    // S: northbound at x = +2
        LegGeom{{-1.0, 0.0}, {0.0, 2.0}},   // E: westbound at y = +2
        LegGeom{{0.0, -1.0}, {-2.0, 0.0}},  // N: southbound at x = -2
        LegGeom{{1.0, 0.0}, {0.0, -2.0}},   // W: eastbound at y = -2
    };
    int next_id = 0;
    for (int k = 0; k < 4; ++k) {
        const auto& g = geom[static_cast<size_t>(k)];
        const Vec2 zone_in = g.offset - g.dir * zone_half;
        const Vec2 zone_out = g.offset + g.dir * zone_half;
        Lane approach =
            Lane::straight(next_id++, zone_in - g.dir * approach_len, zone_in, 9.0);
        Lane connector = Lane::straight(next_id++, zone_in, zone_out, 8.0);
        Lane exit = Lane::straight(next_id++, zone_out, zone_out + g.dir * approach_len, 12.0);
        approach.successor = connector.id;
        connector.successor = exit.id;
        w.road.lanes.push_back(approach);
        w.road.lanes.push_back(connector);
        w.road.lanes.push_back(exit);
        info.legs[static_cast<size_t>(k)] = {approach.id, connector.id, exit.id, (k + 1) % 4};
        w.conflict_points.push_back(zone_in);
    }
    w.intersection = info;
    w.ego_goal_lanes = {info.legs[0].exit};
    w.background_mobil = false;

    // ego approaches from the south, 70 m out
    b.place(info.legs[0].approach, approach_len - 70.0, 8.0, background_params(cfg, 10.0), true);

    std::array<double, 4> cursor;
    cursor.fill(approach_len - 16.0);
    cursor[0] = approach_len - 58.0;  // keep clear of the ego slot
    int placed = 0;
    int leg = 0;
    int guard = 0;
    while (placed < cfg.vehicle_count && guard++ < 2000) {
        const int k = leg % 4;
        leg++;
        double& cur = cursor[static_cast<size_t>(k)];
        if (cur < 6.0) continue;
        const Lane& lane = w.road.lane(info.legs[static_cast<size_t>(k)].approach);
        const double spacing =
            11.0 * b.place_rng.uniform(0.85, 1.15) * b.clog_factor(lane.position(cur, 0.0));
        const double v0 = b.place_rng.uniform(7.5, 9.0);
        if (k == 0 && std::abs(cur - (approach_len - 70.0)) < 9.0) {
            cur -= 9.0;  // ego slot
            continue;
        }
        if (b.place(info.legs[static_cast<size_t>(k)].approach, cur, 5.0,
                    background_params(cfg, v0), false))
            ++placed;
        cur -= std::max(spacing, 8.0);
    }
    if (placed < cfg.vehicle_count)
        throw PlacementError("collision-free placement failed for task intersection");
}

void build_u_turn(World& w, Builder& b) {
    const ScenarioConfig& cfg = w.cfg;
    const double straight_len = 120.0;
    const Vec2 arc_center{straight_len, 12.0};

    Lane out0 = Lane::straight(0, {0.0, 0.0}, {straight_len, 0.0}, 10.0);
    Lane out1 = Lane::straight(1, {0.0, 4.0}, {straight_len, 4.0}, 10.0);
    Lane arc_outer = Lane::arc(2, arc_center, 12.0, -M_PI_2, M_PI_2, 7.0);
    Lane arc_inner = Lane::arc(3, arc_center, 8.0, -M_PI_2, M_PI_2, 7.0);
    Lane ret_outer = Lane::straight(4, {straight_len, 24.0}, {0.0, 24.0}, 10.0);
    Lane ret_inner = Lane::straight(5, {straight_len, 20.0}, {0.0, 20.0}, 10.0);
    out0.left_neighbor = 1;
    out1.right_neighbor = 0;
    ret_outer.left_neighbor = 5;
    ret_inner.right_neighbor = 4;
    out0.successor = 2;
    out1.successor = 3;
    arc_outer.successor = 4;
    arc_inner.successor = 5;
    w.road.lanes = {out0, out1, arc_outer, arc_inner, ret_outer, ret_inner};
    w.background_mobil = true;
    w.ego_goal_lanes = {4, 5};
    w.conflict_points.push_back(arc_center + Vec2{12.0, 0.0});  // apex

    b.place(0, 8.0, 8.0, background_params(cfg, 10.0), true);

    const std::array<int, 4> order = {0, 1, 4, 5};
    std::array<double, 4> cursor = {40.0, 24.0, 14.0, 30.0};
    int placed = 0;
    int idx = 0;
    int guard = 0;
    while (placed < cfg.vehicle_count && guard++ < 500) {
        const int k = idx % 4;
        idx++;
        const int lane_id = order[static_cast<size_t>(k)];
        double& cur = cursor[static_cast<size_t>(k)];
        if (cur > straight_len - 6.0) continue;
        const Lane& lane = w.road.lane(lane_id);
        const double spacing = (22.0 / cfg.density_multiplier) * b.place_rng.uniform(0.85, 1.15) *
                               b.clog_factor(lane.position(cur, 0.0));
        const double v0 = b.place_rng.uniform(8.0, 10.0);
        if (b.place(lane_id, cur, 0.8 * v0, background_params(cfg, v0), false)) ++placed;
        cur += std::max(spacing, 8.0);
    }
    if (placed < cfg.vehicle_count)
        throw PlacementError("collision-free placement failed for task u_turn");
}

}  // namespace

World build_scenario(const ScenarioConfig& cfg) {
    validate_config(cfg);
    World w;
    w.task = cfg.task;
    w.cfg = cfg;
    w.rng = Rng(cfg.seed ^ 0xD1F3A4C9B2E58761ULL);
    w.risk_rng = Rng(cfg.seed ^ 0x5BF03625DCA8E4F2ULL);

    Builder b(w);
    switch (cfg.task) {
        case Task::Highway: build_highway(w, b); break;
        case Task::TwoWay: build_two_way(w, b); break;
        case Task::Roundabout: build_roundabout(w, b); break;
        case Task::Intersection: build_intersection(w, b); break;
        case Task::UTurn: build_u_turn(w, b); break;
    }
    assign_risk_flags(w);

    // initial worlds must be collision free
    for (size_t i = 0; i < w.vehicles.size(); ++i)
        for (size_t j = i + 1; j < w.vehicles.size(); ++j) {
            const auto& a = w.vehicles[i].state;
            const auto& c = w.vehicles[j].state;
            if ((a.position - c.position).norm() > kBroadPhaseDist) continue;
            if (sat_intersects(a.footprint(), c.footprint()))
                throw PlacementError(std::string("initial overlap in task ") + task_name(w.task));
        }
    return w;
}

// ---------------------------------------------------------------------------
// stepping

namespace {

double s_on_lane(const Lane& lane, const Vec2& pos) { return lane.to_frenet(pos).s; }

struct LeaderHit {
    double gap = 0.0;    // bumper to bumper
    double speed = 0.0;  // leader speed
};

bool vehicle_uses_lane(const WorldVehicle& v, int lane_id) {
    return v.state.lane_id == lane_id || v.state.target_lane_id == lane_id;
}

std::optional<LeaderHit> find_leader(const World& w, const WorldVehicle& self, int lane_id,
                                     double ref_s) {
    std::optional<LeaderHit> best;
    double best_delta = kLeaderLookahead;
    int cur = lane_id;
    double base = 0.0;
    for (int hop = 0; hop < 3 && cur != kNoLane; ++hop) {
        const Lane& lane = w.road.lane(cur);
        for (const auto& u : w.vehicles) {
            if (u.id == self.id || u.off_road) continue;
            if (!vehicle_uses_lane(u, cur)) continue;
            const double su = (u.state.lane_id == cur && hop == 0) ? u.frenet_s
                                                                   : s_on_lane(lane, u.state.position);
            double delta = hop == 0 ? su - ref_s : base + su;
            if (lane.loops) {
                delta = std::fmod(delta, lane.length());
                if (delta < 0.0) delta += lane.length();
            }
            if (delta <= 1e-9 || delta >= best_delta) continue;
            best_delta = delta;
            best = LeaderHit{delta - 0.5 * (u.state.length + self.state.length), u.state.speed};
        }
        if (lane.loops) break;  // wrap already covers the ring
        base += hop == 0 ? lane.length() - ref_s : lane.length();
        if (base > kLeaderLookahead) break;
        cur = lane.successor;
    }
    return best;
}

// distance from the vehicle center to the gating stop line, when a junction
// gate currently blocks this vehicle
std::optional<double> gate_stop_distance(const World& w, const WorldVehicle& v) {
    if (w.intersection.has_value()) {
        const auto& info = *w.intersection;
        for (int k = 0; k < 4; ++k) {
            const auto& leg = info.legs[static_cast<size_t>(k)];
            if (v.state.lane_id != leg.approach) continue;
            const Lane& lane = w.road.lane(leg.approach);
            const double to_end = lane.length() - v.frenet_s;
            if (to_end > 32.0 || to_end < 0.5) return std::nullopt;
            bool blocked = false;
            const int conflicts[2] = {(k + 1) % 4, (k + 3) % 4};
            for (const int ck : conflicts) {
                const auto& other = info.legs[static_cast<size_t>(ck)];
                for (const auto& u : w.vehicles) {
                    if (u.id == v.id || u.off_road) continue;
                    if (u.state.lane_id == other.connector) blocked = true;
                    if (u.state.lane_id == other.approach) {
                        const double their_to_end =
                            w.road.lane(other.approach).length() - u.frenet_s;
                        // near window: anyone about to enter blocks
                        if (their_to_end < 12.0 && u.state.speed > 0.8) blocked = true;
                        // far window: only the priority (right) leg blocks
                        if (ck == leg.priority_leg && their_to_end < 30.0 &&
                            u.state.speed > 0.4)
                            blocked = true;
                    }
                    if (blocked) break;
                }
                if (blocked) break;
            }
            if (!blocked) return std::nullopt;
            return lane.length() - 1.5 - v.frenet_s;
        }
        return std::nullopt;
    }
    if (w.roundabout.has_value()) {
        const auto& info = *w.roundabout;
        for (const auto& entry : info.entries) {
            if (v.state.lane_id != entry.entry_lane) continue;
            const Lane& lane = w.road.lane(entry.entry_lane);
            const double to_end = lane.length() - v.frenet_s;
            if (to_end > 28.0 || to_end < 0.5) return std::nullopt;
            const Lane& ring = w.road.lane(info.ring_lane);
            const double C = ring.length();
            bool blocked = false;
            for (const auto& u : w.vehicles) {
                if (u.id == v.id || u.off_road) continue;
                if (u.state.lane_id != info.ring_lane) continue;
                double upstream = std::fmod(entry.merge_s - u.frenet_s, C);
                if (upstream < 0.0) upstream += C;
                double past = std::fmod(u.frenet_s - entry.merge_s, C);
                if (past < 0.0) past += C;
                if (upstream <= 38.0 || past <= 6.0) {
                    blocked = true;
                    break;
                }
            }
            if (!blocked) return std::nullopt;
            return lane.length() - 1.5 - v.frenet_s;
        }
    }
    return std::nullopt;
}

double effective_desired_speed(const World& w, const WorldVehicle& v) {
    const Lane& lane = w.road.lane(v.state.lane_id);
    double v0 = std::min(v.state.behavior.v0_desired_speed, lane.speed_limit);
    // anticipate a slower successor lane near the transition
    if (!lane.loops && lane.successor != kNoLane && lane.length() - v.frenet_s < 25.0)
        v0 = std::min(v0, w.road.lane(lane.successor).speed_limit);
    return v0;
}

LaneContext lane_context(const World& w, int lane_id, double ref_s, int exclude_id) {
    LaneContext ctx;
    const Lane& lane = w.road.lane(lane_id);
    double best_lead = 1e18, best_follow = -1e18;
    for (const auto& u : w.vehicles) {
        if (u.id == exclude_id || u.off_road) continue;
        if (!vehicle_uses_lane(u, lane_id)) continue;
        const double su = s_on_lane(lane, u.state.position);
        const double delta = su - ref_s;
        if (delta > 1e-9 && delta < best_lead) {
            best_lead = delta;
            ctx.leader = LongitudinalAgent{su, u.state.speed, u.state.length};
        } else if (delta < -1e-9 && delta > best_follow) {
            best_follow = delta;
            ctx.follower = LongitudinalAgent{su, u.state.speed, u.state.length};
        }
    }
    return ctx;
}

bool mobil_allowed_on(const Lane& lane) {
    return std::holds_alternative<StraightSegment>(lane.geometry) &&
           (lane.left_neighbor != kNoLane || lane.right_neighbor != kNoLane);
}

void maybe_lane_change(World& w, WorldVehicle& v) {
    if (!w.background_mobil || v.crashed || v.off_road || v.lane_change_active) return;
    if (w.tick % kTicksPerSecond != v.id % kTicksPerSecond) return;
    const Lane& lane = w.road.lane(v.state.lane_id);
    if (!mobil_allowed_on(lane)) return;

    NeighborSet ns;
    ns.subject_s = v.frenet_s;
    ns.current = lane_context(w, v.state.lane_id, v.frenet_s, v.id);
    if (lane.left_neighbor != kNoLane) {
        const double s = s_on_lane(w.road.lane(lane.left_neighbor), v.state.position);
        ns.left = lane_context(w, lane.left_neighbor, s, v.id);
    }
    if (lane.right_neighbor != kNoLane) {
        const double s = s_on_lane(w.road.lane(lane.right_neighbor), v.state.position);
        ns.right = lane_context(w, lane.right_neighbor, s, v.id);
    }
    const LaneChange d = mobil_decide(v.state.speed, v.state.length, ns, v.state.behavior);
    if (d == LaneChange::Stay) return;
    v.state.target_lane_id =
        d == LaneChange::Left ? lane.left_neighbor : lane.right_neighbor;
    v.lane_change_active = true;
}

}  // namespace

double lane_keeping_steering(const World& w, const WorldVehicle& v) {
    const int target =
        v.state.target_lane_id != kNoLane ? v.state.target_lane_id : v.state.lane_id;
    return lateral_steering_control(v.state, w.road.lane(target));
}

ControlInput background_control(const World& w, int vehicle_id) {
    const WorldVehicle* vp = w.find_vehicle(vehicle_id);
    if (vp == nullptr) throw std::invalid_argument("background_control: unknown vehicle");
    const WorldVehicle& v = *vp;
    if (v.crashed) return {0.0, 0.0};

    BehaviorParams p = v.state.behavior;
    p.v0_desired_speed = effective_desired_speed(w, v);

    auto idm_for = [&](const std::optional<LeaderHit>& hit) {
        if (!hit.has_value()) return idm_acceleration(v.state.speed, std::nullopt, 0.0, p);
        return idm_acceleration(v.state.speed, hit->gap, v.state.speed - hit->speed, p);
    };

    double acc = idm_for(find_leader(w, v, v.state.lane_id, v.frenet_s));
    if (v.state.target_lane_id != v.state.lane_id && v.state.target_lane_id != kNoLane) {
        const Lane& target = w.road.lane(v.state.target_lane_id);
        acc = std::min(acc,
                       idm_for(find_leader(w, v, target.id, s_on_lane(target, v.state.position))));
    }
    if (const auto stop = gate_stop_distance(w, v); stop.has_value()) {
        const double gap = *stop - 0.5 * v.state.length;
        acc = std::min(acc, idm_acceleration(v.state.speed, std::max(gap, 1e-3), v.state.speed, p));
    }
    return {acc, lane_keeping_steering(w, v)};
}

bool spawn_flow(World& world, double spawn_probability, Rng& rng) {
    if (!world.intersection.has_value())
        throw ConfigError("spawn_flow: intersection task only");
    if (!rng.bernoulli(clamp01(spawn_probability))) return false;
    const auto& info = *world.intersection;
    const int k = static_cast<int>(rng.uniform_int(4));
    const int lane_id = info.legs[static_cast<size_t>(k)].approach;
    const Lane& lane = world.road.lane(lane_id);
    for (const auto& u : world.vehicles) {
        if (u.state.lane_id == lane_id && u.frenet_s < 14.0) return false;  // entry occupied
    }
    VehicleState st;
    st.position = lane.position(3.0, 0.0);
    st.heading = lane.heading_at(3.0);
    st.speed = 7.0;
    st.lane_id = lane_id;
    st.target_lane_id = lane_id;
    st.behavior = background_params(world.cfg, 8.5);
    WorldVehicle v;
    v.id = static_cast<int>(world.vehicles.size());
    v.state = st;
    v.target_speed = st.speed;
    v.frenet_s = 3.0;
    if (world.cfg.treatment && world.risk_rng.bernoulli(world.cfg.perturbed_fraction)) {
        v.risk_flagged = true;
        v.state.behavior.politeness_p = 0.0;
    }
    world.vehicles.push_back(v);
    return true;
}

namespace {

void update_binding(World& w, WorldVehicle& v, StepEvents& events) {
    const Lane* cur = &w.road.lane(v.state.lane_id);
    FrenetPoint f = cur->to_frenet(v.state.position);

    if (!cur->loops && f.s >= cur->length() - 1e-9 && cur->successor != kNoLane) {
        const int succ = cur->successor;
        v.state.lane_id = succ;
        v.state.target_lane_id = succ;
        v.lane_change_active = false;
        cur = &w.road.lane(succ);
        f = cur->to_frenet(v.state.position);
    }

    if (v.state.target_lane_id != v.state.lane_id && v.state.target_lane_id != kNoLane) {
        const Lane& target = w.road.lane(v.state.target_lane_id);
        const FrenetPoint ft = target.to_frenet(v.state.position);
        if (std::abs(ft.lateral) <= kLaneBindHalfWidth) {
            v.state.lane_id = target.id;
            cur = &target;
            f = ft;
        }
    }
    if (v.lane_change_active && v.state.lane_id == v.state.target_lane_id &&
        std::abs(f.lateral) < kLaneChangeDoneLateral)
        v.lane_change_active = false;

    v.frenet_s = cur->loops ? cur->wrap_s(f.s) : f.s;

    // ego route through the roundabout: peel off at the configured exit
    if (v.state.is_ego && w.roundabout.has_value() &&
        v.state.lane_id == w.roundabout->ring_lane) {
        const double C = w.road.lane(w.roundabout->ring_lane).length();
        double ahead = std::fmod(w.roundabout->ego_exit_s - v.frenet_s, C);
        if (ahead < 0.0) ahead += C;
        if (ahead < 12.0) v.state.target_lane_id = w.roundabout->ego_exit_lane;
    }

    // off-road detection
    if (!v.off_road && std::abs(f.lateral) > cur->width * 0.5 + 0.5) {
        const int nearest = w.road.nearest_lane(v.state.position);
        const Lane& nl = w.road.lane(nearest);
        const FrenetPoint nf = nl.to_frenet(v.state.position);
        const double dist = (v.state.position - nl.position(nf.s, 0.0)).norm();
        if (dist > kOffRoadLateral) {
            v.off_road = true;
            events.off_road.push_back(v.id);
            if (v.state.is_ego) events.ego_off_road = true;
        }
    }

    if (v.state.is_ego && !w.ego_goal_lanes.empty()) {
        for (const int goal : w.ego_goal_lanes)
            if (v.state.lane_id == goal && v.frenet_s >= kArrivalMinS) events.ego_arrived = true;
    }
}

}  // namespace

StepEvents step_world(World& world, const ControlInput& ego_control, double dt,
                      EgoMode ego_mode) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_world: dt must be positive");
    StepEvents events;

    // lane-change decisions at 1 Hz per vehicle, staggered by id
    for (auto& v : world.vehicles) {
        if (v.state.is_ego && ego_mode == EgoMode::External) continue;
        maybe_lane_change(world, v);
    }

    // decide controls from the pre-step world
    std::vector<ControlInput> controls(world.vehicles.size());
    for (size_t i = 0; i < world.vehicles.size(); ++i) {
        auto& v = world.vehicles[i];
        if (v.crashed) {
            controls[i] = {0.0, 0.0};
            continue;
        }
        if (v.state.is_ego && ego_mode == EgoMode::External)
            controls[i] = ego_control;
        else
            controls[i] = background_control(world, v.id);
        if (v.risk_flagged && world.risk_rng.bernoulli(kRiskTriggerProb))
            controls[i] = sample_randomized_control(v.state.behavior, world.risk_rng);
    }

    // integrate
    for (size_t i = 0; i < world.vehicles.size(); ++i) {
        auto& v = world.vehicles[i];
        if (v.crashed) continue;
        v.state = step_bicycle(v.state, controls[i], dt);
    }

    for (auto& v : world.vehicles) {
        if (v.crashed) continue;
        update_binding(world, v, events);
    }

    // narrow-phase collision detection on nearby pairs
    for (size_t i = 0; i < world.vehicles.size(); ++i) {
        for (size_t j = i + 1; j < world.vehicles.size(); ++j) {
            auto& a = world.vehicles[i];
            auto& c = world.vehicles[j];
            if (a.crashed && c.crashed) continue;
            if ((a.state.position - c.state.position).norm() > kBroadPhaseDist) continue;
            if (!sat_intersects(a.state.footprint(), c.state.footprint())) continue;
            events.collisions.emplace_back(a.id, c.id);
            if (a.state.is_ego || c.state.is_ego) events.ego_collided = true;
            a.crashed = c.crashed = true;
            a.state.speed = 0.0;
            c.state.speed = 0.0;
        }
    }

    world.tick += 1;
    world.clock += dt;

    // intersection inflow, once per simulated second
    if (world.intersection.has_value() && world.tick % kTicksPerSecond == 0)
        spawn_flow(world, world.cfg.spawn_probability, world.rng);

    return events;
}

}  // namespace riskdrive
