#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "riskdrive/rng.hpp"
#include "riskdrive/road.hpp"
#include "riskdrive/vehicle.hpp"

namespace riskdrive {

enum class Task { Highway, TwoWay, Roundabout, Intersection, UTurn };

const char* task_name(Task t);
std::optional<Task> task_from_name(const std::string& name);

// Declarative description of one environment instance.
struct ScenarioConfig {
    Task task = Task::Highway;
    int vehicle_count = 50;
    double density_multiplier = 1.0;       // >= 1, scales 1/spacing
    double spawn_probability = 0.6;        // intersection only
    double road_length_factor = 2.0 / 3.0; // two_way only
    bool treatment = false;
    double perturbed_fraction = 0.3;
    double episode_duration = 20.0;  // s
    uint64_t seed = 0;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PlacementError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Treatment transformation: single-knob change, everything else preserved.
ScenarioConfig apply_treatment(const ScenarioConfig& cfg);

// two_way couples same-direction and opposite-direction counts 5:2
int two_way_opposite_count(int same_dir_count);

struct WorldVehicle {
    int id = 0;
    VehicleState state;
    double target_speed = 0.0;  // longitudinal controller setpoint
    bool risk_flagged = false;
    bool crashed = false;
    bool off_road = false;
    bool lane_change_active = false;
    double frenet_s = 0.0;  // along state.lane_id, refreshed each tick
};

struct StepEvents {
    std::vector<std::pair<int, int>> collisions;  // id pairs, first < second
    std::vector<int> off_road;                    // ids newly departed
    bool ego_collided = false;
    bool ego_off_road = false;
    bool ego_arrived = false;
};

// Task metadata used by the stepping logic.
struct IntersectionLeg {
    int approach = kNoLane;
    int connector = kNoLane;
    int exit = kNoLane;
    int priority_leg = -1;  // index of the leg approaching from the right
};

struct IntersectionInfo {
    std::array<IntersectionLeg, 4> legs;  // S, E, N, W
    double zone_half = 7.0;
};

struct RoundaboutEntry {
    int entry_lane = kNoLane;
    double merge_s = 0.0;  // ring arc length of the merge point
};

struct RoundaboutInfo {
    int ring_lane = kNoLane;
    std::vector<RoundaboutEntry> entries;
    double ego_exit_s = 0.0;
    int ego_exit_lane = kNoLane;
};

class World {
public:
    Task task = Task::Highway;
    ScenarioConfig cfg;
    RoadNetwork road;
    std::vector<WorldVehicle> vehicles;  // ego first, ids dense from 0
    double clock = 0.0;
    int64_t tick = 0;
    Rng rng;       // common stream: spawning and shared draws
    Rng risk_rng;  // risk flags and randomized-control draws

    std::vector<int> ego_goal_lanes;  // reaching any of these = arrived
    std::vector<Vec2> conflict_points;
    std::optional<IntersectionInfo> intersection;
    std::optional<RoundaboutInfo> roundabout;
    bool background_mobil = false;  // lane changes for traffic on this network

    WorldVehicle& ego() { return vehicles.front(); }
    const WorldVehicle& ego() const { return vehicles.front(); }
    const WorldVehicle* find_vehicle(int id) const;
};

// Builds the task's network and places ego + cfg.vehicle_count background
// vehicles collision free. Identical (cfg, seed) produce identical worlds.
World build_scenario(const ScenarioConfig& cfg);

constexpr double kPhysicsDt = 1.0 / 15.0;

enum class EgoMode {
    External,   // ego follows the provided ControlInput
    Autopilot,  // ego is driven by the same IDM/MOBIL logic as traffic
};

// Advances every vehicle one tick and reports collision/off-road events.
// Collisions are SAT-tested on pairs within 10 m center distance.
StepEvents step_world(World& world, const ControlInput& ego_control, double dt,
                      EgoMode ego_mode = EgoMode::External);

// One second's worth of inflow: with the given probability, inserts a
// vehicle on a random free intersection approach. Intersection task only;
// step_world calls this once per simulated second.
bool spawn_flow(World& world, double spawn_probability, Rng& rng);

// Control the ego would apply under IDM/MOBIL (used by Autopilot mode).
ControlInput background_control(const World& world, int vehicle_id);

// steering command that keeps a vehicle tracking its target lane
double lane_keeping_steering(const World& world, const WorldVehicle& v);

}  // namespace riskdrive
