// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adco/cost.hpp"

namespace adco {

struct EgoState {
    double x = 0.0, y = 0.0;     // metres
    double heading = 0.0;        // radians
    double v = 0.0;              // m/s, never negative
    double steer = 0.0;
    double throttle = 0.0, brake = 0.0;
};

struct Action {
    double steer = 0.0;     // [-0.5, 0.5] rad
    double throttle = 0.0;  // [0, 1]
    double brake = 0.0;     // [0, 1]
};

struct VehicleParams {
    double a_max = 3.0;      // m/s^2
    double b_max = 8.0;      // m/s^2
    double wheelbase = 2.8;  // m
    double v_max = 20.0;     // m/s
    double drag = 0.05;      // 1/s
    double length = 4.5;     // m, collision footprint
    double width = 2.0;      // m
};

enum class AgentKind { Vehicle, Pedestrian, Static };
const char* agent_kind_name(AgentKind k);
AgentKind agent_kind_from_name(const std::string& s);

struct PathPoint {
    double t = 0.0;
    double x = 0.0, y = 0.0;
};

// Scripted traffic: piecewise-linear position over time, clamped at the ends.
// Latency never perturbs agents; their state is a pure function of time.
struct Agent {
    std::string id;
    AgentKind kind = AgentKind::Vehicle;
    double length = 4.5, width = 2.0;
    double heading0 = 0.0;  // used while stationary
    std::vector<PathPoint> path;

    std::array<double, 2> position(double t) const;
    double speed(double t) const;
    double heading(double t) const;
};

// Interval of scenario time during which scripted traffic sits ahead of the
// nominal ego. Consumed by the conditional-latency-spike machinery, not by
// the simulation loop itself.
struct TriggerWindow {
    double t_start = 0.0, t_end = 0.0;
};

struct Scenario {
    std::string name;
    std::vector<std::array<double, 2>> route;      // waypoints, metres
    std::vector<std::pair<int, int>> segments;     // waypoint index ranges
    double length_m = 150.0;
    double target_speed = 8.0;
    double timeout_s = 120.0;
    std::vector<Agent> agents;
    std::vector<TriggerWindow> triggers;
};
void validate_scenario(const Scenario& sc);

enum class InfractionKind {
    CollisionVehicle,
    CollisionStatic,
    CollisionPedestrian,
    OffRoute,
    Blocked,
};
const char* infraction_kind_name(InfractionKind k);
bool is_collision(InfractionKind k);

struct Infraction {
    int frame = 0;
    InfractionKind kind = InfractionKind::CollisionVehicle;
};

struct FrameRecord {
    double t = 0.0;
    EgoState state;
    Action applied;
    int n_skipped = 0;           // skip count of the governing decision
    bool decision_frame = false; // first frame of a decision hold

    // finite-difference dynamics, consistent with the raw states at dt
    double a_lon = 0.0;      // m/s^2
    double a_lat = 0.0;      // m/s^2
    double yaw_rate = 0.0;   // rad/s
    double yaw_acc = 0.0;    // rad/s^2
    double jerk_lon = 0.0;   // m/s^3
    double jerk_mag = 0.0;   // m/s^3

    double neighbor_mean_speed = 0.0;  // vehicles within the neighbor radius
    int neighbor_count = 0;
    double progress_m = 0.0;
};

struct TrajectoryLog {
    double dt = 0.05;
    double route_length_m = 0.0;
    std::vector<double> segment_starts_m;
    std::vector<double> segment_lengths_m;
    std::vector<FrameRecord> frames;
    std::vector<Infraction> infractions;
    std::vector<double> rc;  // per-segment completion, frozen on termination
    bool crashed = false;
    bool completed = false;
};

// Per-decision inference latency: a constant, or a pre-generated trace that
// errors out when exhausted.
struct LatencySource {
    enum class Kind { Fixed, Trace };
    Kind kind = Kind::Fixed;
    double fixed_s = 0.05;
    LatencyTrace trace;

    static LatencySource fixed(double t_i);
    static LatencySource from_trace(LatencyTrace t);
    double at(int decision_index) const;
};

struct RtsConfig {
    double dt = 0.05;
    LatencySource source;
};

struct SimParams {
    VehicleParams vehicle;
    double offroute_m = 10.0;            // lateral corridor half-width, terminal beyond
    double arrival_m = 2.0;              // route completion slack
    double blocked_speed = 0.1;          // m/s
    double blocked_duration_s = 60.0;
    double obstacle_corridor_m = 1.6;    // half-width for "ahead" checks
    double obstacle_range_m = 80.0;
    double neighbor_radius_m = 50.0;
};

struct Observation {
    EgoState ego;
    double target_speed = 8.0;
    double lookahead_x = 0.0, lookahead_y = 0.0;
    double obstacle_distance_m = 1e9;  // bumper-to-bumper gap, huge when clear
    double progress_m = 0.0;
    double route_length_m = 0.0;
};

using Policy = std::function<Action(const Observation&)>;

// Latency in simulation steps: n = max(0, int(t_i / dt) - 1), with int()
// truncating the floating quotient toward zero.
int frames_to_skip(double t_i, double dt);

// Kinematic bicycle step. Brake wins when both pedals are pressed; the
// heading integrates with the pre-update speed, position with the new one.
EgoState step_ego(const EgoState& s, const Action& a, double dt, const VehicleParams& vp);

// Pure-pursuit steering, proportional throttle toward the target speed,
// time-to-collision braking. Stateless.
Action builtin_policy(const Observation& obs);

// Lockstep closed loop: each decision's action is held for n+1 frames while
// the scripted world advances every frame. Fully deterministic.
TrajectoryLog run_route(const Scenario& sc, const Policy& policy, const RtsConfig& rts,
                        const SimParams& params = {});

// Maximal frame intervals [first, last] with v <= threshold for strictly
// longer than `duration_s`.
std::vector<std::pair<int, int>> detect_blocked(const TrajectoryLog& log,
                                                double speed_threshold = 0.1,
                                                double duration_s = 60.0);

// Route geometry helper shared by the simulator and the scenario generator.
struct RoutePath {
    explicit RoutePath(const std::vector<std::array<double, 2>>& pts);
    std::vector<std::array<double, 2>> pts;
    std::vector<double> cum;  // arc length at each waypoint

    double length() const { return cum.back(); }
    std::array<double, 2> point_at(double s) const;
    // closest-point projection: arc-length progress and absolute lateral offset
    void project(double x, double y, double* progress, double* lateral) const;
};

}  // namespace adco
