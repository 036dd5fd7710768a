// SPDX-License-Identifier: Apache-2.0
#include "adco/sim.hpp"

#include <algorithm>
#include <cmath>

namespace adco {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
}

}  // namespace

const char* agent_kind_name(AgentKind k) {
    switch (k) {
        case AgentKind::Vehicle: return "vehicle";
        case AgentKind::Pedestrian: return "pedestrian";
        case AgentKind::Static: return "static";
    }
    return "?";
}

AgentKind agent_kind_from_name(const std::string& s) {
    if (s == "vehicle") return AgentKind::Vehicle;
    if (s == "pedestrian") return AgentKind::Pedestrian;
    if (s == "static") return AgentKind::Static;
    fail_validation("unknown agent kind '" + s + "'");
}

std::array<double, 2> Agent::position(double t) const {
    if (path.empty()) fail_validation("agent '" + id + "': empty path");
    if (t <= path.front().t || path.size() == 1) return {path.front().x, path.front().y};
    if (t >= path.back().t) return {path.back().x, path.back().y};
    for (std::size_t i = 1; i < path.size(); ++i) {
        if (t <= path[i].t) {
            const auto& a = path[i - 1];
            const auto& b = path[i];
            const double f = (t - a.t) / (b.t - a.t);
            return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
        }
    }
    return {path.back().x, path.back().y};
}

double Agent::speed(double t) const {
    if (path.size() < 2 || t <= path.front().t || t >= path.back().t) return 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        if (t <= path[i].t) {
            const auto& a = path[i - 1];
            const auto& b = path[i];
            const double d = std::hypot(b.x - a.x, b.y - a.y);
            return d / (b.t - a.t);
        }
    }
    return 0.0;
}

double Agent::heading(double t) const {
    if (path.size() < 2) return heading0;
    // heading of the active (or last) motion segment
    std::size_t seg = path.size() - 1;
    for (std::size_t i = 1; i < path.size(); ++i)
        if (t <= path[i].t) {
            seg = i;
            break;
        }
    const auto& a = path[seg - 1];
    const auto& b = path[seg];
    if (a.x == b.x && a.y == b.y) return heading0;
    return std::atan2(b.y - a.y, b.x - a.x);
}

const char* infraction_kind_name(InfractionKind k) {
    switch (k) {
        case InfractionKind::CollisionVehicle: return "collision_vehicle";
        case InfractionKind::CollisionStatic: return "collision_static";
        case InfractionKind::CollisionPedestrian: return "collision_pedestrian";
        case InfractionKind::OffRoute: return "off_route";
        case InfractionKind::Blocked: return "blocked";
    }
    return "?";
}

bool is_collision(InfractionKind k) {
    return k == InfractionKind::CollisionVehicle || k == InfractionKind::CollisionStatic ||
           k == InfractionKind::CollisionPedestrian;
}

void validate_scenario(const Scenario& sc) {
    if (sc.route.size() < 2) fail_validation("scenario '" + sc.name + "': route needs >= 2 points");
    if (sc.segments.empty()) fail_validation("scenario '" + sc.name + "': no segments");
    int prev_end = 0;
    for (const auto& [s, e] : sc.segments) {
        if (s != prev_end || e <= s || e >= static_cast<int>(sc.route.size()) + 1)
            fail_validation("scenario '" + sc.name + "': segments must tile the route");
        prev_end = e;
    }
    if (sc.segments.back().second != static_cast<int>(sc.route.size()) - 1)
        fail_validation("scenario '" + sc.name + "': segments must end at the last waypoint");
    if (sc.timeout_s <= 0 || sc.target_speed <= 0)
        fail_validation("scenario '" + sc.name + "': bad timeout or target speed");
    for (const auto& a : sc.agents) {
        if (a.path.empty()) fail_validation("agent '" + a.id + "': empty path");
        for (std::size_t i = 1; i < a.path.size(); ++i)
            if (a.path[i].t <= a.path[i - 1].t)
                fail_validation("agent '" + a.id + "': path timestamps must increase");
    }
}

LatencySource LatencySource::fixed(double t_i) {
    LatencySource s;
    s.kind = Kind::Fixed;
    s.fixed_s = t_i;
    return s;
}

LatencySource LatencySource::from_trace(LatencyTrace t) {
    LatencySource s;
    s.kind = Kind::Trace;
    s.trace = std::move(t);
    return s;
}

double LatencySource::at(int decision_index) const {
    if (kind == Kind::Fixed) return fixed_s;
    if (decision_index >= static_cast<int>(trace.frame_latencies_s.size()))
        fail_runtime("latency trace exhausted at decision " + std::to_string(decision_index) +
                     " (trace has " + std::to_string(trace.frame_latencies_s.size()) +
                     " frames)");
    return trace.frame_latencies_s[decision_index];
}

int frames_to_skip(double t_i, double dt) {
    if (!(t_i > 0.0) || !(dt > 0.0)) fail_validation("frames_to_skip: t_i and dt must be > 0");
    const int n = static_cast<int>(t_i / dt) - 1;
    return std::max(0, n);
}

EgoState step_ego(const EgoState& s, const Action& a, double dt, const VehicleParams& vp) {
    double throttle = std::clamp(a.throttle, 0.0, 1.0);
    double brake = std::clamp(a.brake, 0.0, 1.0);
    const double steer = std::clamp(a.steer, -0.5, 0.5);
    if (brake > 0.0) throttle = 0.0;  // brake wins

    EgoState n = s;
    const double accel = vp.a_max * throttle - vp.b_max * brake - vp.drag * s.v;
    n.v = std::clamp(s.v + accel * dt, 0.0, vp.v_max);
    n.heading = wrap_angle(s.heading + (s.v / vp.wheelbase) * std::tan(steer) * dt);
    n.x = s.x + n.v * std::cos(n.heading) * dt;
    n.y = s.y + n.v * std::sin(n.heading) * dt;
    n.steer = steer;
    n.throttle = throttle;
    n.brake = brake;
    return n;
}

Action builtin_policy(const Observation& obs) {
    Action a;

    // pure pursuit toward the lookahead point
    const double dx = obs.lookahead_x - obs.ego.x;
    const double dy = obs.lookahead_y - obs.ego.y;
    const double dist = std::max(std::hypot(dx, dy), 1.0);
    const double alpha = wrap_angle(std::atan2(dy, dx) - obs.ego.heading);
    constexpr double kWheelbase = 2.8;
    a.steer = std::clamp(std::atan2(2.0 * kWheelbase * std::sin(alpha), dist), -0.5, 0.5);

    // time-to-collision braking
    constexpr double kHardStopM = 4.0;
    constexpr double kTtcBrake = 3.0;
    const double d = obs.obstacle_distance_m;
    if (d <= kHardStopM) {
        a.brake = 1.0;
    } else {
        const double ttc = d / std::max(obs.ego.v, 0.5);
        if (ttc < kTtcBrake) a.brake = std::clamp((kTtcBrake - ttc) / 2.0, 0.2, 1.0);
    }

    if (a.brake == 0.0 && obs.ego.v < obs.target_speed)
        a.throttle = std::clamp(0.5 * (obs.target_speed - obs.ego.v), 0.0, 1.0);
    return a;
}

RoutePath::RoutePath(const std::vector<std::array<double, 2>>& p) : pts(p) {
    if (pts.size() < 2) fail_validation("route needs at least two waypoints");
    cum.resize(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i)
        cum[i] = cum[i - 1] + std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
}

std::array<double, 2> RoutePath::point_at(double s) const {
    s = std::clamp(s, 0.0, cum.back());
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (s <= cum[i]) {
            const double seg = cum[i] - cum[i - 1];
            const double f = seg > 0.0 ? (s - cum[i - 1]) / seg : 0.0;
            return {pts[i - 1][0] + f * (pts[i][0] - pts[i - 1][0]),
                    pts[i - 1][1] + f * (pts[i][1] - pts[i - 1][1])};
        }
    }
    return pts.back();
}

void RoutePath::project(double x, double y, double* progress, double* lateral) const {
    double best_d2 = 1e300, best_s = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double ax = pts[i - 1][0], ay = pts[i - 1][1];
        const double bx = pts[i][0], by = pts[i][1];
        const double vx = bx - ax, vy = by - ay;
        const double len2 = vx * vx + vy * vy;
        double f = len2 > 0.0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
        f = std::clamp(f, 0.0, 1.0);
        const double px = ax + f * vx, py = ay + f * vy;
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        if (d2 < best_d2) {
            best_d2 = d2;
            best_s = cum[i - 1] + f * std::sqrt(len2);
        }
    }
    *progress = best_s;
    *lateral = std::sqrt(best_d2);
}

namespace {

struct Obb {
    double cx, cy, heading, half_len, half_wid;
};

// Separating-axis test on the four edge normals of two rectangles.
bool obb_overlap(const Obb& a, const Obb& b) {
    auto corners = [](const Obb& o, std::array<double, 2>* out) {
        const double c = std::cos(o.heading), s = std::sin(o.heading);
        const double lx = o.half_len, wy = o.half_wid;
        const std::array<std::array<double, 2>, 4> local = {
            {{lx, wy}, {lx, -wy}, {-lx, -wy}, {-lx, wy}}};
        for (int i = 0; i < 4; ++i)
            out[i] = {o.cx + c * local[i][0] - s * local[i][1],
                      o.cy + s * local[i][0] + c * local[i][1]};
    };
    std::array<double, 2> ca[4], cb[4];
    corners(a, ca);
    corners(b, cb);
    const std::array<std::array<double, 2>, 4> axes = {
        {{std::cos(a.heading), std::sin(a.heading)},
         {-std::sin(a.heading), std::cos(a.heading)},
         {std::cos(b.heading), std::sin(b.heading)},
         {-std::sin(b.heading), std::cos(b.heading)}}};
    for (const auto& ax : axes) {
        double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
        for (int i = 0; i < 4; ++i) {
            const double pa = ca[i][0] * ax[0] + ca[i][1] * ax[1];
            const double pb = cb[i][0] * ax[0] + cb[i][1] * ax[1];
            amin = std::min(amin, pa);
            amax = std::max(amax, pa);
            bmin = std::min(bmin, pb);
            bmax = std::max(bmax, pb);
        }
        if (amax < bmin || bmax < amin) return false;
    }
    return true;
}

InfractionKind collision_kind(AgentKind k) {
    switch (k) {
        case AgentKind::Vehicle: return InfractionKind::CollisionVehicle;
        case AgentKind::Pedestrian: return InfractionKind::CollisionPedestrian;
        case AgentKind::Static: return InfractionKind::CollisionStatic;
    }
    return InfractionKind::CollisionStatic;
}

}  // namespace

TrajectoryLog run_route(const Scenario& sc, const Policy& policy, const RtsConfig& rts,
                        const SimParams& params) {
    validate_scenario(sc);
    if (rts.dt <= 0.0) fail_validation("rts: dt must be positive");

    const RoutePath path(sc.route);
    const VehicleParams& vp = params.vehicle;

    TrajectoryLog log;
    log.dt = rts.dt;
    log.route_length_m = path.length();
    for (const auto& [s, e] : sc.segments) {
        log.segment_starts_m.push_back(path.cum[s]);
        log.segment_lengths_m.push_back(path.cum[e] - path.cum[s]);
    }

    EgoState state;
    state.x = sc.route[0][0];
    state.y = sc.route[0][1];
    state.heading =
        std::atan2(sc.route[1][1] - sc.route[0][1], sc.route[1][0] - sc.route[0][0]);

    double progress_max = 0.0;
    int low_speed_run = 0;
    int decision_index = 0;
    bool terminal = false;

    const int max_frames = static_cast<int>(std::ceil(sc.timeout_s / rts.dt));

    auto observe = [&](double t_now) {
        Observation obs;
        obs.ego = state;
        obs.target_speed = sc.target_speed;
        obs.progress_m = progress_max;
        obs.route_length_m = path.length();
        const double lookahead = 4.0 + 0.5 * state.v;
        const auto lp = path.point_at(progress_max + lookahead);
        obs.lookahead_x = lp[0];
        obs.lookahead_y = lp[1];

        double nearest = 1e9;
        const double ch = std::cos(state.heading), sh = std::sin(state.heading);
        for (const auto& ag : sc.agents) {
            const auto p = ag.position(t_now);
            const double rx = p[0] - state.x, ry = p[1] - state.y;
            const double lon = rx * ch + ry * sh;
            const double lat = -rx * sh + ry * ch;
            if (lon <= 0.0 || lon > params.obstacle_range_m) continue;
            if (std::abs(lat) > params.obstacle_corridor_m + ag.width * 0.5) continue;
            const double gap = std::max(0.0, lon - (vp.length + ag.length) * 0.5);
            nearest = std::min(nearest, gap);
        }
        obs.obstacle_distance_m = nearest;
        return obs;
    };

    while (!terminal && static_cast<int>(log.frames.size()) < max_frames) {
        const double t_now = static_cast<double>(log.frames.size()) * rts.dt;
        Observation obs = observe(t_now);
        const Action action = policy(obs);
        const double t_i = rts.source.at(decision_index++);
        const int n_skip = frames_to_skip(t_i, rts.dt);

        for (int hold = 0; hold <= n_skip && !terminal; ++hold) {
            state = step_ego(state, action, rts.dt, vp);
            const int frame = static_cast<int>(log.frames.size());
            const double t = static_cast<double>(frame + 1) * rts.dt;

            double progress, lateral;
            path.project(state.x, state.y, &progress, &lateral);
            progress_max = std::max(progress_max, progress);

            FrameRecord rec;
            rec.t = t;
            rec.state = state;
            rec.applied = {state.steer, state.throttle, state.brake};
            rec.n_skipped = n_skip;
            rec.decision_frame = hold == 0;
            rec.progress_m = progress_max;

            // finite-difference dynamics against the previous record
            if (frame == 0) {
                rec.a_lon = 0.0;
                rec.yaw_rate = 0.0;
            } else {
                const FrameRecord& prev = log.frames[frame - 1];
                rec.a_lon = (state.v - prev.state.v) / rts.dt;
                rec.yaw_rate = wrap_angle(state.heading - prev.state.heading) / rts.dt;
            }
            rec.a_lat = state.v * rec.yaw_rate;
            if (frame == 0) {
                rec.yaw_acc = 0.0;
                rec.jerk_lon = 0.0;
                rec.jerk_mag = 0.0;
            } else {
                const FrameRecord& prev = log.frames[frame - 1];
                rec.yaw_acc = (rec.yaw_rate - prev.yaw_rate) / rts.dt;
                rec.jerk_lon = (rec.a_lon - prev.a_lon) / rts.dt;
                const double jerk_lat = (rec.a_lat - prev.a_lat) / rts.dt;
                rec.jerk_mag = std::hypot(rec.jerk_lon, jerk_lat);
            }

            // neighbor speeds (vehicles within radius) for the efficiency metric
            double speed_sum = 0.0;
            int neighbors = 0;
            for (const auto& ag : sc.agents) {
                if (ag.kind != AgentKind::Vehicle) continue;
                const auto p = ag.position(t);
                if (std::hypot(p[0] - state.x, p[1] - state.y) > params.neighbor_radius_m)
                    continue;
                speed_sum += ag.speed(t);
                ++neighbors;
            }
            rec.neighbor_count = neighbors;
            rec.neighbor_mean_speed = neighbors > 0 ? speed_sum / neighbors : 0.0;

            log.frames.push_back(rec);

            // collisions
            const Obb ego_box{state.x, state.y, state.heading, vp.length * 0.5, vp.width * 0.5};
            for (const auto& ag : sc.agents) {
                const auto p = ag.position(t);
                const Obb box{p[0], p[1], ag.heading(t), ag.length * 0.5, ag.width * 0.5};
                if (obb_overlap(ego_box, box)) {
                    log.infractions.push_back({frame, collision_kind(ag.kind)});
                    log.crashed = true;
                    terminal = true;
                    break;
                }
            }
            if (terminal) break;

            if (lateral > params.offroute_m) {
                log.infractions.push_back({frame, InfractionKind::OffRoute});
                terminal = true;
                break;
            }

            low_speed_run = state.v <= params.blocked_speed ? low_speed_run + 1 : 0;
            if (static_cast<double>(low_speed_run) * rts.dt > params.blocked_duration_s) {
                log.infractions.push_back({frame, InfractionKind::Blocked});
                terminal = true;
                break;
            }

            if (progress_max >= path.length() - params.arrival_m) {
                log.completed = true;
                progress_max = path.length();
                log.frames.back().progress_m = progress_max;
                terminal = true;
                break;
            }
        }
    }

    for (std::size_t i = 0; i < log.segment_starts_m.size(); ++i) {
        const double len = log.segment_lengths_m[i];
        const double covered = progress_max - log.segment_starts_m[i];
        log.rc.push_back(len > 0.0 ? std::clamp(covered / len, 0.0, 1.0) : 1.0);
    }
    return log;
}

std::vector<std::pair<int, int>> detect_blocked(const TrajectoryLog& log, double speed_threshold,
                                                double duration_s) {
    std::vector<std::pair<int, int>> out;
    const int n = static_cast<int>(log.frames.size());
    int run_start = -1;
    for (int i = 0; i <= n; ++i) {
        const bool slow = i < n && log.frames[i].state.v <= speed_threshold;
        if (slow && run_start < 0) run_start = i;
        if (!slow && run_start >= 0) {
            const int len = i - run_start;
            if (static_cast<double>(len) * log.dt > duration_s) out.emplace_back(run_start, i - 1);
            run_start = -1;
        }
    }
    return out;
}

}  // namespace adco
