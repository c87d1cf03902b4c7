#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bpa/types.hpp"

namespace bpa {

struct Rect {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
    bool inside(const Rect& outer) const {
        return x_min >= outer.x_min && x_max <= outer.x_max && y_min >= outer.y_min && y_max <= outer.y_max;
    }
    bool valid() const { return x_max > x_min && y_max > y_min; }

    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Pose {
    double x = 0, y = 0, heading = 0;
};

struct Point {
    double x = 0, y = 0;
};

// Feature layout: x, y, heading, left sensor, right sensor.
struct NavWorld {
    Rect arena{0.0, 0.0, 8.0, 8.0};
    std::vector<Rect> obstacles{{0.0, 5.0, 4.6, 5.6}, {3.0, 0.0, 3.6, 2.8}, {5.8, 2.4, 8.0, 2.9}};
    Pose start{1.0, 7.0, -std::numbers::pi / 2.0};
    Rect goal{6.6, 0.0, 8.0, 1.4};
    // Waypoints the oracle may steer through on its way to the goal centre.
    std::vector<Point> route{{6.2, 6.6}, {6.2, 4.0}, {4.7, 3.9}, {4.7, 1.3}};
    double speed = 3.0;
    double turn_increment = 15.0 * std::numbers::pi / 180.0;
    double dt = 0.25;
    double sensor_angle = 30.0 * std::numbers::pi / 180.0;
    double sensor_range = 5.0;
    double robot_radius = 0.2;
    int max_steps = 400;

    void validate() const;
};

namespace nav {

enum Feature : std::size_t { x = 0, y = 1, heading = 2, left_sensor = 3, right_sensor = 4 };
inline constexpr EnvAction straight{0};
inline constexpr EnvAction turn_left{1};
inline constexpr EnvAction turn_right{2};

inline constexpr double turn_penalty = -0.1;
inline constexpr double collision_penalty = -100.0;
inline constexpr double goal_reward = 1000.0;

inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

// Distance along a ray to the boundary of a rectangle (slab method); the
// origin may lie inside (arena walls) or outside (obstacles).
inline std::optional<double> ray_rect(double ox, double oy, double dx, double dy, const Rect& r) {
    double t_min = -std::numeric_limits<double>::infinity();
    double t_max = std::numeric_limits<double>::infinity();
    const double o[2] = {ox, oy}, d[2] = {dx, dy};
    const double lo[2] = {r.x_min, r.y_min}, hi[2] = {r.x_max, r.y_max};
    for (int i = 0; i < 2; ++i) {
        if (std::abs(d[i]) < 1e-15) {
            if (o[i] < lo[i] || o[i] > hi[i]) return std::nullopt;
            continue;
        }
        double t1 = (lo[i] - o[i]) / d[i];
        double t2 = (hi[i] - o[i]) / d[i];
        if (t1 > t2) std::swap(t1, t2);
        t_min = std::max(t_min, t1);
        t_max = std::min(t_max, t2);
    }
    if (t_max < t_min || t_max < 0) return std::nullopt;
    return t_min >= 0 ? t_min : t_max;
}

inline double cast_ray(const NavWorld& w, double ox, double oy, double angle) {
    const double dx = std::cos(angle), dy = std::sin(angle);
    double best = w.sensor_range;
    if (auto t = ray_rect(ox, oy, dx, dy, w.arena)) best = std::min(best, *t);
    for (const Rect& r : w.obstacles)
        if (auto t = ray_rect(ox, oy, dx, dy, r)) best = std::min(best, *t);
    return std::max(0.0, best);
}

inline bool circle_hits_rect(double cx, double cy, double radius, const Rect& r) {
    const double nx = std::clamp(cx, r.x_min, r.x_max);
    const double ny = std::clamp(cy, r.y_min, r.y_max);
    const double ddx = cx - nx, ddy = cy - ny;
    return ddx * ddx + ddy * ddy < radius * radius;
}

inline bool collides(const NavWorld& w, double x, double y) {
    const double rad = w.robot_radius;
    if (x - rad < w.arena.x_min || x + rad > w.arena.x_max || y - rad < w.arena.y_min || y + rad > w.arena.y_max)
        return true;
    return std::any_of(w.obstacles.begin(), w.obstacles.end(),
                       [&](const Rect& r) { return circle_hits_rect(x, y, rad, r); });
}

inline Observation observe(const NavWorld& w, const Pose& p) {
    const double h = wrap_angle(p.heading);
    return Observation{p.x, p.y, h, cast_ray(w, p.x, p.y, h + w.sensor_angle),
                       cast_ray(w, p.x, p.y, h - w.sensor_angle)};
}

inline Observation reset(const NavWorld& w) { return observe(w, w.start); }

inline StepOutcome step(const Observation& obs, EnvAction action, const NavWorld& w) {
    if (obs.size() != 5) throw std::invalid_argument("nav observation must have 5 features");
    if (action.index > 2) throw std::out_of_range("nav action must be 0, 1 or 2");

    Pose pose{obs[x], obs[y], obs[heading]};
    StepOutcome out;
    if (action == turn_left || action == turn_right) {
        pose.heading += action == turn_left ? w.turn_increment : -w.turn_increment;
        out.next_obs = observe(w, pose);
        out.reward = turn_penalty;
        return out;
    }

    // Sweep the straight move in short sub-steps so thin obstacles are not skipped;
    // the first event along the path decides the outcome.
    const double distance = w.speed * w.dt;
    const int sub_steps = std::max(1, static_cast<int>(std::ceil(distance / 0.05)));
    const double cx = std::cos(pose.heading), cy = std::sin(pose.heading);
    for (int i = 1; i <= sub_steps; ++i) {
        const double s = distance * i / sub_steps;
        const double px = pose.x + s * cx, py = pose.y + s * cy;
        if (collides(w, px, py)) {
            out.next_obs = reset(w);
            out.reward = collision_penalty;
            return out;
        }
        if (w.goal.contains(px, py)) {
            out.next_obs = observe(w, Pose{px, py, pose.heading});
            out.reward = goal_reward;
            out.terminal = true;
            return out;
        }
    }
    out.next_obs = observe(w, Pose{pose.x + distance * cx, pose.y + distance * cy, pose.heading});
    out.reward = 0.0;
    return out;
}

inline double clearance_threshold(const NavWorld& w) { return w.speed * w.dt; }

inline Point goal_centre(const NavWorld& w) {
    return {0.5 * (w.goal.x_min + w.goal.x_max), 0.5 * (w.goal.y_min + w.goal.y_max)};
}

// True when the segment a-b keeps the clearance threshold from every obstacle.
inline bool line_of_sight(const NavWorld& w, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len = std::hypot(dx, dy);
    const double r = clearance_threshold(w);
    if (len == 0.0) return !collides(w, a.x, a.y);
    for (const Rect& o : w.obstacles) {
        const Rect grown{o.x_min - r, o.y_min - r, o.x_max + r, o.y_max + r};
        if (auto t = ray_rect(a.x, a.y, dx / len, dy / len, grown); t && *t <= len) return false;
        if (grown.contains(a.x, a.y)) return false;
    }
    return true;
}

// Furthest point along route-then-goal that is directly visible; falls back
// to the first route point when none is.
inline Point steering_target(const Observation& obs, const NavWorld& w) {
    const Point here{obs[x], obs[y]};
    const Point goal = goal_centre(w);
    if (line_of_sight(w, here, goal)) return goal;
    for (auto it = w.route.rbegin(); it != w.route.rend(); ++it)
        if (line_of_sight(w, here, *it)) return *it;
    return w.route.empty() ? goal : w.route.front();
}

// Greedy heading steering toward the goal (through the world's route points
// when the goal is hidden); turns away from the nearer sensor reading while
// anything is closer than the clearance threshold.
inline EnvAction oracle(const Observation& obs, const NavWorld& w) {
    const double clearance = clearance_threshold(w);
    const double left = obs[left_sensor], right = obs[right_sensor];
    if (std::min(left, right) < clearance) return left < right ? turn_right : turn_left;

    const Point target = steering_target(obs, w);
    const double error = wrap_angle(std::atan2(target.y - obs[y], target.x - obs[x]) - obs[heading]);
    if (std::abs(error) <= 0.5 * w.turn_increment) return straight;
    return error > 0 ? turn_left : turn_right;
}

}  // namespace nav

inline void NavWorld::validate() const {
    if (!arena.valid()) throw std::invalid_argument("nav arena must have positive extent");
    if (!goal.valid() || !goal.inside(arena)) throw std::invalid_argument("nav goal must lie inside the arena");
    for (const Rect& r : obstacles)
        if (!r.valid()) throw std::invalid_argument("nav obstacle must have positive extent");
    if (nav::collides(*this, start.x, start.y)) throw std::invalid_argument("nav start pose overlaps an obstacle");
    if (!(speed > 0 && turn_increment > 0 && dt > 0 && sensor_range > 0 && robot_radius > 0 && max_steps > 0))
        throw std::invalid_argument("nav parameters must be positive");
    if (speed != 3.0) throw std::invalid_argument("nav forward speed is fixed at 3 m/s");
}

}  // namespace bpa
