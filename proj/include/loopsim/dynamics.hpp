#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "loopsim/geometry.hpp"

namespace loopsim {

struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;

  Pose pose() const { return {x, y, theta}; }
  Vec2 position() const { return {x, y}; }
  bool operator==(const EgoState&) const = default;
};

// accel in m/s^2, steer is the front-wheel angle in radians.
struct Action {
  double accel = 0.0;
  double steer = 0.0;
  bool operator==(const Action&) const = default;
};

struct VehicleParams {
  double wheelbase = 2.8;
  double max_accel = 6.0;
  double max_steer = 0.5;
  double max_speed = 30.0;
  double dt = 0.1;

  void check() const {
    if (!(wheelbase > 0 && max_accel > 0 && max_steer > 0 && max_speed > 0 && dt > 0))
      throw std::invalid_argument("VehicleParams: all parameters must be strictly positive");
  }
};

inline Action clamp_action(Action a, const VehicleParams& p) {
  if (!std::isfinite(a.accel)) a.accel = 0.0;
  if (!std::isfinite(a.steer)) a.steer = 0.0;
  return {std::clamp(a.accel, -p.max_accel, p.max_accel), std::clamp(a.steer, -p.max_steer, p.max_steer)};
}

// Teleports to the waypoint; speed is the implied displacement rate.
inline EgoState step_default(const EgoState& s, const Pose& waypoint, double dt = 0.1) {
  EgoState n;
  n.x = waypoint.x;
  n.y = waypoint.y;
  n.theta = wrap_angle(waypoint.heading);
  n.v = std::hypot(waypoint.x - s.x, waypoint.y - s.y) / dt;
  return n;
}

// Forward-Euler kinematic bicycle (rear-axle reference).
inline EgoState step_bicycle(const EgoState& s, Action a, const VehicleParams& p) {
  a = clamp_action(a, p);
  EgoState n;
  n.v = std::clamp(s.v + a.accel * p.dt, 0.0, p.max_speed);
  n.theta = wrap_angle(s.theta + (s.v / p.wheelbase) * std::tan(a.steer) * p.dt);
  n.x = s.x + s.v * std::cos(s.theta) * p.dt;
  n.y = s.y + s.v * std::sin(s.theta) * p.dt;
  return n;
}

// Action that step_bicycle would need to reproduce a state change; used to log the implied
// controls when a planner drives the ego directly.
inline Action implied_action(const EgoState& from, const EgoState& to, const VehicleParams& p) {
  Action a;
  a.accel = (to.v - from.v) / p.dt;
  if (from.v > 1e-6) {
    const double yaw_rate = angle_diff(to.theta, from.theta) / p.dt;
    a.steer = std::atan(yaw_rate * p.wheelbase / from.v);
  }
  return a;
}

}  // namespace loopsim
