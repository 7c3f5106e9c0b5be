#pragma once

// Receding-horizon tracker. Single shooting over the action sequence: the cost is a
// quadratic in tracking error and control effort, minimised by projected gradient descent
// with a diagonal Gauss-Newton scaling and Armijo backtracking. Gradients come from a
// reverse sweep through the bicycle rollout.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopsim/dynamics.hpp"
#include "loopsim/geometry.hpp"

namespace loopsim {

struct MpcConfig {
  int horizon = 10;
  double dt = 0.1;
  double w_pos = 1.0;
  double w_heading = 0.1;
  double w_accel = 0.01;
  double w_steer = 0.01;
  double w_jerk = 0.01;
  int iterations = 50;
  double tolerance = 1e-6;

  void check() const {
    if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
    if (iterations < 1) throw std::invalid_argument("MpcConfig: iterations must be >= 1");
    if (w_pos < 0 || w_heading < 0 || w_accel < 0 || w_steer < 0 || w_jerk < 0)
      throw std::invalid_argument("MpcConfig: weights must be non-negative");
  }
};

class MpcError : public std::runtime_error {
 public:
  MpcError(int iteration, const std::string& what)
      : std::runtime_error("mpc iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

struct MpcResult {
  std::vector<Action> actions;
  double cost = 0.0;
  std::vector<EgoState> trajectory;  // states 1..horizon
  std::vector<double> cost_history;  // initial cost, then one entry per accepted iteration
};

namespace mpc_detail {

inline std::vector<EgoState> rollout(const EgoState& x0, std::span<const Action> u, const VehicleParams& p) {
  std::vector<EgoState> xs;
  xs.reserve(u.size());
  EgoState x = x0;
  for (const auto& a : u) {
    x = step_bicycle(x, a, p);
    xs.push_back(x);
  }
  return xs;
}

}  // namespace mpc_detail

inline double mpc_cost(const EgoState& x0, std::span<const Action> u, std::span<const Pose> ref, const MpcConfig& cfg,
                       const VehicleParams& p) {
  const auto xs = mpc_detail::rollout(x0, u, p);
  double c = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double ex = xs[k].x - ref[k].x, ey = xs[k].y - ref[k].y;
    const double eh = angle_diff(xs[k].theta, ref[k].heading);
    c += cfg.w_pos * (ex * ex + ey * ey) + cfg.w_heading * eh * eh;
    c += cfg.w_accel * u[k].accel * u[k].accel + cfg.w_steer * u[k].steer * u[k].steer;
    if (k > 0) {
      const double ja = u[k].accel - u[k - 1].accel, js = u[k].steer - u[k - 1].steer;
      c += cfg.w_jerk * (ja * ja + js * js);
    }
  }
  return c;
}

// Gradient with respect to (accel_0, steer_0, accel_1, ...).
inline std::vector<double> mpc_gradient(const EgoState& x0, std::span<const Action> u, std::span<const Pose> ref,
                                        const MpcConfig& cfg, const VehicleParams& p) {
  const std::size_t n = u.size();
  const auto xs = mpc_detail::rollout(x0, u, p);
  std::vector<double> g(2 * n, 0.0);
  // Adjoint of (x, y, theta, v) for the state after step k.
  std::array<double, 4> lam{0, 0, 0, 0};
  const double dt = p.dt;
  for (std::size_t kk = n; kk-- > 0;) {
    const EgoState& xk1 = xs[kk];
    // Stage cost on x_{k+1}.
    lam[0] += 2 * cfg.w_pos * (xk1.x - ref[kk].x);
    lam[1] += 2 * cfg.w_pos * (xk1.y - ref[kk].y);
    lam[2] += 2 * cfg.w_heading * angle_diff(xk1.theta, ref[kk].heading);

    const EgoState& xk = kk == 0 ? x0 : xs[kk - 1];
    const Action a = u[kk];
    const double raw_v = xk.v + a.accel * dt;
    // Exactly on a speed bound, take the one-sided derivative that points into the feasible side.
    const bool v_free = (raw_v > 0.0 && raw_v < p.max_speed) || (raw_v == 0.0 && lam[3] < 0.0) ||
                        (raw_v == p.max_speed && lam[3] > 0.0);
    const double tan_d = std::tan(a.steer);
    const double sec2 = 1.0 + tan_d * tan_d;

    // Direct control terms.
    double ga = 2 * cfg.w_accel * a.accel;
    double gs = 2 * cfg.w_steer * a.steer;
    if (kk > 0) {
      ga += 2 * cfg.w_jerk * (a.accel - u[kk - 1].accel);
      gs += 2 * cfg.w_jerk * (a.steer - u[kk - 1].steer);
    }
    if (kk + 1 < n) {
      ga -= 2 * cfg.w_jerk * (u[kk + 1].accel - a.accel);
      gs -= 2 * cfg.w_jerk * (u[kk + 1].steer - a.steer);
    }
    // Through the dynamics.
    if (v_free) ga += lam[3] * dt;
    gs += lam[2] * (xk.v / p.wheelbase) * sec2 * dt;
    g[2 * kk] = ga;
    g[2 * kk + 1] = gs;

    // Propagate the adjoint to x_k.
    const double c = std::cos(xk.theta), s = std::sin(xk.theta);
    std::array<double, 4> prev{};
    prev[0] = lam[0];
    prev[1] = lam[1];
    prev[2] = lam[2] + lam[0] * (-xk.v * s * dt) + lam[1] * (xk.v * c * dt);
    prev[3] = lam[0] * c * dt + lam[1] * s * dt + lam[2] * tan_d * dt / p.wheelbase + (v_free ? lam[3] : 0.0);
    lam = prev;
  }
  return g;
}

namespace mpc_detail {

// Diagonal of the Gauss-Newton matrix, from forward sensitivities of the linearised rollout.
inline std::vector<double> gauss_newton_diagonal(const EgoState& x0, std::span<const Action> u, const MpcConfig& cfg,
                                                 const VehicleParams& p) {
  const std::size_t n = u.size();
  const auto xs = rollout(x0, u, p);
  std::vector<double> d(2 * n, 0.0);
  for (std::size_t j = 0; j < 2 * n; ++j) {
    const std::size_t step = j / 2;
    const bool is_steer = j % 2 == 1;
    std::array<double, 4> dx{0, 0, 0, 0};
    double acc = 0.0;
    for (std::size_t k = step; k < n; ++k) {
      const EgoState& xk = k == 0 ? x0 : xs[k - 1];
      const double c = std::cos(xk.theta), s = std::sin(xk.theta);
      const double tan_d = std::tan(u[k].steer);
      std::array<double, 4> nx{};
      nx[0] = dx[0] + (c * dx[3] - xk.v * s * dx[2]) * p.dt;
      nx[1] = dx[1] + (s * dx[3] + xk.v * c * dx[2]) * p.dt;
      nx[2] = dx[2] + tan_d * dx[3] * p.dt / p.wheelbase;
      nx[3] = dx[3];
      if (k == step) {
        if (is_steer) nx[2] += (xk.v / p.wheelbase) * (1 + tan_d * tan_d) * p.dt;
        else nx[3] += p.dt;
      }
      dx = nx;
      acc += cfg.w_pos * (dx[0] * dx[0] + dx[1] * dx[1]) + cfg.w_heading * dx[2] * dx[2];
    }
    acc += is_steer ? cfg.w_steer : cfg.w_accel;
    const bool interior = step > 0 && step + 1 < n;
    acc += cfg.w_jerk * (interior ? 2.0 : (n > 1 ? 1.0 : 0.0));
    d[j] = std::max(acc, 1e-9);
  }
  return d;
}

inline std::vector<Action> project(std::span<const double> z, const VehicleParams& p) {
  std::vector<Action> u(z.size() / 2);
  for (std::size_t k = 0; k < u.size(); ++k) {
    u[k].accel = std::clamp(z[2 * k], -p.max_accel, p.max_accel);
    u[k].steer = std::clamp(z[2 * k + 1], -p.max_steer, p.max_steer);
  }
  return u;
}

}  // namespace mpc_detail

// Tracks `ref[0..horizon)` (ref[k] is the target for the state after k+1 steps).
inline MpcResult mpc_track(const EgoState& state, std::span<const Pose> ref, const MpcConfig& cfg,
                           const VehicleParams& params, std::span<const Action> warm_start = {}) {
  cfg.check();
  params.check();
  const std::size_t n = static_cast<std::size_t>(cfg.horizon);
  if (ref.size() < n) throw std::invalid_argument("mpc_track: reference shorter than horizon");
  for (std::size_t k = 0; k < n; ++k)
    if (!std::isfinite(ref[k].x) || !std::isfinite(ref[k].y) || !std::isfinite(ref[k].heading))
      throw std::invalid_argument("mpc_track: reference not finite");
  if (distance(ref[0].position(), state.position()) > 50.0)
    throw std::invalid_argument("mpc_track: reference starts more than 50 m away");
  VehicleParams p = params;
  p.dt = cfg.dt;
  const auto r = ref.first(n);

  std::vector<Action> u(n);
  for (std::size_t k = 0; k < n && k < warm_start.size(); ++k) u[k] = clamp_action(warm_start[k], p);

  MpcResult res;
  double cost = mpc_cost(state, u, r, cfg, p);
  if (!std::isfinite(cost)) throw MpcError(0, "non-finite cost");
  res.cost_history.push_back(cost);
  const auto scale = mpc_detail::gauss_newton_diagonal(state, u, cfg, p);

  double alpha = 1.0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto g = mpc_gradient(state, u, r, cfg, p);
    bool accepted = false;
    double new_cost = cost;
    std::vector<Action> candidate;
    while (alpha > 1e-10) {
      std::vector<double> z(2 * n);
      for (std::size_t k = 0; k < n; ++k) {
        z[2 * k] = u[k].accel - alpha * g[2 * k] / scale[2 * k];
        z[2 * k + 1] = u[k].steer - alpha * g[2 * k + 1] / scale[2 * k + 1];
      }
      candidate = mpc_detail::project(z, p);
      double decrease = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        decrease += g[2 * k] * (u[k].accel - candidate[k].accel) + g[2 * k + 1] * (u[k].steer - candidate[k].steer);
      new_cost = mpc_cost(state, candidate, r, cfg, p);
      if (!std::isfinite(new_cost)) throw MpcError(it, "non-finite cost");
      if (decrease > 0.0 && new_cost <= cost - 1e-4 * decrease) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const double improvement = cost - new_cost;
    u = std::move(candidate);
    cost = new_cost;
    res.cost_history.push_back(cost);
    alpha = std::min(alpha * 2.0, 1.0);
    if (improvement < cfg.tolerance) break;
  }
  res.actions = u;
  res.cost = mpc_cost(state, u, r, cfg, p);
  res.trajectory = mpc_detail::rollout(state, u, p);
  return res;
}

// Previous solution advanced by one step, last action repeated.
inline std::vector<Action> shift_warm_start(std::span<const Action> previous) {
  std::vector<Action> out;
  if (previous.empty()) return out;
  out.assign(previous.begin() + 1, previous.end());
  out.push_back(previous.back());
  return out;
}

}  // namespace loopsim
