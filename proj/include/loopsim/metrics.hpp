#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopsim/dynamics.hpp"
#include "loopsim/geometry.hpp"
#include "loopsim/scenario.hpp"

namespace loopsim {

inline constexpr double kGoalThreshold = 2.0;

// Weights on the safety and progress terms; completion and smoothness always count once.
struct RewardWeights {
  double offroad = 1.0;
  double collision = 1.0;
  double progress = 10.0;
};

struct StepSignals {
  double d_collision = std::numeric_limits<double>::infinity();
  double d_offroad = -std::numeric_limits<double>::infinity();
  double d_progress = 0.0;
  double delta_accel = 0.0;
  double delta_turning = 0.0;
  bool is_goal = false;
};

// Weighted contributions; total is their sum.
struct RewardBreakdown {
  double collision = 0.0;
  double offroad = 0.0;
  double progress = 0.0;
  double smoothness = 0.0;
  double completion = 0.0;
  double total = 0.0;
};

inline double reward_collision(double d_collision) { return std::min(d_collision - 1.0, 0.0); }
inline double reward_offroad(double d_offroad) { return std::clamp(-1.0 - d_offroad, -2.0, 0.0); }
inline double reward_progress(double d_progress) { return std::clamp(d_progress - 0.1, -2.0, 1.0); }
inline double reward_smoothness(double delta_accel, double delta_turning) {
  return (delta_accel > 1.5 || delta_turning > 0.1) ? -0.5 : 0.0;
}
inline double reward_completion(bool is_goal) { return is_goal ? 10.0 : 0.0; }

inline RewardBreakdown step_reward(const StepSignals& s, const RewardWeights& w) {
  RewardBreakdown r;
  r.collision = w.collision * reward_collision(s.d_collision);
  r.offroad = w.offroad * reward_offroad(s.d_offroad);
  r.progress = w.progress * reward_progress(s.d_progress);
  r.smoothness = reward_smoothness(s.delta_accel, s.delta_turning);
  r.completion = reward_completion(s.is_goal);
  r.total = r.collision + r.offroad + r.progress + r.smoothness + r.completion;
  return r;
}

inline bool is_uncomfortable(double accel, const VehicleParams& p) { return std::abs(accel) > p.max_accel; }

// Minimum separation from `ego` to any of `others`; negative is penetration depth.
inline double collision_gap(const OrientedBox& ego, std::span<const OrientedBox> others) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : others) best = std::min(best, box_gap(ego, o));
  return best;
}

// Signed distance to the nearest road edge. Edges keep the drivable area on their left;
// positive means off-road.
inline double signed_edge_distance(Vec2 p, std::span<const Polyline> edges) {
  if (edges.empty()) throw std::invalid_argument("signed_edge_distance: no road edges");
  double best = std::numeric_limits<double>::infinity();
  double best_line = 0.0;  // signed perpendicular distance for sign selection among ties
  for (const auto& edge : edges) {
    for (std::size_t i = 1; i < edge.size(); ++i) {
      const Vec2 a = edge[i - 1], b = edge[i];
      const Vec2 ab = b - a;
      const double len = norm(ab);
      if (len <= 0.0) continue;
      const double d = point_segment_distance(p, a, b);
      // Distance to the supporting line, positive on the right (off-road) side.
      const double line = -cross(ab, p - a) / len;
      const double tol = 1e-12 * std::max(1.0, d);
      if (d < best - tol) {
        best = d;
        best_line = line;
      } else if (d <= best + tol && std::abs(line) > std::abs(best_line)) {
        best_line = line;
      }
    }
  }
  if (best == 0.0) return 0.0;
  return best_line > 0.0 ? best : -best;
}

// Negative on-road (distance to the nearest edge or solid line), positive off-road.
inline double offroad_distance(Vec2 p, const LaneGraph& g) {
  const double edge = signed_edge_distance(p, g.road_edges);
  if (edge > 0.0) return edge;
  double nearest = -edge;
  for (const auto& line : g.solid_lines)
    for (std::size_t i = 1; i < line.size(); ++i)
      nearest = std::min(nearest, point_segment_distance(p, line[i - 1], line[i]));
  return -nearest;
}

enum class TerminalClass { kCompleted, kCollided, kOffroad, kStuck };

inline const char* to_string(TerminalClass c) {
  switch (c) {
    case TerminalClass::kCompleted: return "completed";
    case TerminalClass::kCollided: return "collided";
    case TerminalClass::kOffroad: return "offroad";
    case TerminalClass::kStuck: return "stuck";
  }
  return "stuck";
}

inline TerminalClass terminal_class_from_string(const std::string& s) {
  if (s == "completed") return TerminalClass::kCompleted;
  if (s == "collided") return TerminalClass::kCollided;
  if (s == "offroad") return TerminalClass::kOffroad;
  if (s == "stuck") return TerminalClass::kStuck;
  throw std::invalid_argument("unknown terminal class '" + s + "'");
}

// One simulated step of the ego, as logged by the environment.
struct StepRecord {
  EgoState ego;
  Action applied;
  StepSignals signals;
  double edge_distance = 0.0;  // signed road-edge distance of the ego centre
  RewardBreakdown reward;
  bool uncomfortable = false;
};

inline bool collided(const StepRecord& r) { return r.signals.d_collision <= 0.0; }
inline bool crossed_edge(const StepRecord& r) { return r.edge_distance > 0.0; }

// First match wins: collided, offroad, completed, stuck.
inline TerminalClass classify_episode(std::span<const StepRecord> log, Vec2 goal,
                                      double threshold = kGoalThreshold) {
  if (log.empty()) throw std::invalid_argument("classify_episode: empty log");
  if (std::any_of(log.begin(), log.end(), collided)) return TerminalClass::kCollided;
  if (std::any_of(log.begin(), log.end(), crossed_edge)) return TerminalClass::kOffroad;
  for (const auto& r : log)
    if (distance(r.ego.position(), goal) < threshold) return TerminalClass::kCompleted;
  return TerminalClass::kStuck;
}

struct MetricsReport {
  double completion = 0.0;
  double collision = 0.0;
  double offroad = 0.0;
  double stuck = 0.0;
  std::size_t count = 0;

  static MetricsReport from(std::span<const TerminalClass> classes) {
    MetricsReport m;
    m.count = classes.size();
    if (classes.empty()) return m;
    std::size_t n[4] = {0, 0, 0, 0};
    for (auto c : classes) ++n[static_cast<int>(c)];
    const double total = static_cast<double>(classes.size());
    m.completion = n[0] / total;
    m.collision = n[1] / total;
    m.offroad = n[2] / total;
    m.stuck = n[3] / total;
    return m;
  }
  bool operator==(const MetricsReport&) const = default;
};

}  // namespace loopsim
