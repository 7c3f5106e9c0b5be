#pragma once

// Goal augmentation: a cost-bounded depth-first search over lane exits and neighbours
// finds every lane sequence that reaches the logged start-to-goal distance, a goal is
// placed at that distance along each sequence, and nearby goals are suppressed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopsim/geometry.hpp"
#include "loopsim/scenario.hpp"

namespace loopsim {

enum class LaneAction { kLaneChange, kTurnLeft, kTurnRight, kGo };

inline const char* to_string(LaneAction a) {
  switch (a) {
    case LaneAction::kLaneChange: return "LC";
    case LaneAction::kTurnLeft: return "TL";
    case LaneAction::kTurnRight: return "TR";
    case LaneAction::kGo: return "Go";
  }
  return "Go";
}

struct ActionCostTable {
  double lane_change = 5.0;
  double turn_left = 1.0;
  double turn_right = 1.0;
  double go = 1.0;
  double max_cost = 10.0;
  double nms_radius = 2.5;
  double turn_threshold = 30.0 * kPi / 180.0;

  double cost(LaneAction a) const {
    switch (a) {
      case LaneAction::kLaneChange: return lane_change;
      case LaneAction::kTurnLeft: return turn_left;
      case LaneAction::kTurnRight: return turn_right;
      case LaneAction::kGo: return go;
    }
    return go;
  }
  void check() const {
    if (!(lane_change > 0 && turn_left > 0 && turn_right > 0 && go > 0))
      throw std::invalid_argument("ActionCostTable: costs must be positive");
    if (max_cost < std::min({lane_change, turn_left, turn_right, go}))
      throw std::invalid_argument("ActionCostTable: max_cost below the cheapest action");
  }
};

class CausalityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stretch of one lane's centerline, in arc-length offsets along that lane.
struct PathPiece {
  LaneId lane = 0;
  double from = 0.0;
  double to = 0.0;
  bool operator==(const PathPiece&) const = default;
};

struct LanePath {
  std::vector<LaneId> lanes;
  std::vector<LaneAction> actions;  // one per transition, lanes.size() - 1 entries
  std::vector<PathPiece> pieces;
  double cost = 0.0;

  double length() const {
    double s = 0.0;
    for (const auto& p : pieces) s += p.to - p.from;
    return s;
  }
  bool operator==(const LanePath&) const = default;
};

// Concatenated centerline. Lateral jumps between pieces (lane changes) add no arc length.
struct PathPolyline {
  Polyline points;
  std::vector<double> arc;
};

inline PathPolyline path_polyline(const LaneGraph& g, const LanePath& path) {
  PathPolyline out;
  double base = 0.0;
  for (const auto& piece : path.pieces) {
    const Polyline part = slice_polyline(g.at(piece.lane).centerline, piece.from, piece.to);
    double acc = base;
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (i > 0) acc += distance(part[i - 1], part[i]);
      out.points.push_back(part[i]);
      out.arc.push_back(acc);
    }
    base += piece.to - piece.from;
    if (!out.arc.empty()) out.arc.back() = base;
  }
  return out;
}

// Point at arc length `s`; the first vertex reaching `s` wins.
inline Vec2 point_on_path(const PathPolyline& p, double s) {
  if (p.points.empty()) return {};
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    if (p.arc[i] == s) return p.points[i];
    if (p.arc[i] > s) {
      if (i == 0) return p.points[0];
      const double t = (s - p.arc[i - 1]) / (p.arc[i] - p.arc[i - 1]);
      return p.points[i - 1] + (p.points[i] - p.points[i - 1]) * t;
    }
  }
  return p.points.back();
}

inline LaneAction classify_transition(LaneId from, LaneId to, const LaneGraph& g,
                                      const ActionCostTable& costs = {}) {
  const Lane& a = g.at(from);
  if (a.left_neighbor == to || a.right_neighbor == to) return LaneAction::kLaneChange;
  if (std::find(a.exits.begin(), a.exits.end(), to) == a.exits.end())
    throw CausalityError("lanes " + std::to_string(from) + " and " + std::to_string(to) + " are not connected");
  const double turn = net_heading_change(g.at(to).centerline);
  if (turn > costs.turn_threshold) return LaneAction::kTurnLeft;
  if (turn < -costs.turn_threshold) return LaneAction::kTurnRight;
  return LaneAction::kGo;
}

struct LanePosition {
  LaneId lane = 0;
  double offset = 0.0;
  double distance = 0.0;
};

// Nearest lane to `p`, preferring lanes whose direction agrees with `heading`; ties go to
// the lower lane id. Throws when every centerline is more than `max_distance` away.
inline LanePosition locate_on_lane(const LaneGraph& g, Vec2 p, std::optional<double> heading = std::nullopt,
                                   double max_distance = 5.0) {
  std::optional<LanePosition> best;
  bool best_aligned = false;
  for (const auto& lane : g.lanes) {
    const auto proj = project_onto_polyline(lane.centerline, p);
    if (proj.distance > max_distance) continue;
    bool aligned = true;
    if (heading) {
      const double lane_heading = heading_at_arc(lane.centerline, proj.arc);
      aligned = std::abs(angle_diff(lane_heading, *heading)) < kPi / 2;
    }
    const bool better = !best || (aligned && !best_aligned) ||
                        (aligned == best_aligned && proj.distance < best->distance - 1e-6);
    if (better) {
      best = LanePosition{lane.id, proj.arc, proj.distance};
      best_aligned = aligned;
    }
  }
  if (!best) throw CausalityError("start position is not within " + std::to_string(max_distance) + " m of any lane");
  return *best;
}

namespace causality_detail {

struct Expansion {
  LaneId target;
  LaneAction action;
  double from;
};

// Successors of the lane a path currently ends on, in lane-id order.
inline std::vector<Expansion> expansions(const LaneGraph& g, const LanePath& path, const ActionCostTable& costs) {
  const LaneId last = path.lanes.back();
  const Lane& lane = g.at(last);
  const Vec2 end = lane.centerline.back();
  std::vector<Expansion> out;
  for (LaneId e : lane.exits) out.push_back({e, classify_transition(last, e, g, costs), 0.0});
  for (auto n : {lane.left_neighbor, lane.right_neighbor}) {
    if (!n) continue;
    const auto proj = project_onto_polyline(g.at(*n).centerline, end);
    out.push_back({*n, LaneAction::kLaneChange, proj.arc});
  }
  std::stable_sort(out.begin(), out.end(), [](const Expansion& a, const Expansion& b) { return a.target < b.target; });
  return out;
}

inline LanePath extend(const LaneGraph& g, const LanePath& path, const Expansion& e, const ActionCostTable& costs) {
  LanePath next = path;
  next.lanes.push_back(e.target);
  next.actions.push_back(e.action);
  next.cost += costs.cost(e.action);
  next.pieces.push_back({e.target, e.from, polyline_length(g.at(e.target).centerline)});
  return next;
}

inline void search(const LaneGraph& g, const LanePath& path, double s2g, const ActionCostTable& costs,
                   std::vector<LanePath>& out) {
  if (path.length() > s2g) {
    if (path.cost <= costs.max_cost) out.push_back(path);
    return;
  }
  // Costs only grow, so an over-budget prefix can never be emitted.
  if (path.cost > costs.max_cost) return;
  for (const auto& e : expansions(g, path, costs)) {
    if (std::find(path.lanes.begin(), path.lanes.end(), e.target) != path.lanes.end()) continue;
    search(g, extend(g, path, e, costs), s2g, costs, out);
  }
}

}  // namespace causality_detail

inline LanePath start_path(const LaneGraph& g, LaneId start_lane, double offset) {
  const Lane& lane = g.at(start_lane);
  const double len = polyline_length(lane.centerline);
  LanePath p;
  p.lanes = {start_lane};
  p.pieces = {{start_lane, std::clamp(offset, 0.0, len), len}};
  return p;
}

// Every lane sequence from the start whose length first exceeds s2g within the cost budget,
// in depth-first lane-id order.
inline std::vector<LanePath> search_paths(const LaneGraph& g, LaneId start_lane, double start_offset, double s2g,
                                          const ActionCostTable& costs = {}) {
  costs.check();
  if (!(s2g > 0.0)) throw CausalityError("s2g_dist must be positive");
  if (!g.find(start_lane)) throw CausalityError("unknown start lane " + std::to_string(start_lane));
  std::vector<LanePath> out;
  causality_detail::search(g, start_path(g, start_lane, start_offset), s2g, costs, out);
  return out;
}

inline std::vector<LanePath> search_paths(const LaneGraph& g, Vec2 start, std::optional<double> heading, double s2g,
                                          const ActionCostTable& costs = {}) {
  const auto pos = locate_on_lane(g, start, heading);
  return search_paths(g, pos.lane, pos.offset, s2g, costs);
}

struct GoalCandidate {
  Vec2 point;
  double cost = 0.0;
  std::vector<LaneId> lanes;
  std::vector<LaneAction> actions;
  bool original = false;
};

inline std::vector<GoalCandidate> goals_from_paths(const LaneGraph& g, const std::vector<LanePath>& paths,
                                                   double s2g) {
  std::vector<GoalCandidate> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    if (!(p.length() > s2g)) throw CausalityError("path shorter than s2g_dist");
    out.push_back({point_on_path(path_polyline(g, p), s2g), p.cost, p.lanes, p.actions, false});
  }
  return out;
}

// Greedy suppression in ascending cost, ties by lane sequence. Kept goals are pairwise at
// least `radius` apart.
inline std::vector<GoalCandidate> nms_goals(std::vector<GoalCandidate> candidates, double radius) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const GoalCandidate& a, const GoalCandidate& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.lanes < b.lanes;
  });
  std::vector<GoalCandidate> kept;
  for (auto& c : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](const GoalCandidate& k) { return distance(k.point, c.point) < radius; });
    if (!suppressed) kept.push_back(std::move(c));
  }
  return kept;
}

struct GoalSet {
  std::string scenario_id;
  std::vector<GoalCandidate> goals;  // goals[0] is the logged goal
};

inline GoalSet generate_goal_set(const Scenario& s, const ActionCostTable& costs = {}) {
  const auto& cur = s.sdc().current();
  std::vector<GoalCandidate> candidates;
  candidates.push_back({s.goal, 0.0, {}, {}, true});
  if (s.s2g_dist > 0.0) {
    const auto paths = search_paths(s.lane_graph, cur.position(), cur.heading, s.s2g_dist, costs);
    for (auto& c : goals_from_paths(s.lane_graph, paths, s.s2g_dist)) candidates.push_back(std::move(c));
  }
  return {s.scenario_id, nms_goals(std::move(candidates), costs.nms_radius)};
}

// Copies of the scenario, one per goal; the logged goal keeps suffix _g0.
inline std::vector<Scenario> augment_scenario(const Scenario& s, const ActionCostTable& costs = {}) {
  const GoalSet set = generate_goal_set(s, costs);
  std::vector<Scenario> out;
  for (std::size_t i = 0; i < set.goals.size(); ++i) {
    Scenario v = s;
    v.scenario_id = s.scenario_id + "_g" + std::to_string(i);
    v.goal = set.goals[i].point;
    out.push_back(std::move(v));
  }
  return out;
}

// Cheapest lane sequence whose last lane passes within `tolerance` of the goal; used by the
// scripted planner for routing. Ties resolve to the first found in lane-id order.
inline std::optional<LanePath> route_to_goal(const LaneGraph& g, LaneId start_lane, double start_offset, Vec2 goal,
                                             const ActionCostTable& costs = {}, double max_cost = 20.0,
                                             double tolerance = 2.0) {
  std::optional<LanePath> best;
  auto reaches = [&](const LanePath& p) {
    const PathPiece& last = p.pieces.back();
    const auto proj = project_onto_polyline(g.at(last.lane).centerline, goal);
    return proj.distance <= tolerance && proj.arc >= last.from - 1e-9;
  };
  std::vector<LanePath> stack{start_path(g, start_lane, start_offset)};
  // Explicit stack, children pushed in reverse so pops follow lane-id order.
  while (!stack.empty()) {
    LanePath p = std::move(stack.back());
    stack.pop_back();
    if (p.cost > max_cost || (best && p.cost >= best->cost)) continue;
    if (reaches(p)) {
      best = p;
      continue;
    }
    auto next = causality_detail::expansions(g, p, costs);
    for (auto it = next.rbegin(); it != next.rend(); ++it) {
      if (std::find(p.lanes.begin(), p.lanes.end(), it->target) != p.lanes.end()) continue;
      stack.push_back(causality_detail::extend(g, p, *it, costs));
    }
  }
  return best;
}

}  // namespace loopsim
