#pragma once

// Built-in synthetic maps and a seeded scenario generator used for fixtures and tests.

#include <algorithm>
#include <string>
#include <vector>

#include "loopsim/geometry.hpp"
#include "loopsim/rng.hpp"
#include "loopsim/scenario.hpp"

namespace loopsim {

struct SynthSpec {
  std::string map_template = "straight-3-lane";
  int num_npcs = 0;
};

struct MapTemplate {
  std::string name;
  LaneGraph graph;
  Polyline drivable_polygon;  // closed, counter-clockwise; first point repeated at the end
  std::vector<std::vector<LaneId>> sdc_routes;
  std::vector<std::vector<LaneId>> npc_routes;
};

inline const std::vector<std::string>& map_template_names() {
  static const std::vector<std::string> names = {"straight-3-lane", "t-junction", "y-junction",
                                                 "4-way-intersection"};
  return names;
}

namespace synth_detail {

inline constexpr double kLaneHalfWidth = 1.8;

inline Polyline straight(Vec2 a, Vec2 b, int segments = 1) {
  Polyline out;
  for (int i = 0; i <= segments; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / segments));
  return out;
}

// Cubic Bezier through the corner `c`; close to a circular arc for right-angle corners.
inline Polyline corner_curve(Vec2 p, Vec2 c, Vec2 q, int samples = 16) {
  constexpr double k = 0.5522847498;
  const Vec2 p1 = p + (c - p) * k;
  const Vec2 p2 = q + (c - q) * k;
  Polyline out;
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples, u = 1.0 - t;
    out.push_back(p * (u * u * u) + p1 * (3 * u * u * t) + p2 * (3 * u * t * t) + q * (t * t * t));
  }
  return out;
}

inline Vec2 line_intersection(Vec2 p, Vec2 dp, Vec2 q, Vec2 dq) {
  const double denom = cross(dp, dq);
  const double t = cross(q - p, dq) / denom;
  return p + dp * t;
}

inline void append(Polyline& out, const Polyline& more) {
  for (const auto& p : more)
    if (out.empty() || distance(out.back(), p) > 1e-9) out.push_back(p);
}

inline Polyline close_ring(Polyline ring) {
  if (!ring.empty() && !(ring.front() == ring.back())) ring.push_back(ring.front());
  return ring;
}

inline MapTemplate straight_three_lane() {
  MapTemplate m;
  m.name = "straight-3-lane";
  constexpr double kLength = 250.0, kSeg = 50.0;
  constexpr int kSegments = 5;
  for (int j = 0; j < 3; ++j) {
    std::vector<LaneId> route;
    for (int k = 0; k < kSegments; ++k) {
      Lane l;
      l.id = (j + 1) * 10 + k;
      const double y = j * 2 * kLaneHalfWidth;
      l.centerline = straight({k * kSeg, y}, {(k + 1) * kSeg, y}, 5);
      if (k + 1 < kSegments) l.exits = {l.id + 1};
      if (j < 2) l.left_neighbor = l.id + 10;
      if (j > 0) l.right_neighbor = l.id - 10;
      l.speed_limit = 15.0;
      route.push_back(l.id);
      m.graph.lanes.push_back(std::move(l));
    }
    m.sdc_routes.push_back(route);
    m.npc_routes.push_back(route);
  }
  std::sort(m.graph.lanes.begin(), m.graph.lanes.end(), [](const Lane& a, const Lane& b) { return a.id < b.id; });
  const double lo = -kLaneHalfWidth, hi = 5 * kLaneHalfWidth;
  m.drivable_polygon = close_ring({{0, lo}, {kLength, lo}, {kLength, hi}, {0, hi}});
  m.graph.road_edges = {m.drivable_polygon};
  return m;
}

// Two-way arms meeting at the origin; right-hand traffic.
inline MapTemplate junction(const std::string& name, const std::vector<double>& arm_angles_deg) {
  MapTemplate m;
  m.name = name;
  constexpr double kInner = 12.0, kOuter = 120.0, kHalfRoad = 2 * kLaneHalfWidth;
  struct Arm {
    Vec2 u, n;
    LaneId inbound, outbound;
  };
  std::vector<Arm> arms;
  for (std::size_t i = 0; i < arm_angles_deg.size(); ++i) {
    const double a = arm_angles_deg[i] * kPi / 180.0;
    Arm arm{{std::cos(a), std::sin(a)}, {-std::sin(a), std::cos(a)}, static_cast<LaneId>(10 * (i + 1)),
            static_cast<LaneId>(10 * (i + 1) + 1)};
    Lane in, out;
    in.id = arm.inbound;
    in.centerline = straight(arm.u * kOuter + arm.n * kLaneHalfWidth, arm.u * kInner + arm.n * kLaneHalfWidth, 9);
    out.id = arm.outbound;
    out.centerline = straight(arm.u * kInner - arm.n * kLaneHalfWidth, arm.u * kOuter - arm.n * kLaneHalfWidth, 9);
    in.speed_limit = out.speed_limit = 12.0;
    m.graph.lanes.push_back(in);
    m.graph.lanes.push_back(out);
    m.graph.solid_lines.push_back(straight(arm.u * kInner, arm.u * kOuter, 1));
    arms.push_back(arm);
  }
  LaneId next_connector = 100;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    std::vector<LaneId> exits;
    for (std::size_t j = 0; j < arms.size(); ++j) {
      if (i == j) continue;
      const Vec2 p = arms[i].u * kInner + arms[i].n * kLaneHalfWidth;
      const Vec2 q = arms[j].u * kInner - arms[j].n * kLaneHalfWidth;
      const Vec2 dp = arms[i].u * -1.0, dq = arms[j].u;
      Lane c;
      c.id = next_connector++;
      if (std::abs(cross(dp, dq)) < 1e-9) {
        c.centerline = straight(p, q, 4);
      } else {
        c.centerline = corner_curve(p, line_intersection(p, dp, q, dq), q);
      }
      c.exits = {arms[j].outbound};
      c.speed_limit = 10.0;
      exits.push_back(c.id);
      m.graph.lanes.push_back(std::move(c));
      m.npc_routes.push_back({arms[i].inbound, static_cast<LaneId>(next_connector - 1), arms[j].outbound});
      m.sdc_routes.push_back(m.npc_routes.back());
    }
    for (auto& l : m.graph.lanes)
      if (l.id == arms[i].inbound) l.exits = exits;
  }
  std::sort(m.graph.lanes.begin(), m.graph.lanes.end(), [](const Lane& a, const Lane& b) { return a.id < b.id; });

  // Outline: out along each arm's right edge, across the cap, back along its left edge,
  // then a fillet (or a straight run for opposite arms) to the next arm counter-clockwise.
  Polyline ring;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const Arm& a = arms[i];
    const Arm& b = arms[(i + 1) % arms.size()];
    append(ring, {a.u * kInner - a.n * kHalfRoad, a.u * kOuter - a.n * kHalfRoad, a.u * kOuter + a.n * kHalfRoad,
                  a.u * kInner + a.n * kHalfRoad});
    const Vec2 p = a.u * kInner + a.n * kHalfRoad;
    const Vec2 q = b.u * kInner - b.n * kHalfRoad;
    if (std::abs(cross(a.u, b.u)) < 1e-9) {
      append(ring, {p, q});
    } else {
      append(ring, corner_curve(p, line_intersection(p, a.u * -1.0, q, b.u), q, 8));
    }
  }
  m.drivable_polygon = close_ring(ring);
  m.graph.road_edges = {m.drivable_polygon};
  return m;
}

inline MapTemplate y_junction() {
  MapTemplate m;
  m.name = "y-junction";
  constexpr double kR = 30.0, kHalf = 2.0, kBranch = kPi / 4.0;
  auto arc = [&](double radius, double from, double to, int n) {
    Polyline out;
    for (int i = 0; i <= n; ++i) {
      const double phi = from + (to - from) * i / n;
      out.push_back({radius * std::sin(phi), kR - radius * std::cos(phi)});
    }
    return out;
  };
  const Vec2 dir{std::cos(kBranch), std::sin(kBranch)};
  const Vec2 left{-dir.y, dir.x};
  const Vec2 b_end = Vec2{kR * std::sin(kBranch), kR - kR * std::cos(kBranch)};
  auto lane = [](LaneId id, Polyline c, std::vector<LaneId> exits) {
    Lane l;
    l.id = id;
    l.centerline = std::move(c);
    l.exits = std::move(exits);
    l.speed_limit = 13.0;
    return l;
  };
  m.graph.lanes = {lane(1, straight({-100, 0}, {-50, 0}, 5), {2}),
                   lane(2, straight({-50, 0}, {0, 0}, 5), {3, 5}),
                   lane(3, straight({0, 0}, {50, 0}, 5), {4}),
                   lane(4, straight({50, 0}, {150, 0}, 10), {}),
                   lane(5, arc(kR, 0.0, kBranch, 12), {6}),
                   lane(6, straight(b_end, b_end + dir * 100.0, 10), {})};
  m.sdc_routes = {{1, 2, 3, 4}, {1, 2, 5, 6}};
  m.npc_routes = m.sdc_routes;

  const double phi0 = std::acos((kR - kHalf) / (kR + kHalf));
  Polyline ring = {{-100, -kHalf}, {150, -kHalf}, {150, kHalf}};
  append(ring, arc(kR + kHalf, phi0, kBranch, 12));
  const Vec2 right_start = b_end - left * kHalf;
  const Vec2 left_start = b_end + left * kHalf;
  append(ring, {right_start + dir * 100.0, left_start + dir * 100.0});
  append(ring, arc(kR - kHalf, kBranch, 0.0, 12));
  append(ring, {{-100, kHalf}});
  m.drivable_polygon = close_ring(ring);
  m.graph.road_edges = {m.drivable_polygon};
  return m;
}

inline Polyline route_polyline(const LaneGraph& g, const std::vector<LaneId>& route) {
  Polyline out;
  for (LaneId id : route) append(out, g.at(id).centerline);
  return out;
}

struct Motion {
  Polyline path;
  double s0;  // arc length at frame 0
  double v;
};

inline Track make_track(int id, const Motion& m, double length, double width) {
  Track t;
  t.agent_id = id;
  t.kind = AgentKind::kVehicle;
  const double total = polyline_length(m.path);
  for (int k = 0; k < kTrackFrames; ++k) {
    const double s = m.s0 + m.v * k * kFrameDt;
    AgentState a;
    if (s >= 0.0 && s <= total) {
      const Vec2 p = point_at_arc(m.path, s);
      a.x = p.x;
      a.y = p.y;
      a.heading = wrap_angle(heading_at_arc(m.path, s));
      a.vx = m.v * std::cos(a.heading);
      a.vy = m.v * std::sin(a.heading);
      a.length = length;
      a.width = width;
      a.valid = true;
    }
    t.states.push_back(a);
  }
  return t;
}

inline double min_track_gap(const Track& a, const Track& b) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kTrackFrames; ++k) {
    const auto& sa = a.states[static_cast<std::size_t>(k)];
    const auto& sb = b.states[static_cast<std::size_t>(k)];
    if (sa.valid && sb.valid) best = std::min(best, box_gap(sa.box(), sb.box()));
  }
  return best;
}

}  // namespace synth_detail

inline MapTemplate build_map_template(const std::string& name) {
  if (name == "straight-3-lane") return synth_detail::straight_three_lane();
  if (name == "t-junction") return synth_detail::junction(name, {0.0, 180.0, 270.0});
  if (name == "y-junction") return synth_detail::y_junction();
  if (name == "4-way-intersection") return synth_detail::junction(name, {0.0, 90.0, 180.0, 270.0});
  throw ScenarioError(ScenarioError::Kind::kUnknownTemplate, "map_template", "unknown template '" + name + "'");
}

// Deterministic in (spec, seed). Logged tracks never come within 2 m of each other.
inline Scenario synth_scenario(const SynthSpec& spec, std::uint64_t seed) {
  using namespace synth_detail;
  MapTemplate map = build_map_template(spec.map_template);
  if (spec.num_npcs < 0)
    throw ScenarioError(ScenarioError::Kind::kValidation, "num_npcs", "must be non-negative");
  Rng rng(mix_seed(seed, spec.map_template));

  Scenario s;
  s.scenario_id = spec.map_template + "-s" + std::to_string(seed);
  s.lane_graph = map.graph;

  // SDC: reaches the interesting part of the map within the 8 s horizon.
  const auto& route = map.sdc_routes[rng.below(map.sdc_routes.size())];
  Motion sdc{route_polyline(map.graph, route), 0.0, 0.0};
  if (map.name == "straight-3-lane") {
    sdc.v = rng.uniform(8.0, 12.0);
    sdc.s0 = rng.uniform(5.0, 20.0);
  } else if (map.name == "y-junction") {
    sdc.v = rng.uniform(10.0, 12.0);
    const double s10 = 100.0 + rng.uniform(25.0, 45.0) - 8.0 * sdc.v;
    sdc.s0 = s10 - sdc.v;
  } else {
    sdc.v = rng.uniform(6.0, 9.0);
    const double junction_entry = polyline_length(map.graph.at(route.front()).centerline);
    const double s10 = junction_entry - 8.0 * sdc.v * rng.uniform(0.3, 0.5);
    sdc.s0 = s10 - sdc.v;
  }
  s.tracks.push_back(make_track(0, sdc, 4.8, 2.0));
  s.sdc_index = 0;

  for (int n = 0; n < spec.num_npcs; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      const auto& r = map.npc_routes[rng.below(map.npc_routes.size())];
      Motion m{route_polyline(map.graph, r), 0.0, rng.uniform(5.0, 12.0)};
      m.s0 = rng.uniform(0.0, polyline_length(m.path) * 0.7);
      Track t = make_track(n + 1, m, rng.uniform(4.2, 5.0), rng.uniform(1.8, 2.0));
      if (!t.current().valid) continue;
      bool clear = true;
      for (const auto& other : s.tracks) clear = clear && min_track_gap(t, other) >= 2.0;
      if (clear) {
        s.tracks.push_back(std::move(t));
        placed = true;
      }
    }
    if (!placed)
      throw ScenarioError(ScenarioError::Kind::kValidation, "num_npcs",
                          "could not place " + std::to_string(spec.num_npcs) + " agents without overlap");
  }

  const Track& ego = s.tracks[s.sdc_index];
  s.goal = ego.states.back().position();
  s.s2g_dist = logged_arc_length(ego);
  validate(s);
  return s;
}

}  // namespace loopsim
