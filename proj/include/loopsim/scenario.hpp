#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopsim/geometry.hpp"

namespace loopsim {

inline constexpr int kHistoryFrames = 11;
inline constexpr int kFutureFrames = 80;
inline constexpr int kTrackFrames = kHistoryFrames + kFutureFrames;
inline constexpr int kCurrentFrame = kHistoryFrames - 1;
inline constexpr double kFrameDt = 0.1;

enum class AgentKind { kVehicle, kPedestrian, kCyclist };

inline const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kVehicle: return "vehicle";
    case AgentKind::kPedestrian: return "pedestrian";
    case AgentKind::kCyclist: return "cyclist";
  }
  return "vehicle";
}

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double length = 0.0;
  double width = 0.0;
  bool valid = false;

  Vec2 position() const { return {x, y}; }
  Pose pose() const { return {x, y, heading}; }
  double speed() const { return std::hypot(vx, vy); }
  OrientedBox box() const { return {{x, y}, heading, length, width}; }
  bool operator==(const AgentState&) const = default;
};

struct Track {
  int agent_id = 0;
  AgentKind kind = AgentKind::kVehicle;
  std::vector<AgentState> states;  // kTrackFrames entries

  const AgentState& current() const { return states.at(kCurrentFrame); }
  bool operator==(const Track&) const = default;
};

using LaneId = int;

struct Lane {
  LaneId id = 0;
  Polyline centerline;
  std::vector<LaneId> exits;
  std::optional<LaneId> left_neighbor;
  std::optional<LaneId> right_neighbor;
  double speed_limit = 15.0;

  bool operator==(const Lane&) const = default;
};

struct LaneGraph {
  std::vector<Lane> lanes;  // sorted by id
  std::vector<Polyline> road_edges;
  std::vector<Polyline> solid_lines;

  const Lane* find(LaneId id) const {
    for (const auto& l : lanes)
      if (l.id == id) return &l;
    return nullptr;
  }
  const Lane& at(LaneId id) const {
    if (const Lane* l = find(id)) return *l;
    throw std::out_of_range("unknown lane id " + std::to_string(id));
  }
  bool operator==(const LaneGraph&) const = default;
};

struct Scenario {
  std::string scenario_id;
  double dt = kFrameDt;
  std::vector<Track> tracks;
  std::size_t sdc_index = 0;
  LaneGraph lane_graph;
  Vec2 goal;
  double s2g_dist = 0.0;

  const Track& sdc() const { return tracks.at(sdc_index); }
  bool operator==(const Scenario&) const = default;
};

class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { kParse, kValidation, kUnknownTemplate };

  ScenarioError(Kind kind, std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), kind_(kind), field_(std::move(field)) {}

  Kind kind() const { return kind_; }
  const std::string& field() const { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ScenarioError(ScenarioError::Kind::kValidation, field, what);
}

inline void validate_polyline(const Polyline& line, const std::string& field, std::size_t min_points) {
  require(line.size() >= min_points, field,
          "needs at least " + std::to_string(min_points) + " points");
  for (std::size_t i = 0; i < line.size(); ++i) {
    require(std::isfinite(line[i].x) && std::isfinite(line[i].y), field + " point " + std::to_string(i),
            "coordinate not finite");
    if (i > 0)
      require(distance(line[i - 1], line[i]) > 0.0, field + " segment " + std::to_string(i - 1),
              "zero-length segment");
  }
}

}  // namespace detail

// Throws ScenarioError naming the first violated invariant.
inline void validate(const Scenario& s) {
  using detail::require;
  require(!s.scenario_id.empty(), "scenario_id", "empty");
  require(std::abs(s.dt - kFrameDt) < 1e-12, "dt", "must be 0.1");
  require(std::isfinite(s.goal.x) && std::isfinite(s.goal.y), "goal", "not finite");
  require(std::isfinite(s.s2g_dist) && s.s2g_dist >= 0.0, "s2g_dist", "must be finite and >= 0");

  const auto& g = s.lane_graph;
  std::map<LaneId, int> ids;
  for (const auto& lane : g.lanes) {
    const std::string f = "lane " + std::to_string(lane.id);
    require(++ids[lane.id] == 1, f, "duplicate lane id");
    detail::validate_polyline(lane.centerline, f + " centerline", 2);
    require(std::isfinite(lane.speed_limit) && lane.speed_limit > 0.0, f + " speed_limit",
            "must be positive");
  }
  for (const auto& lane : g.lanes) {
    const std::string f = "lane " + std::to_string(lane.id);
    for (LaneId e : lane.exits) require(ids.count(e) > 0, f + " exits", "unresolved lane " + std::to_string(e));
    if (lane.left_neighbor)
      require(ids.count(*lane.left_neighbor) > 0, f + " left", "unresolved lane");
    if (lane.right_neighbor)
      require(ids.count(*lane.right_neighbor) > 0, f + " right", "unresolved lane");
  }
  for (std::size_t i = 0; i < g.road_edges.size(); ++i)
    detail::validate_polyline(g.road_edges[i], "road_edge " + std::to_string(i), 2);
  for (std::size_t i = 0; i < g.solid_lines.size(); ++i)
    detail::validate_polyline(g.solid_lines[i], "solid_line " + std::to_string(i), 2);

  require(!s.tracks.empty(), "tracks", "empty");
  require(s.sdc_index < s.tracks.size(), "sdc_index", "out of range");
  for (std::size_t t = 0; t < s.tracks.size(); ++t) {
    const auto& tr = s.tracks[t];
    const std::string f = "track " + std::to_string(tr.agent_id);
    require(tr.states.size() == static_cast<std::size_t>(kTrackFrames), f,
            "expected 91 frames, got " + std::to_string(tr.states.size()));
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      const auto& a = tr.states[k];
      const std::string ff = f + " frame " + std::to_string(k);
      require(std::isfinite(a.x) && std::isfinite(a.y), ff + " position", "not finite");
      require(std::isfinite(a.heading), ff + " heading", "not finite");
      require(a.heading > -kPi && a.heading <= kPi, ff + " heading", "outside (-pi, pi]");
      require(std::isfinite(a.vx) && std::isfinite(a.vy), ff + " velocity", "not finite");
      require(std::isfinite(a.length) && std::isfinite(a.width), ff + " extent", "not finite");
      if (a.valid) require(a.length > 0.0 && a.width > 0.0, ff + " extent", "must be positive");
    }
  }
  require(s.sdc().current().valid, "sdc_index", "SDC invalid at the current frame");
}

// Arc length of the logged SDC trajectory from the current frame to the last valid frame.
inline double logged_arc_length(const Track& track, int from_frame = kCurrentFrame) {
  double s = 0.0;
  const AgentState* prev = nullptr;
  for (int k = from_frame; k < kTrackFrames; ++k) {
    const auto& a = track.states[static_cast<std::size_t>(k)];
    if (!a.valid) continue;
    if (prev) s += distance(prev->position(), a.position());
    prev = &a;
  }
  return s;
}

}  // namespace loopsim
