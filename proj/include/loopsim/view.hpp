#pragma once

#include <deque>
#include <stdexcept>
#include <vector>

#include "loopsim/dynamics.hpp"
#include "loopsim/scenario.hpp"

namespace loopsim {

struct AgentView {
  int agent_id = 0;
  AgentKind kind = AgentKind::kVehicle;
  AgentState state;
};

// Read-only snapshot handed to planners once per step.
struct SimulatorView {
  const Scenario* scenario = nullptr;
  EgoState ego;
  double ego_length = 4.8;
  double ego_width = 2.0;
  std::vector<AgentView> others;  // agents present at this step, in track order
  Vec2 goal;
  int step = 0;
  std::deque<EgoState> history;  // most recent last, at most kHistoryFrames entries
  Action last_action;

  const LaneGraph& lane_graph() const { return scenario->lane_graph; }
};

enum class PlannerMode { kWaypoints, kAction };

struct PlannerOutput {
  PlannerMode mode = PlannerMode::kWaypoints;
  std::vector<Pose> waypoints;  // 0.1 s apart, first entry is the next frame
  Action action;

  static PlannerOutput from_waypoints(std::vector<Pose> w) {
    PlannerOutput o;
    o.mode = PlannerMode::kWaypoints;
    o.waypoints = std::move(w);
    return o;
  }
  static PlannerOutput from_action(Action a) {
    PlannerOutput o;
    o.mode = PlannerMode::kAction;
    o.action = a;
    return o;
  }
};

// A logged agent has no valid frame to replay.
class AgentRemoved : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No lane route reaches the goal.
class Unroutable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Planner {
 public:
  virtual ~Planner() = default;
  virtual void reset(const Scenario&) {}
  virtual PlannerOutput observe(const SimulatorView& view) = 0;
};

}  // namespace loopsim
