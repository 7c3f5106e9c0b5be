#pragma once

#include <string>
#include <vector>

#include "loopsim/scenario_io.hpp"
#include "loopsim/synth.hpp"

namespace loopsim::testutil {

inline std::string data_dir() { return LOOPSIM_DATA_DIR; }

inline std::vector<Scenario> fixtures() { return load_scenario_dir(data_dir() + "/fixtures"); }

// One straight eastbound lane from x = 0 to x = length, road 3.6 m wide, SDC parked at
// x0 with the given speed held constant in the log.
inline Scenario straight_road(double length = 200.0, double x0 = 10.0, double v = 0.0) {
  Scenario s;
  s.scenario_id = "straight";
  Lane l;
  l.id = 1;
  l.centerline = {{0, 0}, {length, 0}};
  s.lane_graph.lanes.push_back(l);
  s.lane_graph.road_edges.push_back({{0, -1.8}, {length, -1.8}, {length, 1.8}, {0, 1.8}, {0, -1.8}});
  Track t;
  t.agent_id = 0;
  t.states.resize(kTrackFrames);
  for (int k = 0; k < kTrackFrames; ++k) {
    auto& a = t.states[static_cast<std::size_t>(k)];
    a.x = x0 + v * (k - kCurrentFrame) * kFrameDt;
    a.vx = v;
    a.length = 4.8;
    a.width = 2.0;
    a.valid = true;
  }
  s.tracks.push_back(t);
  s.goal = t.states.back().position();
  s.s2g_dist = logged_arc_length(t);
  return s;
}

}  // namespace loopsim::testutil
