#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "loopsim/scenario_io.hpp"
#include "loopsim/synth.hpp"
#include "support.hpp"

using namespace loopsim;

namespace {

// Hand-written smallest valid file: one lane, one parked SDC, goal at the lane end.
std::string minimal_file(const std::string& heading = "0") {
  std::ostringstream o;
  o << "loopsim-scenario v1\n"
    << "scenario_id=minimal\n"
    << "dt=0.1\n"
    << "sdc_index=0\n"
    << "goal=50,0\n"
    << "s2g_dist=0\n"
    << "lane id=1 speed_limit=15 left=- right=- exits=- centerline=0,0;50,0\n"
    << "road_edge points=0,-2;50,-2;50,2;0,2;0,-2\n"
    << "track id=7 kind=vehicle\n";
  for (int k = 0; k < 91; ++k)
    o << "state frame=" << k << " x=5 y=0 heading=" << (k == 42 ? heading : "0")
      << " vx=0 vy=0 length=4.5 width=1.9 valid=1\n";
  o << "end\n";
  return o.str();
}

}  // namespace

TEST(ScenarioIo, MinimalFileLoads) {
  const auto s = parse_scenario(minimal_file());
  EXPECT_EQ(s.lane_graph.lanes.size(), 1u);
  EXPECT_EQ(s.tracks.size(), 1u);
  EXPECT_EQ(s.tracks[0].agent_id, 7);
  EXPECT_EQ(s.goal, (Vec2{50, 0}));
  EXPECT_EQ(s.tracks[0].states.size(), 91u);
}

TEST(ScenarioIo, NanHeadingNamesTheFrame) {
  try {
    parse_scenario(minimal_file("nan"));
    FAIL() << "expected a validation error";
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.kind(), ScenarioError::Kind::kValidation);
    EXPECT_EQ(e.field(), "track 7 frame 42 heading");
  }
}

TEST(ScenarioIo, MalformedNumberIsParseError) {
  std::string text = minimal_file();
  text.replace(text.find("dt=0.1"), 6, "dt=abc");
  try {
    parse_scenario(text);
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.kind(), ScenarioError::Kind::kParse);
  }
}

TEST(ScenarioIo, TruncatedTrackIsRejected) {
  std::string text = minimal_file();
  const auto cut = text.find("state frame=90");
  text = text.substr(0, cut) + "end\n";
  EXPECT_THROW(parse_scenario(text), ScenarioError);
}

TEST(ScenarioIo, UnresolvedExitIsRejected) {
  std::string text = minimal_file();
  text.replace(text.find("exits=-"), 7, "exits=9");
  try {
    parse_scenario(text);
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.field(), "lane 1 exits");
  }
}

TEST(ScenarioIo, SdcInvalidAtCurrentFrameIsRejected) {
  std::string text = minimal_file();
  const std::string needle = "state frame=10 x=5 y=0 heading=0 vx=0 vy=0 length=4.5 width=1.9 valid=1";
  text.replace(text.find(needle), needle.size(), "state frame=10 x=5 y=0 heading=0 vx=0 vy=0 length=4.5 width=1.9 valid=0");
  EXPECT_THROW(parse_scenario(text), ScenarioError);
}

TEST(ScenarioIo, RoundTripIsByteIdentical) {
  for (const auto& name : map_template_names()) {
    const auto s = synth_scenario({name, 4}, 11);
    const std::string a = serialize_scenario(s);
    const std::string b = serialize_scenario(parse_scenario(a));
    EXPECT_EQ(a, b) << name;
  }
  const std::string m = minimal_file();
  EXPECT_EQ(serialize_scenario(parse_scenario(m)), m);
}

TEST(ScenarioIo, FixturesAreCanonical) {
  namespace fs = std::filesystem;
  int n = 0;
  for (const auto& e : fs::directory_iterator(testutil::data_dir() + "/fixtures")) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(serialize_scenario(parse_scenario(ss.str())), ss.str()) << e.path();
    ++n;
  }
  EXPECT_GE(n, 10);
}

TEST(ScenarioIo, FileRoundTrip) {
  const auto s = synth_scenario({"t-junction", 2}, 3);
  const auto path = std::filesystem::temp_directory_path() / "loopsim_roundtrip.scn";
  save_scenario(s, path);
  EXPECT_EQ(serialize_scenario(load_scenario(path)), serialize_scenario(s));
  std::filesystem::remove(path);
}

TEST(Synth, Deterministic) {
  const auto a = synth_scenario({"straight-3-lane", 3}, 0);
  const auto b = synth_scenario({"straight-3-lane", 3}, 0);
  EXPECT_EQ(serialize_scenario(a), serialize_scenario(b));
  EXPECT_NE(serialize_scenario(a), serialize_scenario(synth_scenario({"straight-3-lane", 3}, 1)));
}

TEST(Synth, FixturesRegenerateExactly) {
  for (const auto& s : testutil::fixtures()) {
    const auto dash = s.scenario_id.rfind("-s");
    const std::string name = s.scenario_id.substr(0, dash);
    const auto seed = std::stoull(s.scenario_id.substr(dash + 2));
    EXPECT_EQ(serialize_scenario(synth_scenario({name, 3}, seed)), serialize_scenario(s)) << s.scenario_id;
  }
}

TEST(Synth, FourWayCountsAndTurnConnectivity) {
  const auto s = synth_scenario({"4-way-intersection", 5}, 7);
  EXPECT_EQ(s.tracks.size(), 6u);
  // Each inbound arm reaches the three other arms: one straight, one left, one right.
  int inbound = 0;
  for (const auto& lane : s.lane_graph.lanes) {
    if (lane.exits.size() != 3) continue;
    ++inbound;
    int left = 0, right = 0, straight = 0;
    for (auto e : lane.exits) {
      const double turn = net_heading_change(s.lane_graph.at(e).centerline);
      if (turn > 0.5) ++left;
      else if (turn < -0.5) ++right;
      else ++straight;
    }
    EXPECT_EQ(left, 1);
    EXPECT_EQ(right, 1);
    EXPECT_EQ(straight, 1);
  }
  EXPECT_EQ(inbound, 4);
}

TEST(Synth, GraphClosureAndTrackLength) {
  for (const auto& name : map_template_names())
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = synth_scenario({name, 3}, seed);
      std::set<LaneId> ids;
      for (const auto& l : s.lane_graph.lanes) ids.insert(l.id);
      for (const auto& l : s.lane_graph.lanes) {
        for (auto e : l.exits) EXPECT_TRUE(ids.count(e));
        if (l.left_neighbor) EXPECT_TRUE(ids.count(*l.left_neighbor));
        if (l.right_neighbor) EXPECT_TRUE(ids.count(*l.right_neighbor));
      }
      for (const auto& t : s.tracks) EXPECT_EQ(t.states.size(), 91u);
      EXPECT_LE(s.lane_graph.lanes.size(), 20u);
    }
}

TEST(Synth, LoggedTracksKeepClear) {
  for (const auto& name : map_template_names()) {
    const auto s = synth_scenario({name, 4}, 5);
    for (std::size_t i = 0; i < s.tracks.size(); ++i)
      for (std::size_t j = i + 1; j < s.tracks.size(); ++j)
        for (int k = 0; k < kTrackFrames; ++k) {
          const auto& a = s.tracks[i].states[static_cast<std::size_t>(k)];
          const auto& b = s.tracks[j].states[static_cast<std::size_t>(k)];
          if (a.valid && b.valid) EXPECT_GE(box_gap(a.box(), b.box()), 2.0 - 1e-9);
        }
  }
}

TEST(Synth, UnknownTemplate) {
  try {
    synth_scenario({"roundabout", 0}, 0);
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.kind(), ScenarioError::Kind::kUnknownTemplate);
  }
}

TEST(Synth, S2gIsLoggedArcLength) {
  const auto s = synth_scenario({"y-junction", 0}, 2);
  double arc = 0.0;
  const auto& st = s.sdc().states;
  for (int k = kCurrentFrame + 1; k < kTrackFrames; ++k)
    arc += std::hypot(st[static_cast<std::size_t>(k)].x - st[static_cast<std::size_t>(k - 1)].x,
                      st[static_cast<std::size_t>(k)].y - st[static_cast<std::size_t>(k - 1)].y);
  EXPECT_NEAR(s.s2g_dist, arc, 1e-9);
  EXPECT_EQ(s.goal, s.sdc().states.back().position());
}
