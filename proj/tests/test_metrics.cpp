#include <gtest/gtest.h>

#include <cmath>

#include "loopsim/metrics.hpp"
#include "loopsim/synth.hpp"
#include "oracles.hpp"
#include "reward_cases.hpp"

using namespace loopsim;

TEST(Reward, HandSubstitutedCases) {
  int i = 0;
  for (const auto& c : testutil::reward_cases()) {
    const auto r = step_reward(c.in, c.w);
    EXPECT_EQ(r.collision, c.collision) << "case " << i;
    EXPECT_EQ(r.offroad, c.offroad) << "case " << i;
    EXPECT_EQ(r.progress, c.progress) << "case " << i;
    EXPECT_EQ(r.smoothness, c.smoothness) << "case " << i;
    EXPECT_EQ(r.completion, c.completion) << "case " << i;
    EXPECT_EQ(r.total, c.total) << "case " << i;
    ++i;
  }
  EXPECT_GE(i, 20);
}

TEST(Reward, TermsAreBounded) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    StepSignals s;
    s.d_collision = rng.uniform(-10, 10);
    s.d_offroad = rng.uniform(-10, 10);
    s.d_progress = rng.uniform(-10, 10);
    s.delta_accel = rng.uniform(0, 5);
    s.delta_turning = rng.uniform(0, 0.5);
    const auto r = step_reward(s, {1, 1, 1});
    ASSERT_LE(r.collision, 0.0);
    ASSERT_GE(r.offroad, -2.0);
    ASSERT_LE(r.offroad, 0.0);
    ASSERT_GE(r.progress, -2.0);
    ASSERT_LE(r.progress, 1.0);
    ASSERT_TRUE(r.smoothness == 0.0 || r.smoothness == -0.5);
  }
}

TEST(BoxGap, TenMetresApart) {
  const OrientedBox a{{0, 0}, 0, 4, 2}, b{{10, 0}, 0, 4, 2};
  EXPECT_DOUBLE_EQ(box_gap(a, b), 6.0);
  EXPECT_DOUBLE_EQ(box_gap(b, a), 6.0);
}

TEST(BoxGap, CoincidentIsNegative) {
  const OrientedBox a{{0, 0}, 0, 4, 2};
  EXPECT_DOUBLE_EQ(box_gap(a, a), -2.0);
}

TEST(BoxGap, TouchingIsZero) {
  const OrientedBox a{{0, 0}, 0, 4, 2}, b{{4, 0}, 0, 4, 2};
  EXPECT_NEAR(box_gap(a, b), 0.0, 1e-12);
}

TEST(BoxGap, CornerToCorner) {
  const OrientedBox a{{0, 0}, 0, 2, 2}, b{{5, 6}, 0, 2, 2};
  EXPECT_NEAR(box_gap(a, b), 5.0, 1e-12);
}

TEST(BoxGap, AgreesWithSamplingOracle) {
  Rng rng(42);
  int overlapping = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = testutil::random_box(rng, 4.0), b = testutil::random_box(rng, 4.0);
    const double g = box_gap(a, b);
    const bool overlap = testutil::boxes_overlap_sampled(a, b);
    // Near-tangent pairs can fall between samples; skip the sign check there.
    if (std::abs(g) > 0.05) ASSERT_EQ(g < 0, overlap) << "pair " << i << " gap " << g;
    if (g > 0) {
      ASSERT_NEAR(g, testutil::box_distance_sampled(a, b, 0.01), 0.05) << "pair " << i;
    } else {
      ++overlapping;
      ASSERT_NEAR(-g, testutil::box_penetration_sampled(a, b), 0.05) << "pair " << i;
    }
  }
  EXPECT_GT(overlapping, 100);
  EXPECT_LT(overlapping, 900);
}

TEST(CollisionGap, MinimumOverOthers) {
  const OrientedBox ego{{0, 0}, 0, 4, 2};
  const std::vector<OrientedBox> others{{{10, 0}, 0, 4, 2}, {{0, 5}, 0, 4, 2}};
  EXPECT_DOUBLE_EQ(collision_gap(ego, others), 3.0);
  EXPECT_TRUE(std::isinf(collision_gap(ego, {})));
}

TEST(EdgeDistance, CentreOfFourMetreRoad) {
  const std::vector<Polyline> edges{{{0, -2}, {50, -2}, {50, 2}, {0, 2}, {0, -2}}};
  EXPECT_DOUBLE_EQ(signed_edge_distance({25, 0}, edges), -2.0);
  EXPECT_DOUBLE_EQ(signed_edge_distance({25, 2}, edges), 0.0);
  EXPECT_DOUBLE_EQ(signed_edge_distance({25, 3}, edges), 1.0);
  EXPECT_DOUBLE_EQ(signed_edge_distance({-1, 0}, edges), 1.0);
  EXPECT_THROW(signed_edge_distance({0, 0}, {}), std::invalid_argument);
}

TEST(EdgeDistance, AgreesWithPolygonOracle) {
  for (const auto& name : map_template_names()) {
    const auto m = build_map_template(name);
    const auto samples = testutil::sample_boundary(m.drivable_polygon, 0.02, false);
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (auto p : m.drivable_polygon) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
    Rng rng(mix_seed(9, name));
    int inside = 0;
    for (int i = 0; i < 300; ++i) {
      // Half the points near the road so both signs are exercised.
      Vec2 p;
      if (i % 2 == 0) {
        const auto& lane = m.graph.lanes[rng.below(m.graph.lanes.size())];
        p = point_at_arc(lane.centerline, rng.uniform(0, polyline_length(lane.centerline))) +
            Vec2{rng.uniform(-5, 5), rng.uniform(-5, 5)};
      } else {
        p = {rng.uniform(lo_x - 5, hi_x + 5), rng.uniform(lo_y - 5, hi_y + 5)};
      }
      const double d = signed_edge_distance(p, m.graph.road_edges);
      const double mag = testutil::min_sampled_distance(samples, p);
      if (mag > 0.02) ASSERT_EQ(d < 0, testutil::polygon_contains(m.drivable_polygon, p)) << name << " point " << i;
      ASSERT_NEAR(std::abs(d), mag, 0.02) << name << " point " << i;
      inside += d < 0;
    }
    EXPECT_GT(inside, 30) << name;
  }
}

TEST(OffroadDistance, SolidLinesLimitTheMargin) {
  const auto m = build_map_template("t-junction");
  // Inbound lane of the east arm sits 1.8 m from the median and 1.8 m from the outer edge.
  const double d = offroad_distance({60, 1.8}, m.graph);
  EXPECT_NEAR(d, -1.8, 1e-9);
  EXPECT_NEAR(offroad_distance({60, 0.5}, m.graph), -0.5, 1e-9);
  EXPECT_NEAR(offroad_distance({60, 5.6}, m.graph), 2.0, 1e-9);
}

namespace {

StepRecord at(double x, double y, double gap = 5.0, double edge = -1.0) {
  StepRecord r;
  r.ego = {x, y, 0, 0};
  r.signals.d_collision = gap;
  r.edge_distance = edge;
  return r;
}

}  // namespace

TEST(Classify, Examples) {
  const Vec2 goal{10, 0};
  EXPECT_EQ(classify_episode(std::vector{at(0, 0), at(8.5, 0)}, goal), TerminalClass::kCompleted);
  EXPECT_EQ(classify_episode(std::vector{at(0, 0), at(8.0, 0)}, goal), TerminalClass::kStuck);
  EXPECT_EQ(classify_episode(std::vector{at(0, 0), at(9.5, 0, 0.0)}, goal), TerminalClass::kCollided);
  EXPECT_EQ(classify_episode(std::vector{at(0, 0, 5, 0.3), at(9.5, 0)}, goal), TerminalClass::kOffroad);
  // Collision outranks everything.
  EXPECT_EQ(classify_episode(std::vector{at(0, 0, 5, 0.3), at(9.5, 0, -1)}, goal), TerminalClass::kCollided);
  // Touching the edge exactly is still on-road.
  EXPECT_EQ(classify_episode(std::vector{at(0, 0, 5, 0.0)}, goal), TerminalClass::kStuck);
  EXPECT_THROW(classify_episode(std::vector<StepRecord>{}, goal), std::invalid_argument);
}

TEST(Classify, StringRoundTrip) {
  for (auto c : {TerminalClass::kCompleted, TerminalClass::kCollided, TerminalClass::kOffroad, TerminalClass::kStuck})
    EXPECT_EQ(terminal_class_from_string(to_string(c)), c);
  EXPECT_THROW(terminal_class_from_string("crashed"), std::invalid_argument);
}

TEST(Report, RatesSumToOne) {
  Rng rng(5);
  std::vector<TerminalClass> cs;
  for (int i = 0; i < 997; ++i) cs.push_back(static_cast<TerminalClass>(rng.below(4)));
  const auto m = MetricsReport::from(cs);
  EXPECT_EQ(m.count, 997u);
  EXPECT_NEAR(m.completion + m.collision + m.offroad + m.stuck, 1.0, 1e-12);
  const auto e = MetricsReport::from({});
  EXPECT_EQ(e.count, 0u);
  EXPECT_EQ(e.completion, 0.0);
}

TEST(Report, SmallExample) {
  const std::vector cs{TerminalClass::kCompleted, TerminalClass::kCompleted, TerminalClass::kCollided,
                       TerminalClass::kStuck};
  const auto m = MetricsReport::from(cs);
  EXPECT_EQ(m.completion, 0.5);
  EXPECT_EQ(m.collision, 0.25);
  EXPECT_EQ(m.offroad, 0.0);
  EXPECT_EQ(m.stuck, 0.25);
}

TEST(Comfort, Threshold) {
  const VehicleParams p;
  EXPECT_FALSE(is_uncomfortable(6.0, p));
  EXPECT_TRUE(is_uncomfortable(6.01, p));
  EXPECT_TRUE(is_uncomfortable(-7.0, p));
}
