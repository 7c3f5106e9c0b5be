#include <gtest/gtest.h>

#include <cmath>

#include "loopsim/dynamics.hpp"
#include "oracles.hpp"

using namespace loopsim;

TEST(StepDefault, OneMetreInOneFrame) {
  const auto n = step_default({0, 0, 0, 0}, {1, 0, 0});
  EXPECT_DOUBLE_EQ(n.x, 1.0);
  EXPECT_DOUBLE_EQ(n.y, 0.0);
  EXPECT_DOUBLE_EQ(n.v, 10.0);
}

TEST(StepDefault, Identity) {
  const EgoState s{3, 4, 0.7, 5};
  const auto n = step_default(s, {3, 4, 0.7});
  EXPECT_EQ(n.x, 3);
  EXPECT_EQ(n.y, 4);
  EXPECT_EQ(n.theta, 0.7);
  EXPECT_EQ(n.v, 0.0);
}

TEST(StepDefault, HalfMetreSideways) {
  const auto n = step_default({0, 0, 0, 0}, {0, 0.5, kPi / 2});
  EXPECT_DOUBLE_EQ(n.v, 5.0);
  EXPECT_DOUBLE_EQ(n.theta, kPi / 2);
}

TEST(StepBicycle, StraightLine) {
  const auto n = step_bicycle({0, 0, 0, 10}, {0, 0}, {});
  EXPECT_DOUBLE_EQ(n.x, 1.0);
  EXPECT_DOUBLE_EQ(n.y, 0.0);
  EXPECT_DOUBLE_EQ(n.theta, 0.0);
  EXPECT_DOUBLE_EQ(n.v, 10.0);
}

TEST(StepBicycle, AccelerateFromRest) {
  EgoState s{0, 0, 0, 0};
  for (int i = 0; i < 10; ++i) s = step_bicycle(s, {2, 0}, {});
  EXPECT_NEAR(s.v, 2.0, 1e-12);
}

TEST(StepBicycle, HandComputedTurn) {
  const VehicleParams p;
  const EgoState s{1, 2, 0.3, 8};
  const auto n = step_bicycle(s, {1.0, 0.2}, p);
  EXPECT_DOUBLE_EQ(n.v, 8.1);
  EXPECT_DOUBLE_EQ(n.x, 1 + 8 * std::cos(0.3) * 0.1);
  EXPECT_DOUBLE_EQ(n.y, 2 + 8 * std::sin(0.3) * 0.1);
  EXPECT_DOUBLE_EQ(n.theta, 0.3 + 8 / 2.8 * std::tan(0.2) * 0.1);
}

TEST(StepBicycle, ClampsAndNeverReverses) {
  const VehicleParams p;
  EgoState s{0, 0, 0, 0.2};
  s = step_bicycle(s, {-100, 0}, p);
  EXPECT_EQ(s.v, 0.0);
  s = {0, 0, 0, 29.9};
  s = step_bicycle(s, {100, 0}, p);
  EXPECT_EQ(s.v, 30.0);
  const auto a = clamp_action({100, -2}, p);
  EXPECT_EQ(a.accel, 6.0);
  EXPECT_EQ(a.steer, -0.5);
}

TEST(StepBicycle, HeadingStaysWrapped) {
  EgoState s{0, 0, 3.1, 15};
  for (int i = 0; i < 500; ++i) {
    s = step_bicycle(s, {0, 0.5}, {});
    ASSERT_GT(s.theta, -kPi);
    ASSERT_LE(s.theta, kPi);
  }
}

// Constant steer and speed: the integrated path stays on the circle of radius L / tan(delta).
TEST(StepBicycle, CircleTest) {
  const VehicleParams p;
  for (double delta : {0.1, 0.3, 0.5}) {
    const double v = 5.0;
    const double r = p.wheelbase / std::tan(delta);
    EgoState s{0, 0, 0, v};
    std::vector<Vec2> pts{s.position()};
    double turned = 0.0;
    while (turned < 2 * kPi) {
      const double before = s.theta;
      s = step_bicycle(s, {0, delta}, p);
      turned += angle_diff(s.theta, before);
      pts.push_back(s.position());
    }
    // Explicit Euler traces a circle of the right radius whose centre sits half a step ahead.
    const Vec2 c = testutil::fit_circle_center(pts);
    EXPECT_NEAR(c.x, 0.5 * v * p.dt, 1e-6);
    double worst = 0.0;
    for (const auto& q : pts) worst = std::max(worst, std::abs(distance(q, c) - r) / r);
    EXPECT_LT(worst, 0.01) << "delta " << delta;
  }
}

// Halving dt on a smooth manoeuvre shrinks the one-second error against a fine reference by
// about 2x (first-order scheme).
TEST(StepBicycle, ConvergesAsDtHalves) {
  auto run = [](double dt) {
    VehicleParams p;
    p.dt = dt;
    EgoState s{0, 0, 0, 5};
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < n; ++i) s = step_bicycle(s, {1.0, 0.2}, p);
    return s;
  };
  const auto ref = run(1e-5);
  const double e1 = distance(run(0.1).position(), ref.position());
  const double e2 = distance(run(0.05).position(), ref.position());
  const double e3 = distance(run(0.025).position(), ref.position());
  EXPECT_NEAR(e1 / e2, 2.0, 0.25);
  EXPECT_NEAR(e2 / e3, 2.0, 0.25);
}

TEST(ImpliedAction, InvertsBicycle) {
  const VehicleParams p;
  const EgoState s{0, 0, 0.2, 7};
  const Action a{1.3, 0.17};
  const auto n = step_bicycle(s, a, p);
  const auto back = implied_action(s, n, p);
  EXPECT_NEAR(back.accel, a.accel, 1e-9);
  EXPECT_NEAR(back.steer, a.steer, 1e-9);
}

TEST(VehicleParams, RejectsNonPositive) {
  VehicleParams p;
  p.wheelbase = 0;
  EXPECT_THROW(p.check(), std::invalid_argument);
}
