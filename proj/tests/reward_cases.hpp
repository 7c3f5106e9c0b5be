#pragma once

#include <limits>
#include <vector>

#include "loopsim/metrics.hpp"

namespace loopsim::testutil {

struct RewardCase {
  StepSignals in;
  RewardWeights w;
  // Weighted terms, substituted by hand.
  double collision, offroad, progress, smoothness, completion, total;
};

inline std::vector<RewardCase> reward_cases() {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const RewardWeights one{1, 1, 1};
  const RewardWeights best{1, 1, 10};
  auto sig = [](double dc, double dof, double dp, double da, double dt, bool goal) {
    StepSignals s;
    s.d_collision = dc;
    s.d_offroad = dof;
    s.d_progress = dp;
    s.delta_accel = da;
    s.delta_turning = dt;
    s.is_goal = goal;
    return s;
  };
  return {
      // collision term: min(d - 1, 0)
      {sig(0.5, -3, 0.1, 0, 0, false), one, -0.5, 0, 0, 0, 0, -0.5},
      {sig(1.75, -3, 0.1, 0, 0, false), one, 0, 0, 0, 0, 0, 0},
      {sig(-0.25, -3, 0.1, 0, 0, false), one, -1.25, 0, 0, 0, 0, -1.25},
      {sig(0.25, -3, 0.1, 0, 0, false), one, -0.75, 0, 0, 0, 0, -0.75},
      {sig(1.0, -3, 0.1, 0, 0, false), one, 0, 0, 0, 0, 0, 0},
      {sig(-4.0, -3, 0.1, 0, 0, false), one, -5, 0, 0, 0, 0, -5},
      {sig(kInf, -3, 0.1, 0, 0, false), one, 0, 0, 0, 0, 0, 0},
      // offroad term: clip(-1 - d, -2, 0)
      {sig(kInf, -3, 0.1, 0, 0, false), one, 0, 0, 0, 0, 0, 0},
      {sig(kInf, 2, 0.1, 0, 0, false), one, 0, -2, 0, 0, 0, -2},
      {sig(kInf, -0.5, 0.1, 0, 0, false), one, 0, -0.5, 0, 0, 0, -0.5},
      {sig(kInf, 0, 0.1, 0, 0, false), one, 0, -1, 0, 0, 0, -1},
      {sig(kInf, -1, 0.1, 0, 0, false), one, 0, 0, 0, 0, 0, 0},
      // progress term: clip(d - 0.1, -2, 1)
      {sig(kInf, -3, 0.6, 0, 0, false), one, 0, 0, 0.5, 0, 0, 0.5},
      {sig(kInf, -3, 2.5, 0, 0, false), one, 0, 0, 1, 0, 0, 1},
      {sig(kInf, -3, -5, 0, 0, false), one, 0, 0, -2, 0, 0, -2},
      {sig(kInf, -3, -0.4, 0, 0, false), one, 0, 0, -0.5, 0, 0, -0.5},
      {sig(kInf, -3, 0.85, 0, 0, false), one, 0, 0, 0.75, 0, 0, 0.75},
      {sig(kInf, -3, 0.6, 0, 0, false), best, 0, 0, 5, 0, 0, 5},
      // smoothness: -0.5 when either change exceeds its threshold
      {sig(kInf, -3, 0.1, 2.0, 0, false), one, 0, 0, 0, -0.5, 0, -0.5},
      {sig(kInf, -3, 0.1, 1.5, 0.1, false), one, 0, 0, 0, 0, 0, 0},
      {sig(kInf, -3, 0.1, 0, 0.25, false), one, 0, 0, 0, -0.5, 0, -0.5},
      {sig(kInf, -3, 0.1, 3, 0.5, false), one, 0, 0, 0, -0.5, 0, -0.5},
      // completion
      {sig(kInf, -3, 0.1, 0, 0, true), one, 0, 0, 0, 0, 10, 10},
      // everything at once, with the default weights
      {sig(0.5, 0.5, 0.6, 2, 0, true), best, -0.5, -1.5, 5, -0.5, 10, 12.5},
      {sig(-0.25, 2, -5, 0, 0.5, false), RewardWeights{2, 3, 10}, -3.75, -4, -20, -0.5, 0, -28.25},
  };
}

}  // namespace loopsim::testutil
