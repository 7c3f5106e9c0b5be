#pragma once

// Point mass moving toward a goal inside a square arena, scored with the driving reward terms.
// There are no obstacles, so the collision term is always zero. Leaving the arena ends the
// episode as offroad.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "loopsim/geometry.hpp"
#include "loopsim/metrics.hpp"
#include "loopsim/rng.hpp"
#include "loopsim/sac.hpp"

namespace loopsim {

struct ToyConfig {
  double half_size = 10.0;
  double max_step = 1.0;  // per-axis displacement bound
  double goal_radius = 1.0;
  int max_steps = 40;
  RewardWeights weights;
};

class PointGoalEnv {
 public:
  explicit PointGoalEnv(ToyConfig cfg = {}) : cfg_(cfg) {}

  std::vector<double> reset(Rng& rng) {
    pos_ = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
    do {
      goal_ = {rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)};
    } while (distance(pos_, goal_) < 3.0);
    last_ = {0.0, 0.0};
    steps_ = 0;
    done_ = false;
    terminal_ = TerminalClass::kStuck;
    return observation();
  }

  std::vector<double> observation() const {
    return {(goal_.x - pos_.x) / 10.0, (goal_.y - pos_.y) / 10.0, pos_.x / 10.0, pos_.y / 10.0};
  }

  struct Result {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
    bool terminal = false;  // goal or offroad, as opposed to timeout
  };

  Result step(std::span<const double> action) {
    const Vec2 a{std::clamp(action[0], -cfg_.max_step, cfg_.max_step),
                 std::clamp(action[1], -cfg_.max_step, cfg_.max_step)};
    const double before = distance(pos_, goal_);
    pos_ = pos_ + a;
    ++steps_;
    const double after = distance(pos_, goal_);

    StepSignals s;
    s.d_offroad = std::max(std::abs(pos_.x), std::abs(pos_.y)) - cfg_.half_size;
    s.d_progress = before - after;
    s.delta_accel = norm(a - last_);
    s.delta_turning = 0.0;
    s.is_goal = after < cfg_.goal_radius;
    last_ = a;

    Result r;
    r.reward = step_reward(s, cfg_.weights).total;
    if (s.is_goal) terminal_ = TerminalClass::kCompleted;
    else if (s.d_offroad > 0.0) terminal_ = TerminalClass::kOffroad;
    r.terminal = s.is_goal || s.d_offroad > 0.0;
    r.done = r.terminal || steps_ >= cfg_.max_steps;
    done_ = r.done;
    r.obs = observation();
    return r;
  }

  bool done() const { return done_; }
  TerminalClass terminal() const { return terminal_; }
  const ToyConfig& config() const { return cfg_; }

 private:
  ToyConfig cfg_;
  Vec2 pos_, goal_, last_;
  int steps_ = 0;
  bool done_ = false;
  TerminalClass terminal_ = TerminalClass::kStuck;
};

struct ToyTrainConfig {
  int episodes = 200;
  std::size_t warmup = 500;  // uniform random actions before the first update
  std::size_t updates_per_step = 1;
  std::uint64_t seed = 0;
};

// Trains online on the toy task; returns the number of completed training episodes.
inline int train_point_goal(SacAgent& agent, const ToyTrainConfig& tc, const ToyConfig& env_cfg = {}) {
  PointGoalEnv env(env_cfg);
  Rng rng(mix_seed(tc.seed, "toy-train"));
  ReplayBuffer<Experience> buffer(agent.config().capacity, mix_seed(tc.seed, "toy-buffer"));
  int completed = 0;
  std::size_t steps = 0;
  for (int ep = 0; ep < tc.episodes; ++ep) {
    auto obs = env.reset(rng);
    while (!env.done()) {
      std::vector<double> a;
      if (steps < tc.warmup) {
        for (double b : agent.bounds()) a.push_back(rng.uniform(-b, b));
      } else {
        a = agent.act(obs, true);
      }
      auto r = env.step(a);
      buffer.push({obs, a, r.reward, r.obs, r.terminal});
      obs = std::move(r.obs);
      ++steps;
      if (buffer.size() >= agent.config().batch_size && steps >= tc.warmup)
        for (std::size_t k = 0; k < tc.updates_per_step; ++k) agent.update(buffer);
    }
    if (env.terminal() == TerminalClass::kCompleted) ++completed;
  }
  return completed;
}

// Completion rate of the deterministic policy over fresh episodes.
inline double evaluate_point_goal(SacAgent& agent, int episodes, std::uint64_t seed, const ToyConfig& env_cfg = {}) {
  PointGoalEnv env(env_cfg);
  Rng rng(mix_seed(seed, "toy-eval"));
  int completed = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    auto obs = env.reset(rng);
    while (!env.done()) obs = env.step(agent.act(obs, false)).obs;
    if (env.terminal() == TerminalClass::kCompleted) ++completed;
  }
  return static_cast<double>(completed) / episodes;
}

}  // namespace loopsim
