#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "loopsim/controller.hpp"
#include "loopsim/dynamics.hpp"
#include "loopsim/metrics.hpp"
#include "loopsim/observation.hpp"
#include "loopsim/policies.hpp"
#include "loopsim/scenario.hpp"
#include "loopsim/view.hpp"

namespace loopsim {

enum class DynamicsModel { kDefault, kBicycle };
enum class NpcPolicy { kExpert, kIdm };

struct EnvConfig {
  DynamicsModel dynamics = DynamicsModel::kDefault;
  bool use_mpc = true;
  // Follow the first prediction by index instead of re-planning every step.
  bool open_loop = false;
  NpcPolicy npc_policy = NpcPolicy::kExpert;
  VehicleParams vehicle;
  MpcConfig mpc;
  RewardWeights weights;
  IdmParams idm;
  int max_steps = kFutureFrames;
  double goal_threshold = kGoalThreshold;
  std::uint64_t seed = 0;
};

class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpisodeResult {
  std::string scenario_id;
  TerminalClass terminal = TerminalClass::kStuck;
  int steps = 0;
  std::vector<StepRecord> log;
  std::vector<std::vector<AgentView>> agents;  // other agents after each step
  std::string error;                           // set when a policy failed mid-episode
};

struct StepResult {
  SimulatorView view;
  double reward = 0.0;
  bool done = false;
  std::optional<TerminalClass> terminal;
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg = {}) : cfg_(std::move(cfg)) {}

  const EnvConfig& config() const { return cfg_; }

  SimulatorView reset(const Scenario& s) {
    const auto& sdc = s.sdc();
    if (!sdc.current().valid) throw EnvironmentError(s.scenario_id + ": SDC invalid at the current frame");
    scenario_ = &s;
    step_ = 0;
    done_ = false;
    terminal_.reset();
    log_.clear();
    agent_log_.clear();
    warm_start_.clear();
    open_loop_plan_.clear();

    const auto& cur = sdc.current();
    ego_ = {cur.x, cur.y, cur.heading, cur.speed()};
    ego_length_ = cur.length;
    ego_width_ = cur.width;
    history_.clear();
    for (int k = 0; k <= kCurrentFrame; ++k) {
      const auto& a = sdc.states[static_cast<std::size_t>(k)];
      if (a.valid) history_.push_back({a.x, a.y, a.heading, a.speed()});
    }
    last_action_ = {};
    const auto& prev = sdc.states[kCurrentFrame - 1];
    if (prev.valid) last_action_ = implied_action({prev.x, prev.y, prev.heading, prev.speed()}, ego_, cfg_.vehicle);

    npcs_.clear();
    for (std::size_t i = 0; i < s.tracks.size(); ++i) {
      if (i == s.sdc_index || !s.tracks[i].current().valid) continue;
      Npc n;
      n.track = i;
      n.state = s.tracks[i].current();
      if (cfg_.npc_policy == NpcPolicy::kIdm && s.tracks[i].kind == AgentKind::kVehicle) {
        n.idm = IdmAgent::from_track(s.tracks[i], s.lane_graph);
        const double v0 = n.idm->params.desired_speed;
        n.idm->params = cfg_.idm;
        n.idm->params.desired_speed = v0;
      }
      npcs_.push_back(std::move(n));
    }
    prev_goal_distance_ = distance(ego_.position(), s.goal);
    map_samples_ = sample_map(s.lane_graph);
    return view();
  }

  SimulatorView view() const {
    SimulatorView v;
    v.scenario = scenario_;
    v.ego = ego_;
    v.ego_length = ego_length_;
    v.ego_width = ego_width_;
    v.goal = scenario_->goal;
    v.step = step_;
    v.last_action = last_action_;
    v.history = history_;
    for (const auto& n : npcs_)
      if (n.present) v.others.push_back({scenario_->tracks[n.track].agent_id, scenario_->tracks[n.track].kind, n.state});
    return v;
  }

  std::vector<double> observation() const { return build_sim_state(view(), map_samples_); }

  StepResult step(const PlannerOutput& out) {
    if (!scenario_) throw EnvironmentError("step before reset");
    if (done_) throw EnvironmentError(scenario_->scenario_id + ": step after done");

    const EgoState before = ego_;
    const auto [next_ego, applied] = advance_ego(out);

    // NPCs react to the pre-step snapshot.
    std::vector<OrientedBox> boxes;
    std::vector<double> speeds;
    boxes.push_back(ego_box(before));
    speeds.push_back(before.v);
    for (const auto& n : npcs_) {
      if (!n.present) continue;
      boxes.push_back(n.state.box());
      speeds.push_back(n.state.speed());
    }
    std::size_t slot = 1;
    const int frame = kCurrentFrame + step_ + 1;
    for (auto& n : npcs_) {
      if (!n.present) continue;
      const std::size_t self = slot++;
      const Track& t = scenario_->tracks[n.track];
      if (n.idm) {
        std::vector<OrientedBox> others;
        std::vector<double> other_speeds;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          if (i == self) continue;
          others.push_back(boxes[i]);
          other_speeds.push_back(speeds[i]);
        }
        n.idm->step(others, other_speeds, n.state.length, cfg_.vehicle.dt);
        const Pose p = n.idm->pose();
        n.state.x = p.x;
        n.state.y = p.y;
        n.state.heading = p.heading;
        n.state.vx = n.idm->v * std::cos(p.heading);
        n.state.vy = n.idm->v * std::sin(p.heading);
      } else if (frame < kTrackFrames && t.states[static_cast<std::size_t>(frame)].valid) {
        n.state = t.states[static_cast<std::size_t>(frame)];
      } else {
        n.present = false;
      }
    }

    ego_ = next_ego;
    history_.push_back(ego_);
    while (history_.size() > static_cast<std::size_t>(kHistoryFrames)) history_.pop_front();
    ++step_;

    StepRecord rec;
    rec.ego = ego_;
    rec.applied = applied;
    std::vector<OrientedBox> present;
    for (const auto& n : npcs_)
      if (n.present) present.push_back(n.state.box());
    rec.signals.d_collision = collision_gap(ego_box(ego_), present);
    rec.edge_distance = signed_edge_distance(ego_.position(), scenario_->lane_graph.road_edges);
    rec.signals.d_offroad = offroad_distance(ego_.position(), scenario_->lane_graph);
    const double goal_distance = distance(ego_.position(), scenario_->goal);
    rec.signals.d_progress = prev_goal_distance_ - goal_distance;
    prev_goal_distance_ = goal_distance;
    rec.signals.delta_accel = std::abs(applied.accel - last_action_.accel);
    rec.signals.delta_turning = std::abs(applied.steer - last_action_.steer);
    rec.signals.is_goal = goal_distance < cfg_.goal_threshold;
    rec.uncomfortable = is_uncomfortable(applied.accel, cfg_.vehicle);
    rec.reward = step_reward(rec.signals, cfg_.weights);
    last_action_ = applied;
    log_.push_back(rec);
    agent_log_.push_back(view().others);

    if (collided(rec)) terminal_ = TerminalClass::kCollided;
    else if (crossed_edge(rec)) terminal_ = TerminalClass::kOffroad;
    else if (rec.signals.is_goal) terminal_ = TerminalClass::kCompleted;
    else if (step_ >= cfg_.max_steps) terminal_ = TerminalClass::kStuck;
    done_ = terminal_.has_value();

    StepResult r;
    r.view = view();
    r.reward = rec.reward.total;
    r.done = done_;
    r.terminal = terminal_;
    return r;
  }

  // Ends the episode early as stuck, e.g. when the planner fails.
  void abort() {
    done_ = true;
    terminal_ = TerminalClass::kStuck;
  }

  bool done() const { return done_; }
  int steps() const { return step_; }
  const std::vector<StepRecord>& log() const { return log_; }
  const std::vector<std::vector<AgentView>>& agent_log() const { return agent_log_; }
  std::optional<TerminalClass> terminal() const { return terminal_; }
  const Scenario* scenario() const { return scenario_; }

 private:
  struct Npc {
    std::size_t track = 0;
    bool present = true;
    AgentState state;
    std::optional<IdmAgent> idm;
  };

  OrientedBox ego_box(const EgoState& e) const { return {{e.x, e.y}, e.theta, ego_length_, ego_width_}; }

  std::pair<EgoState, Action> advance_ego(const PlannerOutput& out) {
    const VehicleParams& p = cfg_.vehicle;
    if (out.mode == PlannerMode::kAction) {
      const Action a = clamp_action(out.action, p);
      return {step_bicycle(ego_, a, p), a};
    }
    if (out.waypoints.empty()) throw EnvironmentError("planner returned no waypoints");

    if (cfg_.open_loop) {
      if (open_loop_plan_.empty()) open_loop_plan_ = out.waypoints;
      const std::size_t k = std::min(static_cast<std::size_t>(step_), open_loop_plan_.size() - 1);
      const EgoState n = step_default(ego_, open_loop_plan_[k], p.dt);
      return {n, implied_action(ego_, n, p)};
    }

    if (cfg_.use_mpc) {
      std::vector<Pose> ref = out.waypoints;
      while (ref.size() < static_cast<std::size_t>(cfg_.mpc.horizon)) ref.push_back(ref.back());
      const auto sol = mpc_track(ego_, ref, cfg_.mpc, p, shift_warm_start(warm_start_));
      warm_start_ = sol.actions;
      // Both dynamics models land on the first rolled-out state of the tracker.
      return {sol.trajectory.front(), sol.actions.front()};
    }

    if (cfg_.dynamics == DynamicsModel::kBicycle) {
      // One-step inverse of the bicycle model towards the first waypoint.
      const Pose& w = out.waypoints.front();
      const double target_v = distance(ego_.position(), w.position()) / p.dt;
      Action a;
      a.accel = (target_v - ego_.v) / p.dt;
      if (ego_.v > 1e-6) a.steer = std::atan(angle_diff(w.heading, ego_.theta) / p.dt * p.wheelbase / ego_.v);
      a = clamp_action(a, p);
      return {step_bicycle(ego_, a, p), a};
    }
    const EgoState n = step_default(ego_, out.waypoints.front(), p.dt);
    return {n, implied_action(ego_, n, p)};
  }

  EnvConfig cfg_;
  const Scenario* scenario_ = nullptr;
  EgoState ego_;
  double ego_length_ = 4.8;
  double ego_width_ = 2.0;
  std::deque<EgoState> history_;
  Action last_action_;
  std::vector<Npc> npcs_;
  int step_ = 0;
  bool done_ = false;
  std::optional<TerminalClass> terminal_;
  double prev_goal_distance_ = 0.0;
  std::vector<StepRecord> log_;
  std::vector<std::vector<AgentView>> agent_log_;
  std::vector<Action> warm_start_;
  std::vector<Pose> open_loop_plan_;
  std::vector<Vec2> map_samples_;
};

struct Transition {
  std::vector<double> obs;
  Action action;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;
  std::optional<TerminalClass> terminal;
};

struct RolloutOutput {
  EpisodeResult episode;
  std::vector<Transition> transitions;
};

// Runs one episode to termination. Planner failures end the episode as stuck with the
// error recorded.
inline RolloutOutput rollout(Planner& planner, const Scenario& s, const EnvConfig& cfg,
                             const FeatureProvider& features = ZeroFeatures{}) {
  Environment env(cfg);
  SimulatorView view = env.reset(s);
  planner.reset(s);
  RolloutOutput out;
  out.episode.scenario_id = s.scenario_id;
  auto observe = [&](int step) {
    const auto sim = env.observation();
    return fuse_observation(sim, features.feature(s.scenario_id, step), features.dim());
  };
  std::vector<double> obs = observe(0);
  while (!env.done()) {
    PlannerOutput plan;
    try {
      plan = planner.observe(view);
      StepResult r = env.step(plan);
      Transition t;
      t.obs = std::move(obs);
      t.action = env.log().back().applied;
      t.reward = r.reward;
      obs = observe(env.steps());
      t.next_obs = obs;
      t.done = r.done;
      t.terminal = r.terminal;
      out.transitions.push_back(std::move(t));
      view = std::move(r.view);
    } catch (const AgentRemoved& e) {
      out.episode.error = e.what();
      env.abort();
    } catch (const Unroutable& e) {
      out.episode.error = e.what();
      env.abort();
    } catch (const MpcError& e) {
      out.episode.error = e.what();
      env.abort();
    }
  }
  out.episode.terminal = *env.terminal();
  out.episode.steps = env.steps();
  out.episode.log = env.log();
  out.episode.agents = env.agent_log();
  if (!out.transitions.empty() && !out.transitions.back().done) {
    out.transitions.back().done = true;
    out.transitions.back().terminal = out.episode.terminal;
  }
  return out;
}

using PlannerFactory = std::function<std::unique_ptr<Planner>(const Scenario&)>;

class HarnessError : public std::runtime_error {
 public:
  HarnessError(std::string scenario_id, const std::string& what)
      : std::runtime_error("scenario " + scenario_id + ": " + what), scenario_id_(std::move(scenario_id)) {}
  const std::string& scenario_id() const { return scenario_id_; }

 private:
  std::string scenario_id_;
};

struct BatchResult {
  MetricsReport report;
  std::vector<EpisodeResult> episodes;  // in scenario order
};

// Scenario i runs on worker i % workers. Results and transitions are gathered in scenario
// order, so the output does not depend on the worker count. All rollouts finish before
// this returns.
template <typename Buffer>
BatchResult batch_simulate(std::span<const Scenario> scenarios, const PlannerFactory& factory, const EnvConfig& cfg,
                           std::size_t workers, Buffer* buffer, const FeatureProvider& features = ZeroFeatures{}) {
  if (workers < 1) throw std::invalid_argument("batch_simulate: workers must be >= 1");
  std::vector<std::optional<RolloutOutput>> results(scenarios.size());
  std::vector<std::exception_ptr> errors(scenarios.size());

  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < scenarios.size(); i += workers) {
      try {
        auto planner = factory(scenarios[i]);
        results[i] = rollout(*planner, scenarios[i], cfg, features);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }

  BatchResult out;
  std::vector<TerminalClass> classes;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw HarnessError(scenarios[i].scenario_id, e.what());
      }
    }
    classes.push_back(results[i]->episode.terminal);
    if (buffer)
      for (auto& t : results[i]->transitions) buffer->push(std::move(t));
    out.episodes.push_back(std::move(results[i]->episode));
  }
  out.report = MetricsReport::from(classes);
  return out;
}

inline BatchResult batch_simulate(std::span<const Scenario> scenarios, const PlannerFactory& factory,
                                  const EnvConfig& cfg, std::size_t workers) {
  struct NoBuffer {
    void push(Transition&&) {}
  };
  return batch_simulate<NoBuffer>(scenarios, factory, cfg, workers, nullptr);
}

// Counts simulated scenarios and reports how many training rounds are due.
class TrainingCadence {
 public:
  explicit TrainingCadence(std::size_t every = 32) : every_(every) {
    if (every_ == 0) throw std::invalid_argument("TrainingCadence: cadence must be positive");
  }
  std::size_t record(std::size_t scenarios) {
    pending_ += scenarios;
    const std::size_t due = pending_ / every_;
    pending_ %= every_;
    return due;
  }
  std::size_t every() const { return every_; }

 private:
  std::size_t every_;
  std::size_t pending_ = 0;
};

// Simulates in chunks of the cadence and calls `train` once per completed chunk, after the
// whole chunk has finished.
template <typename Buffer>
std::vector<BatchResult> simulate_with_cadence(std::span<const Scenario> scenarios, const PlannerFactory& factory,
                                               const EnvConfig& cfg, std::size_t workers, Buffer& buffer,
                                               TrainingCadence& cadence, const std::function<void()>& train,
                                               const FeatureProvider& features = ZeroFeatures{}) {
  std::vector<BatchResult> out;
  for (std::size_t start = 0; start < scenarios.size(); start += cadence.every()) {
    const auto chunk = scenarios.subspan(start, std::min(cadence.every(), scenarios.size() - start));
    out.push_back(batch_simulate(chunk, factory, cfg, workers, &buffer, features));
    for (std::size_t n = cadence.record(chunk.size()); n > 0; --n) train();
  }
  return out;
}

}  // namespace loopsim
