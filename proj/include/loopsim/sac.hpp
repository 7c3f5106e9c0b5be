#pragma once

// Soft actor-critic, value-network variant: twin Q networks, a state-value network with a
// slowly tracking target copy, and a tanh-squashed Gaussian actor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loopsim/environment.hpp"
#include "loopsim/nn.hpp"
#include "loopsim/observation.hpp"
#include "loopsim/rng.hpp"
#include "loopsim/view.hpp"

namespace loopsim {

struct SacConfig {
  double lr = 1e-4;
  double tau = 0.005;
  double gamma = 0.99;
  double alpha = 0.2;
  std::size_t batch_size = 256;
  std::size_t cadence = 32;  // scenarios between training rounds
  std::size_t updates_per_round = 64;
  std::size_t capacity = 1'000'000;
  std::size_t hidden = 256;
  std::size_t layers = 6;
  std::uint64_t seed = 0;

  void check() const {
    if (!(lr > 0.0)) throw std::invalid_argument("SacConfig: lr must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("SacConfig: tau must be in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("SacConfig: gamma must be in [0, 1)");
    if (!(alpha >= 0.0)) throw std::invalid_argument("SacConfig: alpha must be non-negative");
    if (batch_size == 0 || cadence == 0 || capacity == 0) throw std::invalid_argument("SacConfig: zero size");
    if (layers < 1 || hidden == 0) throw std::invalid_argument("SacConfig: bad network shape");
  }
};

class SacError : public std::runtime_error {
 public:
  SacError(std::size_t batch_index, const std::string& what)
      : std::runtime_error(what + " (batch index " + std::to_string(batch_index) + ")"), index_(batch_index) {}
  std::size_t batch_index() const { return index_; }

 private:
  std::size_t index_;
};

struct Experience {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;  // true termination; no bootstrap past it
};

// Timeouts and aborted episodes are cut off, not terminal, so they still bootstrap.
inline Experience to_experience(const Transition& t) {
  Experience e;
  e.obs = t.obs;
  e.action = {t.action.accel, t.action.steer};
  e.reward = t.reward;
  e.next_obs = t.next_obs;
  e.done = t.done && t.terminal && *t.terminal != TerminalClass::kStuck;
  return e;
}

template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[cursor_] = std::move(item);
    }
    cursor_ = (cursor_ + 1) % capacity_;
    ++pushed_;
  }

  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n) {
    if (items_.empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng_.below(items_.size()));
    return idx;
  }

  std::vector<T> sample(std::size_t n) {
    std::vector<T> out;
    out.reserve(n);
    for (auto i : sample_indices(n)) out.push_back(items_[i]);
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t pushed() const { return pushed_; }
  const T& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::vector<T> items_;
  std::size_t cursor_ = 0;
  std::size_t pushed_ = 0;
  Rng rng_;
};

// Feeds rollout transitions into an experience buffer.
struct TransitionSink {
  ReplayBuffer<Experience>* buffer;
  void push(Transition&& t) { buffer->push(to_experience(t)); }
};

// ---- actor ----

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct ActorSample {
  std::vector<double> action;  // bound * tanh(u)
  std::vector<double> u;       // pre-squash sample
  std::vector<double> mean;
  std::vector<double> log_std;
  std::vector<double> raw_log_std;
  double log_prob = 0.0;
};

namespace sac_detail {

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|.
inline double log_sech2(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

inline double squash_log_std(double raw) {
  return kLogStdMin + 0.5 * (kLogStdMax - kLogStdMin) * (std::tanh(raw) + 1.0);
}

}  // namespace sac_detail

// Reparameterised evaluation with fixed noise `eps`.
inline ActorSample actor_eval(const Mlp& actor, std::span<const double> obs, std::span<const double> eps,
                              std::span<const double> bounds, Mlp::Tape* tape = nullptr) {
  const std::size_t m = bounds.size();
  if (actor.output_dim() != 2 * m) throw std::invalid_argument("actor_eval: actor output must be 2 x action dim");
  if (eps.size() != m) throw std::invalid_argument("actor_eval: noise dimension mismatch");
  const auto out = actor.forward(obs, tape);
  for (double v : out)
    if (!std::isfinite(v)) throw SacError(0, "actor produced a non-finite output");
  ActorSample s;
  s.log_prob = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double mu = out[i];
    const double raw = out[m + i];
    const double ls = sac_detail::squash_log_std(raw);
    const double u = mu + std::exp(ls) * eps[i];
    s.mean.push_back(mu);
    s.raw_log_std.push_back(raw);
    s.log_std.push_back(ls);
    s.u.push_back(u);
    s.action.push_back(bounds[i] * std::tanh(u));
    s.log_prob += -0.5 * eps[i] * eps[i] - ls - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(bounds[i]) -
                  sac_detail::log_sech2(u);
  }
  return s;
}

inline ActorSample actor_sample(const Mlp& actor, std::span<const double> obs, std::span<const double> bounds,
                                Rng& rng) {
  std::vector<double> eps(bounds.size());
  for (auto& e : eps) e = rng.normal();
  return actor_eval(actor, obs, eps, bounds);
}

// Squashed mean, for evaluation.
inline std::vector<double> actor_mean_action(const Mlp& actor, std::span<const double> obs,
                                             std::span<const double> bounds) {
  const std::vector<double> zero(bounds.size(), 0.0);
  return actor_eval(actor, obs, zero, bounds).action;
}

// ---- critics ----

inline std::vector<double> critic_input(std::span<const double> obs, std::span<const double> action,
                                        std::span<const double> bounds) {
  std::vector<double> x(obs.begin(), obs.end());
  for (std::size_t i = 0; i < action.size(); ++i) x.push_back(action[i] / bounds[i]);
  return x;
}

inline double q_value(const Mlp& q, std::span<const double> obs, std::span<const double> action,
                      std::span<const double> bounds) {
  return q.forward(critic_input(obs, action, bounds))[0];
}

// Value and d(value)/d(action) of a critic at one state-action pair.
using Critic = std::function<std::pair<double, std::vector<double>>(std::span<const double>, std::span<const double>)>;

// min(Q1, Q2) with the gradient of whichever is smaller.
inline Critic twin_q_critic(const Mlp& q1, const Mlp& q2, std::vector<double> bounds) {
  return [&q1, &q2, bounds = std::move(bounds)](std::span<const double> obs, std::span<const double> a) {
    const auto x = critic_input(obs, a, bounds);
    Mlp::Tape t1, t2;
    const double v1 = q1.forward(x, &t1)[0];
    const double v2 = q2.forward(x, &t2)[0];
    const Mlp& q = v1 <= v2 ? q1 : q2;
    const Mlp::Tape& t = v1 <= v2 ? t1 : t2;
    std::vector<double> scratch(q.num_params(), 0.0);
    const double one = 1.0;
    const auto gx = q.backward(t, std::span<const double>(&one, 1), scratch);
    std::vector<double> ga(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] = gx[obs.size() + i] / bounds[i];
    return std::pair{std::min(v1, v2), ga};
  };
}

inline void check_finite_loss(double v, std::size_t index, const char* what) {
  if (!std::isfinite(v)) throw SacError(index, std::string("non-finite ") + what + " loss");
}

// Regression targets r + gamma * (1 - done) * V_target(s').
inline std::vector<double> q_targets(const Mlp& v_target, std::span<const Experience> batch, double gamma) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto& e : batch) {
    double target = e.reward;
    if (!e.done && gamma != 0.0) target += gamma * v_target.forward(e.next_obs)[0];
    y.push_back(target);
  }
  return y;
}

// mean 0.5 * (Q(s, a) - y)^2
inline double q_loss(const Mlp& q, std::span<const Experience> batch, std::span<const double> targets,
                     std::span<const double> bounds, std::vector<double>* grad = nullptr) {
  if (grad) grad->assign(q.num_params(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Mlp::Tape tape;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double pred = q.forward(critic_input(batch[i].obs, batch[i].action, bounds), &tape)[0];
    const double err = pred - targets[i];
    const double li = 0.5 * err * err;
    check_finite_loss(li, i, "Q");
    loss += li * inv;
    if (grad) {
      const double g = err * inv;
      q.backward(tape, std::span<const double>(&g, 1), *grad);
    }
  }
  return loss;
}

// Soft state-value targets min Q(s, a~) - alpha * log pi(a~ | s), with a~ drawn from noise.
inline std::vector<double> v_targets(const Mlp& actor, const Mlp& q1, const Mlp& q2, std::span<const Experience> batch,
                                     std::span<const std::vector<double>> noise, double alpha,
                                     std::span<const double> bounds) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto s = actor_eval(actor, batch[i].obs, noise[i], bounds);
    const double q = std::min(q_value(q1, batch[i].obs, s.action, bounds), q_value(q2, batch[i].obs, s.action, bounds));
    y.push_back(q - alpha * s.log_prob);
  }
  return y;
}

// mean 0.5 * (V(s) - y)^2
inline double v_loss(const Mlp& v, std::span<const Experience> batch, std::span<const double> targets,
                     std::vector<double>* grad = nullptr) {
  if (grad) grad->assign(v.num_params(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Mlp::Tape tape;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double err = v.forward(batch[i].obs, &tape)[0] - targets[i];
    const double li = 0.5 * err * err;
    check_finite_loss(li, i, "V");
    loss += li * inv;
    if (grad) {
      const double g = err * inv;
      v.backward(tape, std::span<const double>(&g, 1), *grad);
    }
  }
  return loss;
}

// mean alpha * log pi(a~ | s) - critic(s, a~), differentiated through the reparameterised sample.
inline double actor_loss(const Mlp& actor, std::span<const std::vector<double>> obs,
                         std::span<const std::vector<double>> noise, double alpha, std::span<const double> bounds,
                         const Critic& critic, std::vector<double>* grad = nullptr) {
  if (grad) grad->assign(actor.num_params(), 0.0);
  const std::size_t m = bounds.size();
  const double inv = 1.0 / static_cast<double>(obs.size());
  double loss = 0.0;
  Mlp::Tape tape;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto s = actor_eval(actor, obs[i], noise[i], bounds, &tape);
    const auto [q, dq] = critic(obs[i], s.action);
    const double li = alpha * s.log_prob - q;
    check_finite_loss(li, i, "actor");
    loss += li * inv;
    if (!grad) continue;
    std::vector<double> gout(2 * m);
    for (std::size_t k = 0; k < m; ++k) {
      const double t = std::tanh(s.u[k]);
      // d(log pi)/du = 2 tanh(u); d(action)/du = bound * (1 - tanh^2).
      const double du = alpha * 2.0 * t - dq[k] * bounds[k] * (1.0 - t * t);
      const double sigma = std::exp(s.log_std[k]);
      const double dls = du * sigma * noise[i][k] - alpha;
      const double th = std::tanh(s.raw_log_std[k]);
      gout[k] = du * inv;
      gout[m + k] = dls * 0.5 * (kLogStdMax - kLogStdMin) * (1.0 - th * th) * inv;
    }
    actor.backward(tape, gout, *grad);
  }
  return loss;
}

// ---- agent ----

struct SacNets {
  Mlp q1, q2, v, v_target, actor;

  static SacNets make(std::size_t obs_dim, std::size_t act_dim, std::size_t hidden, std::size_t layers, Rng& rng) {
    SacNets n;
    n.q1 = Mlp::make(obs_dim + act_dim, hidden, layers, 1);
    n.q2 = Mlp::make(obs_dim + act_dim, hidden, layers, 1);
    n.v = Mlp::make(obs_dim, hidden, layers, 1);
    n.actor = Mlp::make(obs_dim, hidden, layers, 2 * act_dim);
    n.q1.init(rng);
    n.q2.init(rng);
    n.v.init(rng);
    n.actor.init(rng, 0.1);
    n.v_target = n.v;
    return n;
  }
};

struct SacLosses {
  double q1 = 0.0, q2 = 0.0, v = 0.0, actor = 0.0;
};

class SacAgent {
 public:
  SacAgent(std::size_t obs_dim, std::vector<double> bounds, SacConfig cfg)
      : cfg_(cfg), bounds_(std::move(bounds)), rng_(mix_seed(cfg.seed, "sac")) {
    cfg_.check();
    for (double b : bounds_)
      if (!(b > 0.0)) throw std::invalid_argument("SacAgent: action bounds must be positive");
    nets_ = SacNets::make(obs_dim, bounds_.size(), cfg_.hidden, cfg_.layers, rng_);
    reset_optimizers();
  }

  // Gradients for every network are taken at the pre-update parameters, then all step.
  SacLosses update(std::span<const Experience> batch) {
    if (batch.empty()) throw std::invalid_argument("SacAgent::update: empty batch");
    std::vector<std::vector<double>> noise(batch.size(), std::vector<double>(bounds_.size()));
    for (auto& n : noise)
      for (auto& e : n) e = rng_.normal();
    std::vector<std::vector<double>> obs;
    obs.reserve(batch.size());
    for (const auto& e : batch) obs.push_back(e.obs);

    SacLosses l;
    std::vector<double> gq1, gq2, gv, gpi;
    const auto yq = q_targets(nets_.v_target, batch, cfg_.gamma);
    l.q1 = q_loss(nets_.q1, batch, yq, bounds_, &gq1);
    l.q2 = q_loss(nets_.q2, batch, yq, bounds_, &gq2);
    const auto yv = v_targets(nets_.actor, nets_.q1, nets_.q2, batch, noise, cfg_.alpha, bounds_);
    l.v = v_loss(nets_.v, batch, yv, &gv);
    l.actor = actor_loss(nets_.actor, obs, noise, cfg_.alpha, bounds_, twin_q_critic(nets_.q1, nets_.q2, bounds_), &gpi);

    opt_q1_.step(nets_.q1.params(), gq1);
    opt_q2_.step(nets_.q2.params(), gq2);
    opt_v_.step(nets_.v.params(), gv);
    opt_actor_.step(nets_.actor.params(), gpi);
    soft_update(nets_.v_target, nets_.v, cfg_.tau);
    ++updates_;
    return l;
  }

  SacLosses update(ReplayBuffer<Experience>& buffer) {
    if (buffer.size() < cfg_.batch_size) throw std::logic_error("SacAgent::update: buffer smaller than batch size");
    const auto batch = buffer.sample(cfg_.batch_size);
    return update(std::span<const Experience>(batch));
  }

  std::vector<double> act(std::span<const double> obs, bool explore) {
    if (explore) return actor_sample(nets_.actor, obs, bounds_, rng_).action;
    return actor_mean_action(nets_.actor, obs, bounds_);
  }

  void reset_optimizers() {
    const AdamConfig a{cfg_.lr};
    opt_q1_ = Adam(nets_.q1.num_params(), a);
    opt_q2_ = Adam(nets_.q2.num_params(), a);
    opt_v_ = Adam(nets_.v.num_params(), a);
    opt_actor_ = Adam(nets_.actor.num_params(), a);
  }

  SacNets& nets() { return nets_; }
  const SacNets& nets() const { return nets_; }
  const SacConfig& config() const { return cfg_; }
  const std::vector<double>& bounds() const { return bounds_; }
  std::size_t obs_dim() const { return nets_.v.input_dim(); }
  long updates() const { return updates_; }
  Rng& rng() { return rng_; }

 private:
  SacConfig cfg_;
  std::vector<double> bounds_;
  Rng rng_;
  SacNets nets_;
  Adam opt_q1_, opt_q2_, opt_v_, opt_actor_;
  long updates_ = 0;
};

// ---- checkpoints ----
//
// Text header, then one block per network:
//   loopsim-sac-checkpoint 1
//   obs_dim <n> act_dim <m>
//   bounds <b_0> ... <b_{m-1}>
//   net <name> <layer count + 1> <size_0> ... <param count>
//   <param count raw little-endian IEEE doubles>
//   (newline)
// Networks in order q1, q2, v, v_target, actor.

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace sac_detail {

inline void write_net(std::ostream& out, const std::string& name, const Mlp& net) {
  out << "net " << name << ' ' << net.sizes().size();
  for (auto s : net.sizes()) out << ' ' << s;
  out << ' ' << net.num_params() << '\n';
  for (double v : net.params()) {
    unsigned char b[8];
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  out << '\n';
}

inline Mlp read_net(std::istream& in, const std::string& name) {
  std::string tag, got;
  std::size_t count = 0;
  if (!(in >> tag >> got >> count) || tag != "net" || got != name)
    throw CheckpointError("checkpoint: expected network '" + name + "'");
  std::vector<std::size_t> sizes(count);
  for (auto& s : sizes)
    if (!(in >> s)) throw CheckpointError("checkpoint: truncated sizes for '" + name + "'");
  std::size_t n = 0;
  if (!(in >> n) || in.get() != '\n') throw CheckpointError("checkpoint: bad header for '" + name + "'");
  Mlp net(sizes);
  if (net.num_params() != n) throw CheckpointError("checkpoint: parameter count mismatch for '" + name + "'");
  for (auto& v : net.params()) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint: truncated parameters");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  return net;
}

}  // namespace sac_detail

inline void save_checkpoint(const SacNets& nets, std::span<const double> bounds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << "loopsim-sac-checkpoint " << kCheckpointVersion << '\n';
  out << "obs_dim " << nets.v.input_dim() << " act_dim " << bounds.size() << '\n';
  out.precision(17);
  out << "bounds";
  for (double b : bounds) out << ' ' << b;
  out << '\n';
  sac_detail::write_net(out, "q1", nets.q1);
  sac_detail::write_net(out, "q2", nets.q2);
  sac_detail::write_net(out, "v", nets.v);
  sac_detail::write_net(out, "v_target", nets.v_target);
  sac_detail::write_net(out, "actor", nets.actor);
}

struct Checkpoint {
  SacNets nets;
  std::vector<double> bounds;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "loopsim-sac-checkpoint") throw CheckpointError("not a checkpoint file");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::string k1, k2;
  std::size_t obs_dim = 0, act_dim = 0;
  if (!(in >> k1 >> obs_dim >> k2 >> act_dim) || k1 != "obs_dim" || k2 != "act_dim")
    throw CheckpointError("checkpoint: bad dimensions line");
  Checkpoint c;
  std::string kb;
  if (!(in >> kb) || kb != "bounds") throw CheckpointError("checkpoint: missing bounds");
  c.bounds.resize(act_dim);
  for (auto& b : c.bounds)
    if (!(in >> b)) throw CheckpointError("checkpoint: truncated bounds");
  c.nets.q1 = sac_detail::read_net(in, "q1");
  c.nets.q2 = sac_detail::read_net(in, "q2");
  c.nets.v = sac_detail::read_net(in, "v");
  c.nets.v_target = sac_detail::read_net(in, "v_target");
  c.nets.actor = sac_detail::read_net(in, "actor");
  if (c.nets.actor.input_dim() != obs_dim || c.nets.actor.output_dim() != 2 * act_dim)
    throw CheckpointError("checkpoint: actor shape does not match header");
  return c;
}

// ---- driving planner ----

inline std::vector<double> driving_action_bounds(const VehicleParams& p = {}) { return {p.max_accel, p.max_steer}; }

// Action-mode planner backed by a frozen actor snapshot.
class SacPlanner : public Planner {
 public:
  SacPlanner(std::shared_ptr<const Mlp> actor, std::vector<double> bounds,
             std::shared_ptr<const FeatureProvider> features, bool explore = false, std::uint64_t seed = 0)
      : actor_(std::move(actor)), bounds_(std::move(bounds)), features_(std::move(features)), explore_(explore),
        seed_(seed) {
    if (!features_) features_ = std::make_shared<ZeroFeatures>();
    if (actor_->input_dim() != kSimStateDim + features_->dim())
      throw std::invalid_argument("SacPlanner: actor input " + std::to_string(actor_->input_dim()) +
                                  " does not match observation size " +
                                  std::to_string(kSimStateDim + features_->dim()));
  }

  void reset(const Scenario& s) override {
    scenario_id_ = s.scenario_id;
    map_samples_ = sample_map(s.lane_graph);
    rng_ = Rng(mix_seed(seed_, s.scenario_id));
  }

  PlannerOutput observe(const SimulatorView& view) override {
    const auto obs = fuse_observation(build_sim_state(view, map_samples_),
                                      features_->feature(scenario_id_, view.step), features_->dim());
    const auto a = explore_ ? actor_sample(*actor_, obs, bounds_, rng_).action
                            : actor_mean_action(*actor_, obs, bounds_);
    return PlannerOutput::from_action({a[0], a[1]});
  }

 private:
  std::shared_ptr<const Mlp> actor_;
  std::vector<double> bounds_;
  std::shared_ptr<const FeatureProvider> features_;
  bool explore_;
  std::uint64_t seed_;
  std::string scenario_id_;
  std::vector<Vec2> map_samples_;
  Rng rng_;
};

}  // namespace loopsim
