#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "loopsim/sac.hpp"
#include "loopsim/toy_env.hpp"

using namespace loopsim;

namespace {

Experience random_experience(Rng& rng, std::size_t obs_dim, std::span<const double> bounds) {
  Experience e;
  for (std::size_t i = 0; i < obs_dim; ++i) {
    e.obs.push_back(rng.uniform(-1, 1));
    e.next_obs.push_back(rng.uniform(-1, 1));
  }
  for (double b : bounds) e.action.push_back(rng.uniform(-b, b));
  e.reward = rng.uniform(-2, 2);
  e.done = rng.below(4) == 0;
  return e;
}

// Central differences on a sample of coordinates.
template <typename F>
void check_gradient(Mlp& net, const std::vector<double>& grad, F&& loss, Rng& rng, int samples = 60) {
  ASSERT_EQ(grad.size(), net.num_params());
  for (int k = 0; k < samples; ++k) {
    const std::size_t j = static_cast<std::size_t>(rng.below(net.num_params()));
    const double keep = net.params()[j];
    const double h = 1e-5;
    net.params()[j] = keep + h;
    const double up = loss();
    net.params()[j] = keep - h;
    const double dn = loss();
    net.params()[j] = keep;
    const double fd = (up - dn) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad[j]), 1e-3});
    ASSERT_LT(std::abs(fd - grad[j]) / scale, 1e-4) << "param " << j << " analytic " << grad[j] << " fd " << fd;
  }
}

struct Fixture {
  std::vector<double> bounds{6.0, 0.5};
  std::size_t obs_dim = 10;
  Rng rng{123};
  SacNets nets;
  std::vector<Experience> batch;
  std::vector<std::vector<double>> noise;

  Fixture() {
    nets = SacNets::make(obs_dim, 2, 16, 6, rng);
    for (int i = 0; i < 8; ++i) {
      batch.push_back(random_experience(rng, obs_dim, bounds));
      noise.push_back({rng.normal(), rng.normal()});
    }
  }
};

}  // namespace

TEST(Gradients, QLoss) {
  Fixture f;
  const auto y = q_targets(f.nets.v_target, f.batch, 0.99);
  for (Mlp* q : {&f.nets.q1, &f.nets.q2}) {
    std::vector<double> g;
    q_loss(*q, f.batch, y, f.bounds, &g);
    check_gradient(*q, g, [&] { return q_loss(*q, f.batch, y, f.bounds); }, f.rng);
  }
}

TEST(Gradients, VLoss) {
  Fixture f;
  const auto y = v_targets(f.nets.actor, f.nets.q1, f.nets.q2, f.batch, f.noise, 0.2, f.bounds);
  std::vector<double> g;
  v_loss(f.nets.v, f.batch, y, &g);
  check_gradient(f.nets.v, g, [&] { return v_loss(f.nets.v, f.batch, y); }, f.rng);
}

TEST(Gradients, ActorLoss) {
  Fixture f;
  std::vector<std::vector<double>> obs;
  for (const auto& e : f.batch) obs.push_back(e.obs);
  // Larger output weights so the squashing and log-std paths are exercised.
  Rng r(7);
  f.nets.actor.init(r, 2.0);
  const auto critic = twin_q_critic(f.nets.q1, f.nets.q2, f.bounds);
  std::vector<double> g;
  actor_loss(f.nets.actor, obs, f.noise, 0.2, f.bounds, critic, &g);
  check_gradient(f.nets.actor, g, [&] { return actor_loss(f.nets.actor, obs, f.noise, 0.2, f.bounds, critic); },
                 f.rng, 120);
}

TEST(Gradients, MlpInputGradient) {
  Rng rng(2);
  auto net = Mlp::make(5, 7, 3, 2);
  net.init(rng);
  std::vector<double> x{0.1, -0.4, 0.3, 0.9, -0.2};
  Mlp::Tape tape;
  net.forward(x, &tape);
  std::vector<double> scratch(net.num_params());
  const std::vector<double> w{0.7, -1.3};
  const auto gx = net.backward(tape, w, scratch);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = x, dn = x;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    const auto a = net.forward(up), b = net.forward(dn);
    const double fd = (w[0] * (a[0] - b[0]) + w[1] * (a[1] - b[1])) / 2e-6;
    EXPECT_NEAR(gx[i], fd, 1e-7);
  }
}

TEST(SoftUpdate, TauOneCopiesTauZeroKeeps) {
  Rng rng(1);
  auto a = Mlp::make(3, 4, 2, 1), b = Mlp::make(3, 4, 2, 1);
  a.init(rng);
  b.init(rng);
  const auto before = a.params();
  soft_update(a, b, 0.0);
  EXPECT_EQ(a.params(), before);
  soft_update(a, b, 1.0);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_THROW(soft_update(a, b, 1.5), std::invalid_argument);
  EXPECT_THROW(soft_update(a, Mlp::make(3, 5, 2, 1), 0.5), std::invalid_argument);
}

TEST(SoftUpdate, GeometricApproach) {
  Mlp target({1, 1}), source({1, 1});
  std::fill(source.params().begin(), source.params().end(), 1.0);
  for (int i = 0; i < 1000; ++i) soft_update(target, source, 0.005);
  const double want = 1.0 - std::pow(0.995, 1000);
  for (double p : target.params()) EXPECT_NEAR(p, want, 1e-12);
}

TEST(Adam, ThreeStepTrace) {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt(2, cfg);
  std::vector<double> p{1.0, -2.0};
  const std::vector<std::vector<double>> grads{{0.5, -1.0}, {0.25, 2.0}, {-0.1, 0.0}};
  const double want[3][2] = {{0.900000002, -1.900000001},
                             {0.8067820404774624, -1.9366103534720749},
                             {0.7471109386505732, -1.9649102620009304}};
  for (int t = 0; t < 3; ++t) {
    opt.step(p, grads[static_cast<std::size_t>(t)]);
    EXPECT_NEAR(p[0], want[t][0], 1e-14);
    EXPECT_NEAR(p[1], want[t][1], 1e-14);
  }
}

TEST(Replay, UniformSampling) {
  ReplayBuffer<int> buf(100, 9);
  for (int i = 0; i < 100; ++i) buf.push(i);
  std::vector<int> counts(100, 0);
  const auto idx = buf.sample_indices(100000);
  for (auto i : idx) ++counts[i];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  // 99 degrees of freedom, p = 0.01.
  EXPECT_LT(chi2, 134.642);
}

TEST(Replay, RingOverwritesOldest) {
  ReplayBuffer<int> buf(3);
  for (int i = 0; i < 5; ++i) buf.push(i);
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.pushed(), 5u);
  EXPECT_EQ(buf[0], 3);
  EXPECT_EQ(buf[1], 4);
  EXPECT_EQ(buf[2], 2);
  ReplayBuffer<int> empty(3);
  EXPECT_THROW(empty.sample(1), std::logic_error);
  EXPECT_THROW(ReplayBuffer<int>(0), std::invalid_argument);
}

TEST(Replay, TimeoutsStillBootstrap) {
  Transition t;
  t.action = {1.0, 0.1};
  t.done = true;
  t.terminal = TerminalClass::kStuck;
  EXPECT_FALSE(to_experience(t).done);
  t.terminal = TerminalClass::kCollided;
  EXPECT_TRUE(to_experience(t).done);
  t.done = false;
  t.terminal.reset();
  EXPECT_FALSE(to_experience(t).done);
  EXPECT_EQ(to_experience(t).action, (std::vector<double>{1.0, 0.1}));
}

TEST(Actor, MirroredNoiseMirrorsTheAction) {
  Mlp actor({3, 4});  // all-zero weights: zero mean
  const std::vector<double> bounds{6.0, 0.5}, obs{0.3, -0.2, 0.5};
  const std::vector<double> e{0.7, -1.2}, me{-0.7, 1.2};
  const auto a = actor_eval(actor, obs, e, bounds), b = actor_eval(actor, obs, me, bounds);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(a.action[i], -b.action[i]);
    EXPECT_LE(std::abs(a.action[i]), bounds[i]);
  }
  EXPECT_NEAR(a.log_prob, b.log_prob, 1e-12);
  EXPECT_EQ(actor_mean_action(actor, obs, bounds), (std::vector<double>{0.0, 0.0}));
}

TEST(Actor, LogStdStaysInRange) {
  EXPECT_NEAR(sac_detail::squash_log_std(-100), kLogStdMin, 1e-12);
  EXPECT_NEAR(sac_detail::squash_log_std(100), kLogStdMax, 1e-12);
  EXPECT_NEAR(sac_detail::squash_log_std(0), -1.5, 1e-12);
  for (double u : {-3.0, 0.0, 0.5, 4.0})
    EXPECT_NEAR(sac_detail::log_sech2(u), std::log(1 - std::tanh(u) * std::tanh(u)), 1e-9);
  // Far tails: log(4) - 2|u|.
  for (double u : {-30.0, 30.0}) EXPECT_NEAR(sac_detail::log_sech2(u), std::log(4.0) - 60.0, 1e-9);
}

// The log-density of the squashed sample integrates to the empirical histogram.
TEST(Actor, LogProbMatchesHistogram) {
  Mlp actor({1, 2});
  actor.params() = {0.0, 0.0, 0.3, 0.2};  // weights, then biases: mean 0.3, raw log-std 0.2
  const std::vector<double> bounds{2.0}, obs{0.0};
  Rng rng(31);
  constexpr int kBins = 40, kDraws = 4'000'000;
  std::vector<double> hist(kBins, 0.0);
  for (int i = 0; i < kDraws; ++i) {
    const double a = actor_sample(actor, obs, bounds, rng).action[0];
    const int b = std::clamp(static_cast<int>((a + 2.0) / 4.0 * kBins), 0, kBins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0 / kDraws;
  }
  const double mu = 0.3, sigma = std::exp(sac_detail::squash_log_std(0.2));
  int checked = 0;
  for (int b = 0; b < kBins; ++b) {
    double p = 0.0;
    const int sub = 400;
    const double lo = -2.0 + 4.0 * b / kBins, w = 4.0 / kBins / sub;
    for (int k = 0; k < sub; ++k) {
      const double a = lo + (k + 0.5) * w;
      const double u = std::atanh(a / 2.0);
      const std::vector<double> eps{(u - mu) / sigma};
      p += std::exp(actor_eval(actor, obs, eps, bounds).log_prob) * w;
    }
    if (p < 0.02) continue;
    EXPECT_NEAR(hist[static_cast<std::size_t>(b)], p, 0.02 * p) << "bin " << b;
    ++checked;
  }
  EXPECT_GE(checked, 10);
}

TEST(Sac, GammaZeroTargetsAreRewards) {
  Fixture f;
  const auto y = q_targets(f.nets.v_target, f.batch, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], f.batch[i].reward);
  const auto yd = q_targets(f.nets.v_target, f.batch, 0.99);
  for (std::size_t i = 0; i < y.size(); ++i)
    if (f.batch[i].done) EXPECT_EQ(yd[i], f.batch[i].reward);
    else EXPECT_NE(yd[i], f.batch[i].reward);
}

TEST(Sac, NonFiniteLossNamesTheBatchIndex) {
  Fixture f;
  auto y = q_targets(f.nets.v_target, f.batch, 0.99);
  y[3] = std::nan("");
  try {
    q_loss(f.nets.q1, f.batch, y, f.bounds);
    FAIL();
  } catch (const SacError& e) {
    EXPECT_EQ(e.batch_index(), 3u);
  }
  SacConfig cfg;
  cfg.hidden = 8;
  cfg.layers = 2;
  SacAgent agent(f.obs_dim, f.bounds, cfg);
  auto batch = f.batch;
  batch[5].reward = std::numeric_limits<double>::infinity();
  try {
    agent.update(std::span<const Experience>(batch));
    FAIL();
  } catch (const SacError& e) {
    EXPECT_EQ(e.batch_index(), 5u);
  }
}

TEST(Sac, UpdatesAreDeterministic) {
  Fixture f;
  SacConfig cfg;
  cfg.hidden = 16;
  cfg.layers = 3;
  cfg.seed = 5;
  SacAgent a(f.obs_dim, f.bounds, cfg), b(f.obs_dim, f.bounds, cfg);
  for (int i = 0; i < 5; ++i) {
    a.update(std::span<const Experience>(f.batch));
    b.update(std::span<const Experience>(f.batch));
  }
  EXPECT_EQ(a.nets().actor.params(), b.nets().actor.params());
  EXPECT_EQ(a.nets().v_target.params(), b.nets().v_target.params());
  EXPECT_EQ(a.updates(), 5);
  EXPECT_NE(a.nets().v.params(), a.nets().v_target.params());
}

// One-step bandit with reward -a^2: a larger temperature keeps a wider policy.
TEST(Sac, EntropyGrowsWithTemperature) {
  std::vector<double> entropy;
  for (double alpha : {0.01, 0.3, 3.0}) {
    SacConfig cfg;
    cfg.hidden = 16;
    cfg.layers = 2;
    cfg.alpha = alpha;
    cfg.gamma = 0.0;
    cfg.lr = 3e-3;
    cfg.seed = 1;
    const std::vector<double> bounds{1.0};
    SacAgent agent(1, bounds, cfg);
    Rng rng(4);
    std::vector<Experience> data;
    for (int i = 0; i < 512; ++i) {
      const double a = rng.uniform(-1, 1);
      data.push_back({{0.0}, {a}, -10 * a * a, {0.0}, true});
    }
    for (int it = 0; it < 1500; ++it) {
      std::vector<Experience> batch;
      for (int k = 0; k < 64; ++k) batch.push_back(data[rng.below(data.size())]);
      agent.update(std::span<const Experience>(batch));
    }
    double h = 0.0;
    Rng s(8);
    const std::vector<double> obs{0.0};
    for (int k = 0; k < 4000; ++k) h -= actor_sample(agent.nets().actor, obs, bounds, s).log_prob / 4000;
    entropy.push_back(h);
  }
  EXPECT_LT(entropy[0], entropy[1]);
  EXPECT_LT(entropy[1], entropy[2]);
}

TEST(Checkpoint, RoundTrip) {
  SacConfig cfg;
  cfg.hidden = 12;
  cfg.layers = 3;
  SacAgent agent(kSimStateDim, driving_action_bounds(), cfg);
  const auto path = std::filesystem::temp_directory_path() / "loopsim_ckpt_test.bin";
  save_checkpoint(agent.nets(), agent.bounds(), path);
  const auto c = load_checkpoint(path);
  EXPECT_EQ(c.bounds, agent.bounds());
  EXPECT_EQ(c.nets.q1.params(), agent.nets().q1.params());
  EXPECT_EQ(c.nets.q2.params(), agent.nets().q2.params());
  EXPECT_EQ(c.nets.v.params(), agent.nets().v.params());
  EXPECT_EQ(c.nets.v_target.params(), agent.nets().v_target.params());
  EXPECT_EQ(c.nets.actor.params(), agent.nets().actor.params());
  EXPECT_EQ(c.nets.actor.sizes(), agent.nets().actor.sizes());

  // Truncated and foreign files are rejected.
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "hello\n";
  }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Observation, FusedDimensions) {
  const std::vector<double> sim(kSimStateDim, 0.5);
  EXPECT_EQ(kSimStateDim, 118u);
  EXPECT_EQ(fuse_observation(sim, {}, 0).size(), 118u);
  const std::vector<double> feat(256, 1.0);
  const auto fused = fuse_observation(sim, feat, 256);
  EXPECT_EQ(fused.size(), 374u);
  EXPECT_EQ(fused[117], 0.5);
  EXPECT_EQ(fused[118], 1.0);
  EXPECT_THROW(fuse_observation(sim, feat, 128), std::invalid_argument);
}

TEST(Observation, RecordedFeaturesFallBackToZeros) {
  RecordedFeatures f(3);
  f.set("a", 2, {1, 2, 3});
  EXPECT_EQ(f.feature("a", 2), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(f.feature("a", 1), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(f.feature("b", 2), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(f.set("a", 0, {1}), std::invalid_argument);
}

TEST(SacPlanner, RejectsMismatchedActor) {
  auto actor = std::make_shared<const Mlp>(Mlp::make(10, 4, 1, 4));
  EXPECT_THROW(SacPlanner(actor, driving_action_bounds(), nullptr), std::invalid_argument);
}

TEST(Toy, LearnsToReachTheGoal) {
  SacConfig cfg;
  cfg.hidden = 32;
  cfg.layers = 6;
  cfg.batch_size = 64;
  cfg.lr = 1e-4;
  cfg.seed = 1;
  SacAgent agent(4, {1.0, 1.0}, cfg);
  ToyTrainConfig tc;
  tc.seed = 1;
  train_point_goal(agent, tc);
  EXPECT_GE(evaluate_point_goal(agent, 100, 77), 0.9);
}
