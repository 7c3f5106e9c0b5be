#pragma once

// Fixed-size observation vector for learned policies.
//
// Layout (118 values), all in the ego frame:
//   [0, 4)     speed/10, last accel/6, last steer/0.5, signed edge distance/5 (clipped to +-2)
//   [4, 6)     goal position / 50
//   [6, 70)    32 nearest map sample points (x, y) / 50, nearest first, zero padded
//   [70, 118)  8 nearest agents x (x/50, y/50, vx/10, vy/10, heading/pi, length/5),
//              nearest first; an empty slot is all zeros (length 0)
//
// An optional external feature block is appended after these by fuse_observation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopsim/metrics.hpp"
#include "loopsim/view.hpp"

namespace loopsim {

inline constexpr std::size_t kMapPoints = 32;
inline constexpr std::size_t kAgentSlots = 8;
inline constexpr std::size_t kAgentFeatures = 6;
inline constexpr std::size_t kSimStateDim = 4 + 2 + 2 * kMapPoints + kAgentSlots * kAgentFeatures;

// Map polylines resampled every `spacing` metres.
inline std::vector<Vec2> sample_map(const LaneGraph& g, double spacing = 2.0) {
  std::vector<Vec2> out;
  auto add = [&](const Polyline& line) {
    const double len = polyline_length(line);
    for (double s = 0.0; s <= len; s += spacing) out.push_back(point_at_arc(line, s));
  };
  for (const auto& l : g.lanes) add(l.centerline);
  for (const auto& e : g.road_edges) add(e);
  for (const auto& e : g.solid_lines) add(e);
  return out;
}

inline std::vector<double> build_sim_state(const SimulatorView& view, std::span<const Vec2> map_samples) {
  std::vector<double> obs(kSimStateDim, 0.0);
  const Pose ego = view.ego.pose();
  obs[0] = view.ego.v / 10.0;
  obs[1] = view.last_action.accel / 6.0;
  obs[2] = view.last_action.steer / 0.5;
  const double edge = view.lane_graph().road_edges.empty()
                          ? 0.0
                          : signed_edge_distance(view.ego.position(), view.lane_graph().road_edges);
  obs[3] = std::clamp(edge / 5.0, -2.0, 2.0);
  const Vec2 g = to_local(ego, view.goal);
  obs[4] = g.x / 50.0;
  obs[5] = g.y / 50.0;

  std::vector<std::pair<double, std::size_t>> near;
  near.reserve(map_samples.size());
  for (std::size_t i = 0; i < map_samples.size(); ++i) {
    const Vec2 d = map_samples[i] - ego.position();
    near.emplace_back(dot(d, d), i);
  }
  const std::size_t k = std::min(kMapPoints, near.size());
  std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(k), near.end());
  for (std::size_t i = 0; i < k; ++i) {
    const Vec2 p = to_local(ego, map_samples[near[i].second]);
    obs[6 + 2 * i] = p.x / 50.0;
    obs[6 + 2 * i + 1] = p.y / 50.0;
  }

  std::vector<std::pair<double, std::size_t>> agents;
  for (std::size_t i = 0; i < view.others.size(); ++i)
    agents.emplace_back(distance(view.others[i].state.position(), ego.position()), i);
  std::stable_sort(agents.begin(), agents.end());
  const std::size_t base = 6 + 2 * kMapPoints;
  const Vec2 ego_vel{view.ego.v * std::cos(ego.heading), view.ego.v * std::sin(ego.heading)};
  for (std::size_t i = 0; i < std::min(kAgentSlots, agents.size()); ++i) {
    const auto& a = view.others[agents[i].second].state;
    const Vec2 p = to_local(ego, a.position());
    const Vec2 v = rotate(Vec2{a.vx, a.vy} - ego_vel, -ego.heading);
    double* slot = &obs[base + i * kAgentFeatures];
    slot[0] = p.x / 50.0;
    slot[1] = p.y / 50.0;
    slot[2] = v.x / 10.0;
    slot[3] = v.y / 10.0;
    slot[4] = angle_diff(a.heading, ego.heading) / kPi;
    slot[5] = a.length / 5.0;
  }
  return obs;
}

// Simulator state block first, external feature block second.
inline std::vector<double> fuse_observation(std::span<const double> sim_state, std::span<const double> feature,
                                            std::size_t expected_feature_dim) {
  if (feature.size() != expected_feature_dim)
    throw std::invalid_argument("fuse_observation: feature has " + std::to_string(feature.size()) +
                                " values, expected " + std::to_string(expected_feature_dim));
  std::vector<double> out(sim_state.begin(), sim_state.end());
  out.insert(out.end(), feature.begin(), feature.end());
  return out;
}

// Source of the per-step imitation feature block.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> feature(const std::string& scenario_id, int step) const = 0;
};

class ZeroFeatures : public FeatureProvider {
 public:
  explicit ZeroFeatures(std::size_t dim = 0) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  std::vector<double> feature(const std::string&, int) const override { return std::vector<double>(dim_, 0.0); }

 private:
  std::size_t dim_;
};

// Recorded features: one `<scenario_id>.feat` file per scenario,
//   first line `dim <n>`, then one line per step: `<step> <v_0> ... <v_{n-1}>`.
// Steps without a line get zeros; unknown scenarios get zeros.
class RecordedFeatures : public FeatureProvider {
 public:
  explicit RecordedFeatures(std::size_t dim) : dim_(dim) {}

  static RecordedFeatures load_dir(const std::filesystem::path& dir) {
    std::optional<RecordedFeatures> out;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".feat") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::string word;
      std::size_t dim = 0;
      if (!(in >> word >> dim) || word != "dim") throw std::runtime_error(f.string() + ": expected 'dim <n>'");
      if (!out) out.emplace(dim);
      if (dim != out->dim_) throw std::runtime_error(f.string() + ": feature dimension mismatch");
      auto& steps = out->data_[f.stem().string()];
      int step = 0;
      while (in >> step) {
        std::vector<double> v(dim);
        for (auto& x : v)
          if (!(in >> x)) throw std::runtime_error(f.string() + ": truncated feature row");
        steps[step] = std::move(v);
      }
    }
    if (!out) throw std::runtime_error(dir.string() + ": no .feat files");
    return *out;
  }

  void set(const std::string& scenario_id, int step, std::vector<double> v) {
    if (v.size() != dim_) throw std::invalid_argument("RecordedFeatures::set: dimension mismatch");
    data_[scenario_id][step] = std::move(v);
  }

  std::size_t dim() const override { return dim_; }
  std::vector<double> feature(const std::string& scenario_id, int step) const override {
    const auto s = data_.find(scenario_id);
    if (s != data_.end()) {
      const auto it = s->second.find(step);
      if (it != s->second.end()) return it->second;
    }
    return std::vector<double>(dim_, 0.0);
  }

 private:
  std::size_t dim_;
  std::map<std::string, std::map<int, std::vector<double>>> data_;
};

}  // namespace loopsim
