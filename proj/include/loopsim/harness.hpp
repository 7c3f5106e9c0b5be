#pragma once

// Run plumbing shared by the command-line tool: planner construction, result files,
// episode logs, manifests and frame rendering.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopsim/causality.hpp"
#include "loopsim/environment.hpp"
#include "loopsim/policies.hpp"
#include "loopsim/sac.hpp"
#include "loopsim/scenario_io.hpp"

#ifndef LOOPSIM_COMMIT
#define LOOPSIM_COMMIT "unknown"
#endif

namespace loopsim {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index of the candidate whose endpoint is nearest the goal; ties go to the lower index.
inline std::size_t goal_selection_nearest(const std::vector<std::vector<Pose>>& candidates, Vec2 goal) {
  if (candidates.empty()) throw std::invalid_argument("goal_selection_nearest: no candidates");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].empty()) continue;
    const double d = distance(candidates[i].back().position(), goal);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Asks every inner planner each step and follows the prediction ending nearest the goal.
class NearestGoalPlanner : public Planner {
 public:
  explicit NearestGoalPlanner(std::vector<std::unique_ptr<Planner>> inner) : inner_(std::move(inner)) {
    if (inner_.empty()) throw std::invalid_argument("NearestGoalPlanner: no inner planners");
  }
  void reset(const Scenario& s) override {
    for (auto& p : inner_) p->reset(s);
  }
  PlannerOutput observe(const SimulatorView& view) override {
    std::vector<std::vector<Pose>> c;
    for (auto& p : inner_) {
      const auto out = p->observe(view);
      if (out.mode != PlannerMode::kWaypoints) throw std::logic_error("NearestGoalPlanner: inner planner must emit waypoints");
      c.push_back(out.waypoints);
    }
    return PlannerOutput::from_waypoints(c[goal_selection_nearest(c, view.goal)]);
  }

 private:
  std::vector<std::unique_ptr<Planner>> inner_;
};

// One row of an evaluation matrix.
struct RunSpec {
  std::string sdc_policy = "expert";  // expert | lanefollow | sac
  std::string npc_policy = "expert";  // expert | idm
  std::string dynamics = "default";   // default | bicycle
  bool use_mpc = true;
  bool open_loop = false;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  RewardWeights weights;
  double jitter = 0.0;       // lanefollow waypoint noise, metres
  std::string checkpoint;    // sac only
  std::string il_features;   // directory of .feat files, empty for none

  std::string label() const {
    std::string l = sdc_policy + "/" + npc_policy + "/" + dynamics + (use_mpc ? "/mpc" : "/no-mpc");
    if (open_loop) l += "/open-loop";
    return l;
  }
};

inline RewardWeights parse_reward_weights(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("reward weights: '" + item + "' is not a number");
    }
  }
  if (v.size() != 3) throw ConfigError("reward weights: expected offroad,collision,progress");
  return {v[0], v[1], v[2]};
}

inline EnvConfig make_env_config(const RunSpec& r) {
  EnvConfig c;
  if (r.dynamics == "default") c.dynamics = DynamicsModel::kDefault;
  else if (r.dynamics == "bicycle") c.dynamics = DynamicsModel::kBicycle;
  else throw ConfigError("unknown dynamics '" + r.dynamics + "'");
  if (r.npc_policy == "expert") c.npc_policy = NpcPolicy::kExpert;
  else if (r.npc_policy == "idm") c.npc_policy = NpcPolicy::kIdm;
  else throw ConfigError("unknown npc policy '" + r.npc_policy + "'");
  c.use_mpc = r.use_mpc;
  c.open_loop = r.open_loop;
  c.weights = r.weights;
  c.seed = r.seed;
  return c;
}

inline std::shared_ptr<const FeatureProvider> load_features(const std::string& dir) {
  if (dir.empty() || dir == "none") return std::make_shared<ZeroFeatures>();
  return std::make_shared<RecordedFeatures>(RecordedFeatures::load_dir(dir));
}

inline PlannerFactory make_planner_factory(const RunSpec& r) {
  if (r.sdc_policy == "expert") return [](const Scenario&) { return std::make_unique<ExpertPlanner>(); };
  if (r.sdc_policy == "lanefollow") {
    LaneFollowConfig lf;
    lf.jitter = r.jitter;
    lf.seed = r.seed;
    return [lf](const Scenario&) { return std::make_unique<LaneFollowPlanner>(lf); };
  }
  if (r.sdc_policy == "sac") {
    if (r.checkpoint.empty()) throw ConfigError("sac policy needs --checkpoint");
    auto ck = load_checkpoint(r.checkpoint);
    auto actor = std::make_shared<const Mlp>(std::move(ck.nets.actor));
    auto features = load_features(r.il_features);
    auto bounds = ck.bounds;
    const std::uint64_t seed = r.seed;
    // Validate shapes once, up front.
    SacPlanner probe(actor, bounds, features, false, seed);
    return [actor, bounds, features, seed](const Scenario&) {
      return std::make_unique<SacPlanner>(actor, bounds, features, false, seed);
    };
  }
  throw ConfigError("unknown sdc policy '" + r.sdc_policy + "'");
}

// ---- results ----

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// One line per scenario. The aggregate table is always recomputed from these lines.
inline json result_record(const EpisodeResult& e) {
  double total = 0.0, min_gap = std::numeric_limits<double>::infinity();
  double max_edge = -std::numeric_limits<double>::infinity();
  int uncomfortable = 0;
  for (const auto& r : e.log) {
    total += r.reward.total;
    min_gap = std::min(min_gap, r.signals.d_collision);
    max_edge = std::max(max_edge, r.edge_distance);
    uncomfortable += r.uncomfortable ? 1 : 0;
  }
  json j;
  j["scenario_id"] = e.scenario_id;
  j["terminal"] = to_string(e.terminal);
  j["steps"] = e.steps;
  j["completion"] = e.terminal == TerminalClass::kCompleted ? 1 : 0;
  j["collision"] = e.terminal == TerminalClass::kCollided ? 1 : 0;
  j["offroad"] = e.terminal == TerminalClass::kOffroad ? 1 : 0;
  j["stuck"] = e.terminal == TerminalClass::kStuck ? 1 : 0;
  j["total_reward"] = total;
  j["min_collision_gap"] = number_or_null(min_gap);
  j["max_edge_distance"] = number_or_null(max_edge);
  j["uncomfortable_steps"] = uncomfortable;
  j["error"] = e.error;
  return j;
}

inline std::string results_jsonl(const std::vector<EpisodeResult>& episodes) {
  std::string out;
  for (const auto& e : episodes) out += result_record(e).dump() + "\n";
  return out;
}

inline MetricsReport report_from_results(const std::string& jsonl) {
  std::vector<TerminalClass> classes;
  std::stringstream ss(jsonl);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    classes.push_back(terminal_class_from_string(json::parse(line).at("terminal").get<std::string>()));
  }
  return MetricsReport::from(classes);
}

inline std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  std::ostringstream o;
  o << std::left << std::setw(static_cast<int>(w)) << "Policy" << std::right;
  for (const char* h : {"Compl.", "Col.", "Off.", "Stu.", "N"}) o << std::setw(9) << h;
  o << '\n';
  o << std::fixed << std::setprecision(3);
  for (const auto& [label, m] : rows) {
    o << std::left << std::setw(static_cast<int>(w)) << label << std::right;
    o << std::setw(9) << m.completion << std::setw(9) << m.collision << std::setw(9) << m.offroad << std::setw(9)
      << m.stuck << std::setw(9) << m.count << '\n';
  }
  return o.str();
}

inline json report_json(const MetricsReport& m) {
  return json{{"completion", m.completion}, {"collision", m.collision}, {"offroad", m.offroad},
              {"stuck", m.stuck}, {"count", m.count}};
}

inline json run_spec_json(const RunSpec& r) {
  return json{{"sdc_policy", r.sdc_policy},
              {"npc_policy", r.npc_policy},
              {"dynamics", r.dynamics},
              {"mpc", r.use_mpc},
              {"open_loop", r.open_loop},
              {"workers", r.workers},
              {"seed", r.seed},
              {"reward_weights", {r.weights.offroad, r.weights.collision, r.weights.progress}},
              {"jitter", r.jitter},
              {"checkpoint", r.checkpoint},
              {"il_features", r.il_features}};
}

inline json manifest(const std::string& command, const json& config, std::uint64_t seed) {
  return json{{"tool", "loopsim"}, {"command", command}, {"commit", LOOPSIM_COMMIT}, {"seed", seed},
              {"config", config}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- episode logs ----
//
// Line-delimited JSON. The first line describes the episode:
//   {"type":"episode","scenario_id":...,"terminal":...,"steps":...,"error":...}
// then one line per step:
//   {"type":"step","step":k,"ego":{x,y,theta,v},"action":{accel,steer},"reward":...,
//    "signals":{...},"agents":[{id,kind,x,y,heading,length,width},...]}
// Infinite distances are written as null.

inline std::string episode_log_jsonl(const EpisodeResult& e) {
  std::string out;
  json head{{"type", "episode"}, {"scenario_id", e.scenario_id}, {"terminal", to_string(e.terminal)},
            {"steps", e.steps}, {"error", e.error}};
  out += head.dump() + "\n";
  for (std::size_t k = 0; k < e.log.size(); ++k) {
    const auto& r = e.log[k];
    json j;
    j["type"] = "step";
    j["step"] = k + 1;
    j["ego"] = {{"x", r.ego.x}, {"y", r.ego.y}, {"theta", r.ego.theta}, {"v", r.ego.v}};
    j["action"] = {{"accel", r.applied.accel}, {"steer", r.applied.steer}};
    j["reward"] = r.reward.total;
    j["signals"] = {{"d_collision", number_or_null(r.signals.d_collision)},
                    {"d_offroad", number_or_null(r.signals.d_offroad)},
                    {"d_progress", r.signals.d_progress},
                    {"delta_accel", r.signals.delta_accel},
                    {"delta_turning", r.signals.delta_turning},
                    {"is_goal", r.signals.is_goal},
                    {"edge_distance", r.edge_distance}};
    json agents = json::array();
    if (k < e.agents.size())
      for (const auto& a : e.agents[k])
        agents.push_back({{"id", a.agent_id},
                          {"kind", to_string(a.kind)},
                          {"x", a.state.x},
                          {"y", a.state.y},
                          {"heading", a.state.heading},
                          {"length", a.state.length},
                          {"width", a.state.width}});
    j["agents"] = std::move(agents);
    out += j.dump() + "\n";
  }
  return out;
}

struct LoggedAgent {
  int id = 0;
  std::string kind;
  OrientedBox box;
};

struct LoggedStep {
  EgoState ego;
  std::vector<LoggedAgent> agents;
};

struct EpisodeLog {
  std::string scenario_id;
  std::string terminal;
  std::vector<LoggedStep> steps;
};

inline EpisodeLog parse_episode_log(const std::string& jsonl) {
  EpisodeLog log;
  std::stringstream ss(jsonl);
  std::string line;
  bool have_head = false;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const auto type = j.at("type").get<std::string>();
    if (type == "episode") {
      log.scenario_id = j.at("scenario_id").get<std::string>();
      log.terminal = j.at("terminal").get<std::string>();
      have_head = true;
    } else if (type == "step") {
      LoggedStep s;
      const auto& e = j.at("ego");
      s.ego = {e.at("x").get<double>(), e.at("y").get<double>(), e.at("theta").get<double>(), e.at("v").get<double>()};
      for (const auto& a : j.at("agents"))
        s.agents.push_back({a.at("id").get<int>(), a.at("kind").get<std::string>(),
                            OrientedBox{{a.at("x").get<double>(), a.at("y").get<double>()},
                                        a.at("heading").get<double>(), a.at("length").get<double>(),
                                        a.at("width").get<double>()}});
      log.steps.push_back(std::move(s));
    }
  }
  if (!have_head) throw std::runtime_error("episode log: missing episode header line");
  return log;
}

// ---- rendering ----

// World to image: u = (x - min_x) * scale, v = (max_y - y) * scale, where [min_x, max_x] x
// [min_y, max_y] is the bounding box of all map polylines grown by `margin` metres.
struct WorldToImage {
  double min_x = 0.0, max_y = 0.0, scale = 4.0;
  double width = 0.0, height = 0.0;

  static WorldToImage fit(const LaneGraph& g, double scale = 4.0, double margin = 10.0) {
    double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
    double hi_x = -lo_x, hi_y = -lo_x;
    auto grow = [&](const Polyline& l) {
      for (const auto& p : l) {
        lo_x = std::min(lo_x, p.x);
        hi_x = std::max(hi_x, p.x);
        lo_y = std::min(lo_y, p.y);
        hi_y = std::max(hi_y, p.y);
      }
    };
    for (const auto& l : g.lanes) grow(l.centerline);
    for (const auto& e : g.road_edges) grow(e);
    for (const auto& e : g.solid_lines) grow(e);
    WorldToImage t;
    t.min_x = lo_x - margin;
    t.max_y = hi_y + margin;
    t.scale = scale;
    t.width = (hi_x - lo_x + 2 * margin) * scale;
    t.height = (hi_y - lo_y + 2 * margin) * scale;
    return t;
  }

  Vec2 apply(Vec2 p) const { return {(p.x - min_x) * scale, (max_y - p.y) * scale}; }
};

namespace render_detail {

inline std::string fmt(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << v;
  return o.str();
}

inline std::string points(const WorldToImage& t, const std::vector<Vec2>& pts) {
  std::string s;
  for (const auto& p : pts) {
    const Vec2 q = t.apply(p);
    if (!s.empty()) s += ' ';
    s += fmt(q.x) + "," + fmt(q.y);
  }
  return s;
}

inline std::string box(const WorldToImage& t, const OrientedBox& b, const std::string& cls, const std::string& fill) {
  const auto c = b.corners();
  return "<polygon class=\"" + cls + "\" points=\"" + points(t, std::vector<Vec2>(c.begin(), c.end())) +
         "\" fill=\"" + fill + "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
}

}  // namespace render_detail

// One SVG per logged step.
inline std::vector<std::string> render_frames(const Scenario& s, const EpisodeLog& log, double scale = 4.0) {
  using namespace render_detail;
  if (log.scenario_id != s.scenario_id)
    throw std::invalid_argument("render: log is for '" + log.scenario_id + "', scenario is '" + s.scenario_id + "'");
  const auto t = WorldToImage::fit(s.lane_graph, scale);
  std::string map;
  for (const auto& e : s.lane_graph.road_edges)
    map += "<polyline class=\"edge\" points=\"" + points(t, e) + "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  for (const auto& e : s.lane_graph.solid_lines)
    map += "<polyline class=\"solid\" points=\"" + points(t, e) + "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  for (const auto& l : s.lane_graph.lanes)
    map += "<polyline class=\"lane\" points=\"" + points(t, l.centerline) +
           "\" fill=\"none\" stroke=\"#9bc\" stroke-width=\"0.8\" stroke-dasharray=\"4 3\"/>\n";
  const Vec2 g = t.apply(s.goal);
  const std::string goal = "<circle id=\"goal\" cx=\"" + fmt(g.x) + "\" cy=\"" + fmt(g.y) + "\" r=\"" +
                           fmt(std::max(3.0, 1.0 * scale)) + "\" fill=\"red\"/>\n";
  const double ego_len = s.sdc().current().length, ego_wid = s.sdc().current().width;

  std::vector<std::string> frames;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const auto& st = log.steps[k];
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(t.width) + "\" height=\"" +
                      fmt(t.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += map;
    for (const auto& a : st.agents) svg += box(t, a.box, "agent", a.kind == "vehicle" ? "#4a7" : "#a74");
    svg += box(t, OrientedBox{st.ego.position(), st.ego.theta, ego_len, ego_wid}, "sdc", "#26f");
    svg += goal;
    svg += "<text x=\"8\" y=\"18\" font-family=\"monospace\" font-size=\"14\">" + s.scenario_id + " step " +
           std::to_string(k + 1) + "</text>\n";
    svg += "</svg>\n";
    frames.push_back(std::move(svg));
  }
  return frames;
}

// ---- training ----

struct TrainReport {
  int epoch = 0;
  MetricsReport rollout;
  std::size_t buffer_size = 0;
  long updates = 0;
  SacLosses last_losses;
};

// Simulate-then-train: each epoch runs every scenario once with a frozen actor snapshot,
// training after every `cadence` scenarios.
inline std::vector<TrainReport> train_sac(SacAgent& agent, std::span<const Scenario> scenarios, const EnvConfig& env,
                                          std::size_t workers, int epochs,
                                          std::shared_ptr<const FeatureProvider> features) {
  if (scenarios.empty()) throw ConfigError("train: no scenarios");
  ReplayBuffer<Experience> buffer(agent.config().capacity, mix_seed(agent.config().seed, "replay"));
  TransitionSink sink{&buffer};
  TrainingCadence cadence(agent.config().cadence);
  std::vector<TrainReport> out;
  for (int ep = 0; ep < epochs; ++ep) {
    TrainReport rep;
    rep.epoch = ep + 1;
    std::vector<TerminalClass> classes;
    for (std::size_t start = 0; start < scenarios.size(); start += cadence.every()) {
      const auto chunk = scenarios.subspan(start, std::min(cadence.every(), scenarios.size() - start));
      auto actor = std::make_shared<const Mlp>(agent.nets().actor);
      const auto bounds = agent.bounds();
      const std::uint64_t seed = agent.config().seed + static_cast<std::uint64_t>(ep);
      PlannerFactory factory = [actor, bounds, features, seed](const Scenario&) {
        return std::make_unique<SacPlanner>(actor, bounds, features, true, seed);
      };
      const auto res = batch_simulate(chunk, factory, env, workers, &sink, *features);
      for (const auto& e : res.episodes) classes.push_back(e.terminal);
      for (std::size_t n = cadence.record(chunk.size()); n > 0; --n)
        for (std::size_t u = 0; u < agent.config().updates_per_round && buffer.size() >= agent.config().batch_size;
             ++u)
          rep.last_losses = agent.update(buffer);
    }
    rep.rollout = MetricsReport::from(classes);
    rep.buffer_size = buffer.size();
    rep.updates = agent.updates();
    out.push_back(rep);
  }
  return out;
}

}  // namespace loopsim
