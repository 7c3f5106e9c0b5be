#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "loopsim/causality.hpp"
#include "loopsim/harness.hpp"
#include "loopsim/sac.hpp"
#include "loopsim/scenario_io.hpp"
#include "loopsim/synth.hpp"

namespace fs = std::filesystem;
using namespace loopsim;

namespace {

void print_error(const char* cls, const std::string& msg, const json& extra = json::object()) {
  json j{{"error", cls}, {"message", msg}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::cerr << j.dump() << '\n';
}

std::vector<Scenario> load_scenarios(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("scenario directory '" + dir + "' does not exist");
  auto s = load_scenario_dir(dir);
  if (s.empty()) throw ConfigError("no .scn scenarios in '" + dir + "'");
  return s;
}

struct CommonFlags {
  std::string scenario_dir;
  std::string out_dir = "out";
  std::string reward_weights = "1,1,10";
  RunSpec spec;
  bool no_mpc = false;
};

void add_run_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--scenario-dir", f.scenario_dir, "Directory of .scn scenario files")->required();
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
  cmd->add_option("--workers", f.spec.workers, "Parallel rollout workers")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.spec.seed, "Global seed");
  cmd->add_option("--reward-weights", f.reward_weights, "offroad,collision,progress weights");
  cmd->add_option("--il-features", f.spec.il_features, "Directory of recorded .feat files, or none");
  cmd->add_option("--checkpoint", f.spec.checkpoint, "SAC checkpoint for --sdc-policy sac");
  cmd->add_option("--jitter", f.spec.jitter, "lanefollow waypoint noise (m)");
  cmd->add_flag("--open-loop", f.spec.open_loop, "Replay the first waypoint prediction without feedback");
}

int cmd_synth(const std::vector<std::string>& templates, int count, int npcs, std::uint64_t seed,
              const std::string& out_dir) {
  fs::create_directories(out_dir);
  int written = 0;
  for (const auto& t : templates)
    for (int i = 0; i < count; ++i) {
      const auto s = synth_scenario({t, npcs}, seed + static_cast<std::uint64_t>(i));
      save_scenario(s, fs::path(out_dir) / (s.scenario_id + ".scn"));
      ++written;
    }
  write_text(fs::path(out_dir) / "manifest.json",
             manifest("synth", json{{"templates", templates}, {"count", count}, {"npcs", npcs}}, seed).dump(2) + "\n");
  std::cout << "wrote " << written << " scenarios to " << out_dir << '\n';
  return 0;
}

int cmd_simulate(CommonFlags& f, bool write_logs, bool print_table) {
  f.spec.weights = parse_reward_weights(f.reward_weights);
  f.spec.use_mpc = !f.no_mpc;
  const auto scenarios = load_scenarios(f.scenario_dir);
  const auto env = make_env_config(f.spec);
  const auto factory = make_planner_factory(f.spec);
  const auto features = load_features(f.spec.il_features);
  struct NoBuffer {
    void push(Transition&&) {}
  };
  const auto res = batch_simulate<NoBuffer>(scenarios, factory, env, f.spec.workers, nullptr, *features);
  const std::string lines = results_jsonl(res.episodes);
  const fs::path out(f.out_dir);
  write_text(out / "results.jsonl", lines);
  if (write_logs)
    for (const auto& e : res.episodes) write_text(out / "logs" / (e.scenario_id + ".jsonl"), episode_log_jsonl(e));
  const auto table = format_table({{f.spec.label(), report_from_results(lines)}});
  write_text(out / "table.txt", table);
  json cfg = run_spec_json(f.spec);
  cfg["scenario_dir"] = f.scenario_dir;
  write_text(out / "manifest.json", manifest(write_logs ? "simulate" : "evaluate", cfg, f.spec.seed).dump(2) + "\n");
  if (print_table) std::cout << table;
  return 0;
}

// Cartesian product of the listed policies, dynamics and MPC modes; one results file per row.
int cmd_evaluate(CommonFlags& f, const std::vector<std::string>& sdc, const std::vector<std::string>& npc,
                 const std::vector<std::string>& dyn, const std::vector<std::string>& mpc) {
  f.spec.weights = parse_reward_weights(f.reward_weights);
  const auto scenarios = load_scenarios(f.scenario_dir);
  const auto features = load_features(f.spec.il_features);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  json row_configs = json::array();
  const fs::path out(f.out_dir);
  for (const auto& s : sdc)
    for (const auto& n : npc)
      for (const auto& d : dyn)
        for (const auto& m : mpc) {
          RunSpec r = f.spec;
          r.sdc_policy = s;
          r.npc_policy = n;
          r.dynamics = d;
          if (m == "on") r.use_mpc = true;
          else if (m == "off") r.use_mpc = false;
          else throw ConfigError("--mpc takes on|off, got '" + m + "'");
          if (f.no_mpc) r.use_mpc = false;
          struct NoBuffer {
            void push(Transition&&) {}
          };
          const auto res = batch_simulate<NoBuffer>(scenarios, make_planner_factory(r), make_env_config(r),
                                                    r.workers, nullptr, *features);
          const std::string lines = results_jsonl(res.episodes);
          std::string file = r.label();
          for (auto& c : file)
            if (c == '/') c = '_';
          write_text(out / "results" / (file + ".jsonl"), lines);
          rows.emplace_back(r.label(), report_from_results(lines));
          row_configs.push_back(run_spec_json(r));
        }
  const auto table = format_table(rows);
  write_text(out / "table.txt", table);
  write_text(out / "manifest.json",
             manifest("evaluate", json{{"scenario_dir", f.scenario_dir}, {"rows", row_configs}}, f.spec.seed).dump(2) +
                 "\n");
  std::cout << table;
  return 0;
}

int cmd_gen_benchmark(const std::string& scenario_dir, const std::string& out_dir) {
  const auto scenarios = load_scenarios(scenario_dir);
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::string goals;
  std::size_t written = 0;
  for (const auto& s : scenarios) {
    const auto set = generate_goal_set(s);
    for (std::size_t i = 0; i < set.goals.size(); ++i) {
      const auto& g = set.goals[i];
      json actions = json::array();
      for (auto a : g.actions) actions.push_back(to_string(a));
      goals += json{{"scenario_id", s.scenario_id},
                    {"goal_index", i},
                    {"x", g.point.x},
                    {"y", g.point.y},
                    {"cost", g.cost},
                    {"original", g.original},
                    {"lanes", g.lanes},
                    {"actions", actions}}
                   .dump() +
               "\n";
    }
    for (const auto& a : augment_scenario(s)) {
      save_scenario(a, out / (a.scenario_id + ".scn"));
      ++written;
    }
  }
  write_text(out / "goals.jsonl", goals);
  write_text(out / "manifest.json",
             manifest("gen-benchmark", json{{"scenario_dir", scenario_dir}, {"costs", "LC 5, TL 1, TR 1, Go 1, max 10, nms 2.5"}}, 0)
                     .dump(2) +
                 "\n");
  std::cout << "wrote " << written << " goal-conditioned scenarios from " << scenarios.size() << " originals\n";
  return 0;
}

int cmd_train(CommonFlags& f, int epochs, SacConfig sac) {
  f.spec.weights = parse_reward_weights(f.reward_weights);
  f.spec.sdc_policy = "sac";
  const auto scenarios = load_scenarios(f.scenario_dir);
  const auto features = load_features(f.spec.il_features);
  const auto env = make_env_config(f.spec);
  sac.seed = f.spec.seed;
  SacAgent agent(kSimStateDim + features->dim(), driving_action_bounds(env.vehicle), sac);
  const auto reports = train_sac(agent, scenarios, env, f.spec.workers, epochs, features);
  const fs::path out(f.out_dir);
  fs::create_directories(out);
  save_checkpoint(agent.nets(), agent.bounds(), out / "checkpoint.bin");
  std::string log;
  for (const auto& r : reports) {
    json j{{"epoch", r.epoch}, {"rollout", report_json(r.rollout)}, {"buffer_size", r.buffer_size},
           {"updates", r.updates},
           {"losses", {{"q1", r.last_losses.q1}, {"q2", r.last_losses.q2}, {"v", r.last_losses.v},
                       {"actor", r.last_losses.actor}}}};
    log += j.dump() + "\n";
    std::cout << "epoch " << r.epoch << " completion " << r.rollout.completion << " updates " << r.updates << '\n';
  }
  write_text(out / "train_log.jsonl", log);
  json cfg = run_spec_json(f.spec);
  cfg["scenario_dir"] = f.scenario_dir;
  cfg["epochs"] = epochs;
  cfg["sac"] = {{"lr", sac.lr}, {"tau", sac.tau}, {"gamma", sac.gamma}, {"alpha", sac.alpha},
                {"batch_size", sac.batch_size}, {"cadence", sac.cadence}, {"updates_per_round", sac.updates_per_round},
                {"hidden", sac.hidden}, {"layers", sac.layers}};
  write_text(out / "manifest.json", manifest("train-rl", cfg, f.spec.seed).dump(2) + "\n");
  return 0;
}

int cmd_render(const std::string& scenario_file, const std::string& log_file, const std::string& out_dir,
               double scale) {
  const auto s = load_scenario(scenario_file);
  const auto log = parse_episode_log(read_text(log_file));
  const auto frames = render_frames(s, log, scale);
  if (frames.empty()) {
    print_error("Warning", "episode log has no steps; no frames written");
    return 0;
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.svg", i + 1);
    write_text(fs::path(out_dir) / name, frames[i]);
  }
  std::cout << "wrote " << frames.size() << " frames to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loopsim: closed-loop driving scenario simulator"};
  app.set_config("--config", "", "TOML/INI file; any flag can be set there");
  app.require_subcommand(1);

  std::vector<std::string> templates = map_template_names();
  int synth_count = 10, synth_npcs = 3;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "scenarios";
  auto* synth = app.add_subcommand("synth", "Generate synthetic scenarios");
  synth->add_option("--template", templates, "Map templates")->check(CLI::IsMember(map_template_names()));
  synth->add_option("--count", synth_count, "Scenarios per template")->check(CLI::PositiveNumber);
  synth->add_option("--npcs", synth_npcs, "Agents besides the SDC")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "First seed");
  synth->add_option("--out-dir", synth_out, "Output directory");

  CommonFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Run one policy configuration and write episode logs");
  add_run_flags(simulate, sim_flags);
  simulate->add_option("--sdc-policy", sim_flags.spec.sdc_policy, "expert|lanefollow|sac")
      ->check(CLI::IsMember({"expert", "lanefollow", "sac"}));
  simulate->add_option("--npc-policy", sim_flags.spec.npc_policy, "expert|idm")->check(CLI::IsMember({"expert", "idm"}));
  simulate->add_option("--dynamics", sim_flags.spec.dynamics, "default|bicycle")
      ->check(CLI::IsMember({"default", "bicycle"}));
  simulate->add_flag("--no-mpc", sim_flags.no_mpc, "Apply waypoints without the tracking controller");

  CommonFlags eval_flags;
  std::vector<std::string> eval_sdc{"expert"}, eval_npc{"expert"}, eval_dyn{"default"}, eval_mpc{"on"};
  auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation matrix and print the metrics table");
  add_run_flags(evaluate, eval_flags);
  evaluate->add_option("--sdc-policy", eval_sdc, "One or more of expert|lanefollow|sac")
      ->check(CLI::IsMember({"expert", "lanefollow", "sac"}))
      ->delimiter(',');
  evaluate->add_option("--npc-policy", eval_npc, "One or more of expert|idm")
      ->check(CLI::IsMember({"expert", "idm"}))
      ->delimiter(',');
  evaluate->add_option("--dynamics", eval_dyn, "One or more of default|bicycle")
      ->check(CLI::IsMember({"default", "bicycle"}))
      ->delimiter(',');
  evaluate->add_option("--mpc", eval_mpc, "One or more of on|off")->check(CLI::IsMember({"on", "off"}))->delimiter(',');
  evaluate->add_flag("--no-mpc", eval_flags.no_mpc, "Same as --mpc off");

  std::string bench_in, bench_out = "benchmark";
  auto* bench = app.add_subcommand("gen-benchmark", "Build the goal-conditioned benchmark from scenarios");
  bench->add_option("--scenario-dir", bench_in, "Directory of .scn scenario files")->required();
  bench->add_option("--out-dir", bench_out, "Output directory");

  CommonFlags train_flags;
  int epochs = 10;
  SacConfig sac;
  auto* train = app.add_subcommand("train-rl", "Train the SAC policy offline in simulate-then-train rounds");
  add_run_flags(train, train_flags);
  train->add_option("--npc-policy", train_flags.spec.npc_policy, "expert|idm")->check(CLI::IsMember({"expert", "idm"}));
  train->add_option("--epochs", epochs, "Passes over the scenario set")->check(CLI::PositiveNumber);
  train->add_option("--lr", sac.lr, "Learning rate");
  train->add_option("--tau", sac.tau, "Target smoothing");
  train->add_option("--gamma", sac.gamma, "Discount");
  train->add_option("--alpha", sac.alpha, "Entropy coefficient");
  train->add_option("--batch-size", sac.batch_size, "Minibatch size");
  train->add_option("--cadence", sac.cadence, "Scenarios between training rounds");
  train->add_option("--updates-per-round", sac.updates_per_round, "Gradient steps per training round");
  train->add_option("--hidden", sac.hidden, "Hidden width");
  train->add_option("--layers", sac.layers, "Hidden layers");

  std::string render_scn, render_log, render_out = "frames";
  double render_scale = 4.0;
  auto* render = app.add_subcommand("render", "Render an episode log to SVG frames");
  render->add_option("--scenario", render_scn, "Scenario file")->required();
  render->add_option("--log", render_log, "Episode log (.jsonl)")->required();
  render->add_option("--out-dir", render_out, "Output directory");
  render->add_option("--scale", render_scale, "Pixels per metre")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(templates, synth_count, synth_npcs, synth_seed, synth_out);
    if (*simulate) return cmd_simulate(sim_flags, true, true);
    if (*evaluate) return cmd_evaluate(eval_flags, eval_sdc, eval_npc, eval_dyn, eval_mpc);
    if (*bench) return cmd_gen_benchmark(bench_in, bench_out);
    if (*train) return cmd_train(train_flags, epochs, sac);
    if (*render) return cmd_render(render_scn, render_log, render_out, render_scale);
  } catch (const ScenarioError& e) {
    const char* kind = e.kind() == ScenarioError::Kind::kParse        ? "parse"
                       : e.kind() == ScenarioError::Kind::kValidation ? "validation"
                                                                      : "unknown_template";
    print_error("ScenarioError", e.what(), json{{"kind", kind}, {"field", e.field()}});
    return 3;
  } catch (const ConfigError& e) {
    print_error("ConfigError", e.what());
    return 4;
  } catch (const CheckpointError& e) {
    print_error("CheckpointError", e.what());
    return 5;
  } catch (const HarnessError& e) {
    print_error("HarnessError", e.what(), json{{"scenario_id", e.scenario_id()}});
    return 6;
  } catch (const std::invalid_argument& e) {
    print_error("InvalidArgument", e.what());
    return 4;
  } catch (const std::exception& e) {
    print_error("RuntimeError", e.what());
    return 1;
  }
  return 0;
}
