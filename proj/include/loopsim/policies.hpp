#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "loopsim/causality.hpp"
#include "loopsim/geometry.hpp"
#include "loopsim/rng.hpp"
#include "loopsim/scenario.hpp"
#include "loopsim/view.hpp"

namespace loopsim {

inline constexpr double kFreeRoad = std::numeric_limits<double>::infinity();

struct IdmParams {
  double desired_speed = 15.0;
  double time_headway = 1.5;
  double min_gap = 2.0;
  double max_accel = 1.5;
  double comfortable_decel = 1.67;
  double exponent = 4.0;
  double hard_decel = 9.0;
};

// Intelligent Driver Model. `gap` is bumper-to-bumper distance (kFreeRoad without a leader),
// `dv` the approach rate v - v_leader.
inline double idm_accel(double v, double gap, double dv, const IdmParams& p) {
  const double free = 1.0 - std::pow(std::max(v, 0.0) / p.desired_speed, p.exponent);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double s_star =
        p.min_gap + std::max(0.0, v * p.time_headway + v * dv / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel)));
    const double g = std::max(gap, 1e-3);
    interaction = (s_star / g) * (s_star / g);
  }
  return std::clamp(p.max_accel * (free - interaction), -p.hard_decel, p.max_accel);
}

// Logged future of one agent from frame t: frames t+1 .. t+lookahead. Past the end of the log
// or the last valid frame the final pose is repeated.
inline PlannerOutput expert_policy(const Scenario& s, std::size_t agent, int t, int lookahead = 10) {
  const Track& track = s.tracks.at(agent);
  const int last = kTrackFrames - 1;
  if (t < last && !track.states[static_cast<std::size_t>(t + 1)].valid)
    throw AgentRemoved("agent " + std::to_string(track.agent_id) + " invalid at frame " + std::to_string(t + 1));
  std::vector<Pose> w;
  Pose hold = track.states[static_cast<std::size_t>(std::clamp(t, 0, last))].pose();
  bool ended = false;
  for (int k = 1; k <= lookahead; ++k) {
    const int f = t + k;
    if (!ended && f <= last && track.states[static_cast<std::size_t>(f)].valid) {
      hold = track.states[static_cast<std::size_t>(f)].pose();
    } else {
      ended = true;
    }
    w.push_back(hold);
  }
  return PlannerOutput::from_waypoints(std::move(w));
}

class ExpertPlanner : public Planner {
 public:
  PlannerOutput observe(const SimulatorView& view) override {
    return expert_policy(*view.scenario, view.scenario->sdc_index, kCurrentFrame + view.step, horizon_);
  }
  void set_horizon(int h) { horizon_ = h; }

 private:
  int horizon_ = 10;
};

namespace policy_detail {

inline double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace policy_detail

// Driveable reference along a lane route, resampled at 1 m. Lane changes are blended over
// `blend` metres and the route is extended straight past its end.
struct RouteReference {
  Polyline points;
  std::vector<double> speed_limits;  // per point

  static RouteReference build(const LaneGraph& g, const LanePath& route, double blend = 20.0,
                              double extension = 150.0) {
    const PathPolyline path = path_polyline(g, route);
    RouteReference ref;
    if (path.points.empty()) return ref;

    struct Jump {
      double s;
      Vec2 offset;
    };
    std::vector<Jump> jumps;
    std::vector<std::pair<double, double>> limits;  // (start arc, limit)
    double base = 0.0;
    for (std::size_t i = 0; i < route.pieces.size(); ++i) {
      const auto& piece = route.pieces[i];
      limits.emplace_back(base, g.at(piece.lane).speed_limit);
      if (i > 0 && route.actions[i - 1] == LaneAction::kLaneChange) {
        const auto& prev = route.pieces[i - 1];
        const Vec2 a_end = point_at_arc(g.at(prev.lane).centerline, prev.to);
        const Vec2 b_start = point_at_arc(g.at(piece.lane).centerline, piece.from);
        jumps.push_back({base, b_start - a_end});
      }
      base += piece.to - piece.from;
    }
    const double total = path.arc.back();
    for (double s = 0.0;; s += 1.0) {
      const bool last = s >= total;
      const double si = std::min(s, total);
      Vec2 p = point_on_path(path, si);
      for (const auto& j : jumps) {
        const double beta = policy_detail::smoothstep((si - (j.s - blend / 2)) / blend);
        if (si < j.s) {
          p = p + j.offset * beta;
        } else {
          p = p - j.offset * (1.0 - beta);
        }
      }
      if (ref.points.empty() || distance(ref.points.back(), p) > 1e-6) {
        ref.points.push_back(p);
        double lim = limits.front().second;
        for (const auto& [start, l] : limits)
          if (si >= start) lim = l;
        ref.speed_limits.push_back(lim);
      }
      if (last) break;
    }
    if (ref.points.size() >= 2) {
      const Vec2 d = ref.points.back() - ref.points[ref.points.size() - 2];
      const Vec2 u = d * (1.0 / norm(d));
      const Vec2 end = ref.points.back();
      for (double e = 1.0; e <= extension; e += 1.0) {
        ref.points.push_back(end + u * e);
        ref.speed_limits.push_back(ref.speed_limits.back());
      }
    }
    return ref;
  }
};

struct LaneFollowConfig {
  int horizon = 10;
  double dt = 0.1;
  IdmParams idm;
  double lateral_convergence_steps = 10.0;
  double leader_lateral = 2.0;
  // Std-dev in metres of per-waypoint noise, emulating a learned planner's unstable
  // near-term prediction. Zero disables it.
  double jitter = 0.0;
  std::uint64_t seed = 0;
  double route_max_cost = 20.0;
};

// Scripted stand-in for a learned planner: routes over the lane graph to the goal and emits
// waypoints along the route centreline, IDM-limited behind leaders.
class LaneFollowPlanner : public Planner {
 public:
  explicit LaneFollowPlanner(LaneFollowConfig cfg = {}) : cfg_(cfg) {}

  void reset(const Scenario& s) override {
    scenario_id_ = s.scenario_id;
    ref_.reset();
    const auto& cur = s.sdc().current();
    try {
      const auto pos = locate_on_lane(s.lane_graph, cur.position(), cur.heading);
      auto route = route_to_goal(s.lane_graph, pos.lane, pos.offset, s.goal, ActionCostTable{}, cfg_.route_max_cost);
      if (route) ref_ = RouteReference::build(s.lane_graph, *route);
    } catch (const CausalityError&) {
    }
  }

  PlannerOutput observe(const SimulatorView& view) override {
    if (!ref_ || ref_->points.size() < 2) throw Unroutable("no lane route to goal in " + scenario_id_);
    const auto& pts = ref_->points;
    const auto proj = project_onto_polyline(pts, view.ego.position());
    const auto cum = cumulative_arc_length(pts);

    auto limit_at = [&](double s) {
      const auto it = std::upper_bound(cum.begin(), cum.end(), s);
      const std::size_t i = it == cum.begin() ? 0 : static_cast<std::size_t>(it - cum.begin() - 1);
      return ref_->speed_limits[std::min(i, ref_->speed_limits.size() - 1)];
    };

    struct Leader {
      double s;
      double v;
      double half_length;
    };
    std::optional<Leader> leader;
    for (const auto& o : view.others) {
      const auto p = project_onto_polyline(pts, o.state.position());
      if (std::abs(p.lateral) > cfg_.leader_lateral || p.arc <= proj.arc) continue;
      if (p.distance > cfg_.leader_lateral) continue;
      const double along =
          o.state.speed() * std::cos(angle_diff(std::atan2(o.state.vy, o.state.vx), heading_at_arc(pts, p.arc)));
      if (!leader || p.arc < leader->s) leader = Leader{p.arc, std::max(0.0, along), o.state.length / 2};
    }

    Rng rng(mix_seed(cfg_.seed + static_cast<std::uint64_t>(view.step) * 0x9e3779b97f4a7c15ull, scenario_id_));
    std::vector<Pose> w;
    double s = proj.arc, v = view.ego.v;
    const double e0 = proj.lateral;
    Vec2 prev = view.ego.position();
    for (int k = 1; k <= cfg_.horizon; ++k) {
      IdmParams idm = cfg_.idm;
      idm.desired_speed = limit_at(s);
      double gap = kFreeRoad, dv = 0.0;
      if (leader) {
        const double lead_s = leader->s + leader->v * (k - 1) * cfg_.dt;
        gap = lead_s - s - leader->half_length - view.ego_length / 2;
        dv = v - leader->v;
      }
      const double a = idm_accel(v, gap, dv, idm);
      v = std::max(0.0, v + a * cfg_.dt);
      s += v * cfg_.dt;
      const double e = e0 * std::max(0.0, 1.0 - k / cfg_.lateral_convergence_steps);
      const double h = heading_at_arc(pts, s);
      Vec2 p = point_at_arc(pts, s) + Vec2{-std::sin(h), std::cos(h)} * e;
      if (cfg_.jitter > 0.0) p = p + Vec2{rng.normal(), rng.normal()} * cfg_.jitter;
      const Vec2 d = p - prev;
      const double heading = norm(d) > 1e-3 ? std::atan2(d.y, d.x) : h;
      w.push_back({p.x, p.y, wrap_angle(heading)});
      prev = p;
    }
    return PlannerOutput::from_waypoints(std::move(w));
  }

  const std::optional<RouteReference>& reference() const { return ref_; }

 private:
  LaneFollowConfig cfg_;
  std::string scenario_id_;
  std::optional<RouteReference> ref_;
};

// Vehicle NPC that follows its logged path geometry with IDM speed control.
struct IdmAgent {
  Polyline path;
  std::vector<double> arc;
  double s = 0.0;
  double v = 0.0;
  IdmParams params;

  static IdmAgent from_track(const Track& t, const LaneGraph& g, double extension = 200.0) {
    IdmAgent a;
    const auto& cur = t.current();
    for (const auto& st : t.states) {
      if (!st.valid) continue;
      if (a.path.empty() || distance(a.path.back(), st.position()) > 0.05) a.path.push_back(st.position());
    }
    Vec2 dir{std::cos(cur.heading), std::sin(cur.heading)};
    if (a.path.size() < 2) {
      a.path = {cur.position(), cur.position() + dir * extension};
    } else {
      const Vec2 d = a.path.back() - a.path[a.path.size() - 2];
      dir = d * (1.0 / norm(d));
      a.path.push_back(a.path.back() + dir * extension);
    }
    a.arc = cumulative_arc_length(a.path);
    a.s = project_onto_polyline(a.path, cur.position()).arc;
    a.v = cur.speed();
    a.params.desired_speed = 15.0;
    try {
      const auto pos = locate_on_lane(g, cur.position(), cur.heading);
      a.params.desired_speed = g.at(pos.lane).speed_limit;
    } catch (const CausalityError&) {
    }
    return a;
  }

  Pose pose() const {
    const Vec2 p = point_at_arc(path, s);
    return {p.x, p.y, wrap_angle(heading_at_arc(path, s))};
  }

  // Leader: nearest agent ahead within `lateral` metres of the path.
  void step(std::span<const OrientedBox> others, std::span<const double> other_speeds, double own_length,
            double dt = 0.1, double lateral = 2.0) {
    double gap = kFreeRoad, dv = 0.0, best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < others.size(); ++i) {
      const auto p = project_onto_polyline(path, others[i].center);
      if (p.distance > lateral || p.arc <= s) continue;
      if (p.arc < best) {
        best = p.arc;
        gap = p.arc - s - (own_length + others[i].length) / 2;
        const double along = other_speeds[i] * std::cos(angle_diff(others[i].heading, heading_at_arc(path, p.arc)));
        dv = v - along;
      }
    }
    const double a = idm_accel(v, gap, dv, params);
    const double v_next = std::max(0.0, v + a * dt);
    s = std::min(s + 0.5 * (v + v_next) * dt, arc.back());
    v = v_next;
  }
};

}  // namespace loopsim
