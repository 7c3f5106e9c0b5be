#pragma once

// Text scenario format. One record per line, fields as key=value tokens:
//
//   loopsim-scenario v1
//   scenario_id=<id>
//   dt=<seconds>
//   sdc_index=<n>
//   goal=<x>,<y>
//   s2g_dist=<meters>
//   lane id=<n> speed_limit=<m/s> left=<id|-> right=<id|-> exits=<id,id|-> centerline=<x,y;x,y;...>
//   road_edge points=<x,y;...>
//   solid_line points=<x,y;...>
//   track id=<n> kind=<vehicle|pedestrian|cyclist>
//   state frame=<k> x= y= heading= vx= vy= length= width= valid=<0|1>     (91 per track)
//   end
//
// Numbers use the shortest representation that round-trips, so save(load(f)) == f for
// any file produced by save.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "loopsim/scenario.hpp"

namespace loopsim {

namespace io_detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string fmt_points(const Polyline& line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (i) out += ';';
    out += fmt_double(line[i].x);
    out += ',';
    out += fmt_double(line[i].y);
  }
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t lineno) : lineno_(lineno) {
    for (auto tok : split(line, ' ')) {
      if (tok.empty()) continue;
      if (head_.empty()) {
        head_ = tok;
        continue;
      }
      const auto eq = tok.find('=');
      if (eq == std::string_view::npos) fail(std::string(tok), "expected key=value");
      fields_.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
  }

  std::string_view head() const { return head_; }

  std::string_view raw(std::string_view key) const {
    for (const auto& [k, v] : fields_)
      if (k == key) return v;
    fail(std::string(key), "missing field");
  }

  double number(std::string_view key) const { return to_double(raw(key), key); }

  long integer(std::string_view key) const {
    const auto v = raw(key);
    long out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(std::string(key), "not an integer");
    return out;
  }

  std::optional<LaneId> optional_id(std::string_view key) const {
    const auto v = raw(key);
    if (v == "-") return std::nullopt;
    return static_cast<LaneId>(parse_int(v, key));
  }

  std::vector<LaneId> id_list(std::string_view key) const {
    const auto v = raw(key);
    std::vector<LaneId> out;
    if (v == "-") return out;
    for (auto part : split(v, ',')) out.push_back(static_cast<LaneId>(parse_int(part, key)));
    return out;
  }

  Vec2 point(std::string_view text, std::string_view key) const {
    const auto xy = split(text, ',');
    if (xy.size() != 2) fail(std::string(key), "expected x,y");
    return {to_double(xy[0], key), to_double(xy[1], key)};
  }

  Polyline points(std::string_view key) const {
    Polyline out;
    const auto v = raw(key);
    if (v.empty()) return out;
    for (auto p : split(v, ';')) out.push_back(point(p, key));
    return out;
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ScenarioError(ScenarioError::Kind::kParse,
                        "line " + std::to_string(lineno_) + " " + std::string(head_) + "." + field, what);
  }

 private:
  double to_double(std::string_view v, std::string_view key) const {
    double out = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(std::string(key), "not a number");
    return out;
  }
  long parse_int(std::string_view v, std::string_view key) const {
    long out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(std::string(key), "not an integer");
    return out;
  }

  std::size_t lineno_;
  std::string_view head_;
  std::vector<std::pair<std::string_view, std::string_view>> fields_;
};

inline AgentKind parse_kind(std::string_view v, const LineParser& p) {
  if (v == "vehicle") return AgentKind::kVehicle;
  if (v == "pedestrian") return AgentKind::kPedestrian;
  if (v == "cyclist") return AgentKind::kCyclist;
  p.fail("kind", "unknown agent kind");
}

}  // namespace io_detail

inline std::string serialize_scenario(const Scenario& s) {
  using io_detail::fmt_double;
  std::ostringstream out;
  out << "loopsim-scenario v1\n";
  out << "scenario_id=" << s.scenario_id << '\n';
  out << "dt=" << fmt_double(s.dt) << '\n';
  out << "sdc_index=" << s.sdc_index << '\n';
  out << "goal=" << fmt_double(s.goal.x) << ',' << fmt_double(s.goal.y) << '\n';
  out << "s2g_dist=" << fmt_double(s.s2g_dist) << '\n';
  for (const auto& l : s.lane_graph.lanes) {
    out << "lane id=" << l.id << " speed_limit=" << fmt_double(l.speed_limit) << " left=";
    if (l.left_neighbor) out << *l.left_neighbor; else out << '-';
    out << " right=";
    if (l.right_neighbor) out << *l.right_neighbor; else out << '-';
    out << " exits=";
    if (l.exits.empty()) out << '-';
    for (std::size_t i = 0; i < l.exits.size(); ++i) out << (i ? "," : "") << l.exits[i];
    out << " centerline=" << io_detail::fmt_points(l.centerline) << '\n';
  }
  for (const auto& e : s.lane_graph.road_edges) out << "road_edge points=" << io_detail::fmt_points(e) << '\n';
  for (const auto& e : s.lane_graph.solid_lines) out << "solid_line points=" << io_detail::fmt_points(e) << '\n';
  for (const auto& t : s.tracks) {
    out << "track id=" << t.agent_id << " kind=" << to_string(t.kind) << '\n';
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      const auto& a = t.states[k];
      out << "state frame=" << k << " x=" << fmt_double(a.x) << " y=" << fmt_double(a.y)
          << " heading=" << fmt_double(a.heading) << " vx=" << fmt_double(a.vx)
          << " vy=" << fmt_double(a.vy) << " length=" << fmt_double(a.length)
          << " width=" << fmt_double(a.width) << " valid=" << (a.valid ? 1 : 0) << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

// Parses without validating; see parse_scenario.
inline Scenario parse_scenario_unchecked(std::string_view text) {
  using io_detail::LineParser;
  Scenario s;
  std::vector<std::string_view> lines = io_detail::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();

  std::size_t i = 0;
  auto scalar = [&](std::string_view key) -> std::string {
    if (i >= lines.size())
      throw ScenarioError(ScenarioError::Kind::kParse, std::string(key), "unexpected end of file");
    const std::string_view line = lines[i];
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || line.substr(0, eq) != key)
      throw ScenarioError(ScenarioError::Kind::kParse,
                          "line " + std::to_string(i + 1) + " " + std::string(key), "expected field");
    ++i;
    return std::string(line.substr(eq + 1));
  };
  auto scalar_number = [&](std::string_view key) {
    const auto v = scalar(key);
    double out = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
      throw ScenarioError(ScenarioError::Kind::kParse, std::string(key), "not a number");
    return out;
  };

  if (lines.empty() || lines[0] != "loopsim-scenario v1")
    throw ScenarioError(ScenarioError::Kind::kParse, "header", "expected 'loopsim-scenario v1'");
  i = 1;
  s.scenario_id = scalar("scenario_id");
  if (s.scenario_id.find(' ') != std::string::npos)
    throw ScenarioError(ScenarioError::Kind::kParse, "scenario_id", "must not contain spaces");
  s.dt = scalar_number("dt");
  {
    const auto v = scalar("sdc_index");
    std::size_t idx = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), idx);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
      throw ScenarioError(ScenarioError::Kind::kParse, "sdc_index", "not an index");
    s.sdc_index = idx;
  }
  {
    const auto v = scalar("goal");
    LineParser p("goal", i);
    s.goal = p.point(v, "goal");
  }
  s.s2g_dist = scalar_number("s2g_dist");

  while (i < lines.size()) {
    LineParser p(lines[i], i + 1);
    const auto head = p.head();
    if (head == "end") {
      ++i;
      break;
    }
    ++i;
    if (head == "lane") {
      Lane l;
      l.id = static_cast<LaneId>(p.integer("id"));
      l.speed_limit = p.number("speed_limit");
      l.left_neighbor = p.optional_id("left");
      l.right_neighbor = p.optional_id("right");
      l.exits = p.id_list("exits");
      l.centerline = p.points("centerline");
      s.lane_graph.lanes.push_back(std::move(l));
    } else if (head == "road_edge") {
      s.lane_graph.road_edges.push_back(p.points("points"));
    } else if (head == "solid_line") {
      s.lane_graph.solid_lines.push_back(p.points("points"));
    } else if (head == "track") {
      Track t;
      t.agent_id = static_cast<int>(p.integer("id"));
      t.kind = io_detail::parse_kind(p.raw("kind"), p);
      while (i < lines.size()) {
        LineParser q(lines[i], i + 1);
        if (q.head() != "state") break;
        ++i;
        if (q.integer("frame") != static_cast<long>(t.states.size())) q.fail("frame", "frames out of order");
        AgentState a;
        a.x = q.number("x");
        a.y = q.number("y");
        a.heading = q.number("heading");
        a.vx = q.number("vx");
        a.vy = q.number("vy");
        a.length = q.number("length");
        a.width = q.number("width");
        const long valid = q.integer("valid");
        if (valid != 0 && valid != 1) q.fail("valid", "must be 0 or 1");
        a.valid = valid == 1;
        t.states.push_back(a);
      }
      s.tracks.push_back(std::move(t));
    } else {
      p.fail("", "unknown record type");
    }
  }
  if (i != lines.size())
    throw ScenarioError(ScenarioError::Kind::kParse, "line " + std::to_string(i + 1), "content after 'end'");
  return s;
}

inline Scenario parse_scenario(std::string_view text) {
  Scenario s = parse_scenario_unchecked(text);
  validate(s);
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(ScenarioError::Kind::kParse, path.string(), "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

inline void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ScenarioError(ScenarioError::Kind::kParse, path.string(), "cannot write file");
  out << serialize_scenario(s);
}

// All *.scn files in a directory, sorted by filename.
inline std::vector<Scenario> load_scenario_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".scn") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_scenario(f));
  return out;
}

}  // namespace loopsim
