#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace loopsim {

inline constexpr double kPi = std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) return a;
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Expresses a world point in the frame of `origin`.
inline Vec2 to_local(const Pose& origin, Vec2 p) {
  return rotate(p - origin.position(), -origin.heading);
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + ab * t);
}

inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 &&
         d3 != 0 && d4 != 0;
}

inline double segment_segment_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

using Polyline = std::vector<Vec2>;

inline double polyline_length(std::span<const Vec2> line) {
  double s = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) s += distance(line[i - 1], line[i]);
  return s;
}

inline std::vector<double> cumulative_arc_length(std::span<const Vec2> line) {
  std::vector<double> s(line.size(), 0.0);
  for (std::size_t i = 1; i < line.size(); ++i) s[i] = s[i - 1] + distance(line[i - 1], line[i]);
  return s;
}

struct PolylineProjection {
  double arc = 0.0;       // arc length of the foot point
  double lateral = 0.0;   // signed, positive to the left of travel
  double distance = std::numeric_limits<double>::infinity();
  std::size_t segment = 0;
  Vec2 foot;
};

inline PolylineProjection project_onto_polyline(std::span<const Vec2> line, Vec2 p) {
  PolylineProjection best;
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Vec2 a = line[i - 1], b = line[i];
    const Vec2 ab = b - a;
    const double len = norm(ab);
    if (len <= 0.0) continue;
    const double t = std::clamp(dot(p - a, ab) / (len * len), 0.0, 1.0);
    const Vec2 foot = a + ab * t;
    const double d = distance(p, foot);
    if (d < best.distance) {
      best.distance = d;
      best.arc = acc + t * len;
      best.segment = i - 1;
      best.foot = foot;
      best.lateral = cross(ab, p - a) >= 0.0 ? d : -d;
    }
    acc += len;
  }
  return best;
}

// Point at arc length `s`, clamped to the ends of the polyline.
inline Vec2 point_at_arc(std::span<const Vec2> line, double s) {
  if (line.empty()) return {};
  if (s <= 0.0) return line.front();
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double len = distance(line[i - 1], line[i]);
    if (acc + len >= s && len > 0.0) {
      const double t = (s - acc) / len;
      return line[i - 1] + (line[i] - line[i - 1]) * t;
    }
    acc += len;
  }
  return line.back();
}

inline double heading_at_arc(std::span<const Vec2> line, double s) {
  if (line.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double len = distance(line[i - 1], line[i]);
    if ((acc + len >= s || i + 1 == line.size()) && len > 0.0) {
      const Vec2 d = line[i] - line[i - 1];
      return std::atan2(d.y, d.x);
    }
    acc += len;
  }
  const Vec2 d = line.back() - line[line.size() - 2];
  return std::atan2(d.y, d.x);
}

// Net heading change between the first and last segment.
inline double net_heading_change(std::span<const Vec2> line) {
  if (line.size() < 2) return 0.0;
  const Vec2 d0 = line[1] - line[0];
  const Vec2 d1 = line.back() - line[line.size() - 2];
  return angle_diff(std::atan2(d1.y, d1.x), std::atan2(d0.y, d0.x));
}

// Sub-polyline between arc lengths [s0, s1].
inline Polyline slice_polyline(std::span<const Vec2> line, double s0, double s1) {
  Polyline out;
  if (line.empty()) return out;
  const auto cum = cumulative_arc_length(line);
  s0 = std::clamp(s0, 0.0, cum.back());
  s1 = std::clamp(s1, s0, cum.back());
  out.push_back(point_at_arc(line, s0));
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (cum[i] > s0 && cum[i] < s1) out.push_back(line[i]);
  }
  const Vec2 end = point_at_arc(line, s1);
  if (s1 > s0) out.push_back(end);
  return out;
}

// Rectangle centred on a pose.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> corners() const {
    const Vec2 f = rotate({length * 0.5, 0.0}, heading);
    const Vec2 l = rotate({0.0, width * 0.5}, heading);
    return {center + f + l, center - f + l, center - f - l, center + f - l};
  }
  std::array<Vec2, 2> axes() const {
    return {Vec2{std::cos(heading), std::sin(heading)},
            Vec2{-std::sin(heading), std::cos(heading)}};
  }
};

// Separation between two rectangles: Euclidean distance between closest points when
// disjoint, minus the minimum translation distance when they overlap.
inline double box_gap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  double min_overlap = std::numeric_limits<double>::infinity();
  bool separated = false;
  for (const auto& box : {a, b}) {
    for (Vec2 axis : box.axes()) {
      double amin = std::numeric_limits<double>::infinity(), amax = -amin;
      double bmin = amin, bmax = -amin;
      for (Vec2 c : ca) {
        amin = std::min(amin, dot(c, axis));
        amax = std::max(amax, dot(c, axis));
      }
      for (Vec2 c : cb) {
        bmin = std::min(bmin, dot(c, axis));
        bmax = std::max(bmax, dot(c, axis));
      }
      const double overlap = std::min(amax, bmax) - std::max(amin, bmin);
      if (overlap <= 0.0) separated = true;
      min_overlap = std::min(min_overlap, overlap);
    }
  }
  if (!separated) return -min_overlap;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      best = std::min(best, segment_segment_distance(ca[i], ca[(i + 1) % 4], cb[j],
                                                     cb[(j + 1) % 4]));
    }
  }
  return best;
}

}  // namespace loopsim
