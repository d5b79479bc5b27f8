#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace arterial {

inline constexpr double kPi = 3.14159265358979323846;
// WGS84 ellipsoid
inline constexpr double kWgs84A = 6378137.0;
inline constexpr double kWgs84E2 = 6.69437999014e-3;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Ellipsoidal radii of curvature at a latitude: meridional (north-south) and
// prime-vertical (east-west, before the cos(lat) shrink).
inline double meridional_radius(double lat_deg) {
  double s = std::sin(deg2rad(lat_deg));
  double w = 1.0 - kWgs84E2 * s * s;
  return kWgs84A * (1.0 - kWgs84E2) / (w * std::sqrt(w));
}

inline double prime_vertical_radius(double lat_deg) {
  double s = std::sin(deg2rad(lat_deg));
  return kWgs84A / std::sqrt(1.0 - kWgs84E2 * s * s);
}

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

struct Vec2 {
  double x = 0.0;  // meters east
  double y = 0.0;  // meters north
};

// Local equirectangular frame anchored at a reference coordinate.
// Sub-centimeter error at link scale (< 5 km), well below GPS noise.
class LocalFrame {
 public:
  explicit LocalFrame(LonLat origin)
      : origin_(origin),
        mx_(std::cos(deg2rad(origin.lat)) * prime_vertical_radius(origin.lat)),
        my_(meridional_radius(origin.lat)) {}

  Vec2 to_xy(LonLat p) const {
    return {deg2rad(p.lon - origin_.lon) * mx_, deg2rad(p.lat - origin_.lat) * my_};
  }

  LonLat to_lonlat(Vec2 v) const {
    return {origin_.lon + rad2deg(v.x / mx_), origin_.lat + rad2deg(v.y / my_)};
  }

 private:
  LonLat origin_;
  double mx_, my_;  // meters per radian of longitude / latitude
};

inline double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Compass bearing (degrees, clockwise from north) of the vector a -> b.
inline double bearing_deg(Vec2 a, Vec2 b) {
  double br = rad2deg(std::atan2(b.x - a.x, b.y - a.y));
  if (br < 0.0) br += 360.0;
  return br;
}

// Circular angular deviation in [0, 180].
inline double angle_diff_deg(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

// A link centerline in the link's local frame, with cumulative chainage.
class Polyline {
 public:
  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw std::invalid_argument("polyline needs >= 2 vertices");
    cum_.resize(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i)
      cum_[i] = cum_[i - 1] + dist(pts_[i - 1], pts_[i]);
  }

  double length() const { return cum_.back(); }
  const std::vector<Vec2>& points() const { return pts_; }

  // Bearing of the segment containing the chainage; at a vertex, the
  // following segment.
  double bearing_at(double chainage) const {
    if (chainage < -1e-9 || chainage > length() + 1e-9)
      throw std::out_of_range("chainage outside [0, length]");
    std::size_t seg = segment_at(chainage);
    return bearing_deg(pts_[seg], pts_[seg + 1]);
  }

  struct Projection {
    double chainage = 0.0;     // clamped to [0, length]
    double cross_track = 0.0;  // signed, positive = left of travel direction
    double distance = 0.0;     // unsigned distance to the nearest polyline point
    bool within = false;       // projection falls inside [0, length] along-track
  };

  // Nearest-point projection. `within` is false when the nearest polyline
  // point is an endpoint and the point lies beyond it along-track.
  Projection project(Vec2 p) const {
    Projection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
      Vec2 a = pts_[i], b = pts_[i + 1];
      double dx = b.x - a.x, dy = b.y - a.y;
      double len2 = dx * dx + dy * dy;
      if (len2 <= 0.0) continue;
      double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
      double tc = std::clamp(t, 0.0, 1.0);
      Vec2 q{a.x + tc * dx, a.y + tc * dy};
      double d2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
      if (d2 < best_d2 - 1e-12) {
        best_d2 = d2;
        double seglen = std::sqrt(len2);
        // cross(dir, p - a) > 0 means left of travel
        double cross = (dx * (p.y - a.y) - dy * (p.x - a.x)) / seglen;
        best.chainage = cum_[i] + tc * seglen;
        best.cross_track = cross;
        best.distance = std::sqrt(d2);
        bool clipped_start = (i == 0 && t < 0.0);
        bool clipped_end = (i + 2 == pts_.size() && t > 1.0);
        best.within = !(clipped_start || clipped_end);
      }
    }
    return best;
  }

  Vec2 point_at(double chainage) const {
    double c = std::clamp(chainage, 0.0, length());
    std::size_t seg = segment_at(c);
    double seglen = cum_[seg + 1] - cum_[seg];
    double t = seglen > 0.0 ? (c - cum_[seg]) / seglen : 0.0;
    return {pts_[seg].x + t * (pts_[seg + 1].x - pts_[seg].x),
            pts_[seg].y + t * (pts_[seg + 1].y - pts_[seg].y)};
  }

 private:
  std::size_t segment_at(double chainage) const {
    std::size_t seg = 0;
    while (seg + 2 < pts_.size() && chainage >= cum_[seg + 1]) ++seg;
    return seg;
  }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

inline constexpr double kMphToMps = 0.44704;
inline constexpr double kMpsToMph = 1.0 / 0.44704;

}  // namespace arterial
