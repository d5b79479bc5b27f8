#pragma once

// Test-only oracles, independent of the library's computation paths.

#include <cmath>
#include <random>
#include <vector>

#include "arterial/basemap.hpp"

namespace testutil {

// Short-range geodesic distance on the WGS84 ellipsoid: flat-earth with the
// radii of curvature evaluated at the midpoint latitude. Written from the
// standard formulas, not via the library's projection classes.
inline double haversine_m(arterial::LonLat a, arterial::LonLat b) {
  constexpr double A = 6378137.0, E2 = 6.69437999014e-3;
  double pm = arterial::deg2rad(0.5 * (a.lat + b.lat));
  double s = std::sin(pm);
  double w2 = 1.0 - E2 * s * s;
  double M = A * (1.0 - E2) / (w2 * std::sqrt(w2));
  double N = A / std::sqrt(w2);
  double dy = arterial::deg2rad(b.lat - a.lat) * M;
  double dx = arterial::deg2rad(b.lon - a.lon) * N * std::cos(pm);
  return std::hypot(dx, dy);
}

// Initial great-circle bearing from a to b, degrees clockwise from north.
inline double geodesic_bearing_deg(arterial::LonLat a, arterial::LonLat b) {
  using arterial::deg2rad;
  double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat), dl = deg2rad(b.lon - a.lon);
  double y = std::sin(dl) * std::cos(p2);
  double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  double br = std::atan2(y, x) * 180.0 / arterial::kPi;
  if (br < 0) br += 360.0;
  return br;
}

struct DenseProjection {
  double chainage = 0.0;
  double distance = 0.0;
};

// Dense-sampling nearest point along a lon/lat polyline with geodesic
// distances. Coarse 1 m sweep followed by a 1 cm refinement.
inline DenseProjection dense_project(const std::vector<arterial::LonLat>& poly,
                                     arterial::LonLat p) {
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < poly.size(); ++i)
    cum.push_back(cum.back() + haversine_m(poly[i - 1], poly[i]));
  const double total = cum.back();

  auto point_at = [&](double s) -> arterial::LonLat {
    s = std::clamp(s, 0.0, total);
    std::size_t seg = 0;
    while (seg + 2 < poly.size() && s >= cum[seg + 1]) ++seg;
    double seglen = cum[seg + 1] - cum[seg];
    double t = seglen > 0 ? (s - cum[seg]) / seglen : 0.0;
    return {poly[seg].lon + t * (poly[seg + 1].lon - poly[seg].lon),
            poly[seg].lat + t * (poly[seg + 1].lat - poly[seg].lat)};
  };

  auto sweep = [&](double lo, double hi, double step) {
    DenseProjection best{lo, haversine_m(point_at(lo), p)};
    for (double s = lo; s <= hi; s += step) {
      double d = haversine_m(point_at(s), p);
      if (d < best.distance) best = {s, d};
    }
    return best;
  };
  auto coarse = sweep(0.0, total, 1.0);
  return sweep(std::max(0.0, coarse.chainage - 2.0), std::min(total, coarse.chainage + 2.0), 0.01);
}

// Straight link helper on the equator-ish local plane around (lon0, lat0).
inline arterial::LinkGraph straight_link_graph(double lon0, double lat0, double bearing_deg,
                                               double length_m, double speed_limit_mph = 45.0) {
  using namespace arterial;
  LocalFrame frame({lon0, lat0});
  double br = deg2rad(bearing_deg);
  Vec2 end{length_m * std::sin(br), length_m * std::cos(br)};
  LonLat e = frame.to_lonlat(end);
  LinkGraph g;
  g.intersections = {{"A", {lon0, lat0}}, {"B", e}};
  Link l;
  l.id = "L1";
  l.upstream = "A";
  l.downstream = "B";
  l.geometry = {{lon0, lat0}, e};
  l.speed_limit_mph = speed_limit_mph;
  l.lanes = 2;
  l.road_id = "R1";
  g.links.push_back(l);
  g.validate();
  return g;
}

}  // namespace testutil
