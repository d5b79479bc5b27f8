#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "arterial/basemap.hpp"
#include "arterial/geo.hpp"

namespace arterial {

struct RawPoint {
  std::string journey_id;
  double lon = 0.0;
  double lat = 0.0;
  double t = 0.0;           // seconds (epoch or simulation clock)
  double speed_mph = 0.0;
  double heading_deg = 0.0; // [0, 360)
};

struct MatchedPoint {
  RawPoint raw;
  std::string link_id;
  double chainage_m = 0.0;     // from the upstream stop line
  double cross_track_m = 0.0;  // signed, positive = left of travel
};

struct Journey {
  std::string journey_id;
  std::string link_id;
  std::vector<MatchedPoint> points;  // time-ordered
};

struct MatchConfig {
  double geofence_width_m = 15.0;      // total width l
  double heading_threshold_deg = 30.0; // theta_thre
  double backjump_repair_m = 20.0;     // chainage back-jump clamp threshold
};

struct MatchDiagnostics {
  std::size_t points_in = 0;
  std::size_t points_matched = 0;
  std::size_t journeys_kept = 0;
  std::size_t journeys_dropped = 0;

  MatchDiagnostics& operator+=(const MatchDiagnostics& o) {
    points_in += o.points_in;
    points_matched += o.points_matched;
    journeys_kept += o.journeys_kept;
    journeys_dropped += o.journeys_dropped;
    return *this;
  }
};

inline Polyline::Projection project_point_raw(const RawPoint& p, const Link& link) {
  return link.polyline().project(link.frame().to_xy({p.lon, p.lat}));
}

// (chainage, cross_track), chainage clamped to [0, length].
inline std::pair<double, double> project_point(const RawPoint& p, const Link& link) {
  auto pr = project_point_raw(p, link);
  return {pr.chainage, pr.cross_track};
}

// Inside the geofence iff the projection lands within [0, L] along-track and
// the lateral offset is at most half the buffer width.
inline bool in_geofence(const RawPoint& p, const Link& link, const MatchConfig& cfg) {
  auto pr = project_point_raw(p, link);
  return pr.within && std::fabs(pr.cross_track) <= cfg.geofence_width_m / 2.0;
}

inline std::vector<RawPoint> geofence_filter(const std::vector<RawPoint>& points,
                                             const Link& link, const MatchConfig& cfg) {
  std::vector<RawPoint> out;
  for (const auto& p : points)
    if (in_geofence(p, link, cfg)) out.push_back(p);
  return out;
}

// Heading check against the local bearing at the projected chainage.
inline bool heading_check(const RawPoint& p, const Link& link, const MatchConfig& cfg) {
  auto pr = project_point_raw(p, link);
  double b = link.polyline().bearing_at(pr.chainage);
  return angle_diff_deg(p.heading_deg, b) < cfg.heading_threshold_deg;
}

// Assign each point to at most one link: geofence + heading gate, overlaps
// resolved by smaller |cross_track|, ties by smaller heading deviation.
inline std::vector<MatchedPoint> match_points(const std::vector<RawPoint>& points,
                                              const LinkGraph& graph, const MatchConfig& cfg,
                                              MatchDiagnostics* diag = nullptr) {
  std::vector<MatchedPoint> out;
  for (const auto& p : points) {
    if (diag) ++diag->points_in;
    const Link* best = nullptr;
    Polyline::Projection best_pr;
    double best_dh = 0.0;
    for (const auto& link : graph.links) {
      auto pr = project_point_raw(p, link);
      if (!pr.within || std::fabs(pr.cross_track) > cfg.geofence_width_m / 2.0) continue;
      double dh = angle_diff_deg(p.heading_deg, link.polyline().bearing_at(pr.chainage));
      if (dh >= cfg.heading_threshold_deg) continue;
      if (!best || std::fabs(pr.cross_track) < std::fabs(best_pr.cross_track) - 1e-12 ||
          (std::fabs(std::fabs(pr.cross_track) - std::fabs(best_pr.cross_track)) <= 1e-12 &&
           dh < best_dh)) {
        best = &link;
        best_pr = pr;
        best_dh = dh;
      }
    }
    if (best) {
      if (diag) ++diag->points_matched;
      out.push_back({p, best->id, best_pr.chainage, best_pr.cross_track});
    }
  }
  return out;
}

// Keep journeys with >= 2 points spanning at least half the link; time-sort
// and repair chainage back-jumps larger than the repair threshold.
inline std::vector<Journey> validate_journeys(const std::vector<MatchedPoint>& matched,
                                              const Link& link, const MatchConfig& cfg,
                                              MatchDiagnostics* diag = nullptr) {
  std::map<std::string, std::vector<MatchedPoint>> by_journey;
  for (const auto& m : matched)
    if (m.link_id == link.id) by_journey[m.raw.journey_id].push_back(m);

  std::vector<Journey> out;
  for (auto& [jid, pts] : by_journey) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const MatchedPoint& a, const MatchedPoint& b) { return a.raw.t < b.raw.t; });
    // GPS jitter across the stop line: clamp large back-jumps to the running
    // maximum, keep small dips (stop-and-creep).
    double running_max = pts.front().chainage_m;
    for (auto& p : pts) {
      if (running_max - p.chainage_m > cfg.backjump_repair_m) p.chainage_m = running_max;
      running_max = std::max(running_max, p.chainage_m);
    }
    double lo = pts.front().chainage_m, hi = lo;
    for (const auto& p : pts) {
      lo = std::min(lo, p.chainage_m);
      hi = std::max(hi, p.chainage_m);
    }
    bool keep = pts.size() >= 2 && (hi - lo) >= link.length_m / 2.0;
    if (keep) {
      out.push_back({jid, link.id, std::move(pts)});
      if (diag) ++diag->journeys_kept;
    } else if (diag) {
      ++diag->journeys_dropped;
    }
  }
  return out;
}

}  // namespace arterial
