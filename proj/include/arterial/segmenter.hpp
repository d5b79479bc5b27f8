#pragma once

#include <algorithm>
#include <vector>

#include "arterial/matcher.hpp"

namespace arterial {

enum class TrajState { FreeFlow, Transition, Stop };

struct StateSegment {
  TrajState state = TrajState::Transition;
  double t_start = 0.0;
  double t_end = 0.0;
  double chainage_start = 0.0;
  double chainage_end = 0.0;
  int point_count = 0;
  double chainage_sum = 0.0;  // sum of member point chainages (for stop position)

  double duration() const { return t_end - t_start; }
  double chainage_mean() const { return point_count > 0 ? chainage_sum / point_count : chainage_start; }
};

struct SegmenterConfig {
  double v_s_mps = 1.0;       // stop threshold
  double v_t_factor = 0.8;    // free-flow factor on the speed limit
  double merge_gap_s = 9.0;
  double merge_gap_m = 10.0;
  double min_state_s = 9.0;
};

// Per-point speed labels merged into segments. Segment boundaries sit at the
// midpoints between neighboring points with different labels, so durations are
// unbiased under regular sampling.
inline std::vector<StateSegment> label_states(const Journey& journey, const SegmenterConfig& cfg,
                                              double speed_limit_mph) {
  const auto& pts = journey.points;
  const double v_t = cfg.v_t_factor * speed_limit_mph * kMphToMps;
  auto label = [&](double speed_mph) {
    double v = speed_mph * kMphToMps;
    if (v <= cfg.v_s_mps) return TrajState::Stop;
    if (v > v_t) return TrajState::FreeFlow;
    return TrajState::Transition;
  };

  std::vector<StateSegment> segs;
  for (std::size_t i = 0; i < pts.size();) {
    TrajState st = label(pts[i].raw.speed_mph);
    std::size_t j = i;
    while (j + 1 < pts.size() && label(pts[j + 1].raw.speed_mph) == st) ++j;
    StateSegment s;
    s.state = st;
    s.t_start = i == 0 ? pts[i].raw.t : 0.5 * (pts[i - 1].raw.t + pts[i].raw.t);
    s.t_end = j + 1 == pts.size() ? pts[j].raw.t : 0.5 * (pts[j].raw.t + pts[j + 1].raw.t);
    s.chainage_start = i == 0 ? pts[i].chainage_m : 0.5 * (pts[i - 1].chainage_m + pts[i].chainage_m);
    s.chainage_end = j + 1 == pts.size() ? pts[j].chainage_m
                                         : 0.5 * (pts[j].chainage_m + pts[j + 1].chainage_m);
    for (std::size_t k = i; k <= j; ++k) {
      ++s.point_count;
      s.chainage_sum += pts[k].chainage_m;
    }
    segs.push_back(s);
    i = j + 1;
  }
  return segs;
}

namespace detail {

inline StateSegment merge_range(const std::vector<StateSegment>& segs, std::size_t i,
                                std::size_t j, TrajState state) {
  StateSegment m;
  m.state = state;
  m.t_start = segs[i].t_start;
  m.t_end = segs[j].t_end;
  m.chainage_start = segs[i].chainage_start;
  m.chainage_end = segs[j].chainage_end;
  for (std::size_t k = i; k <= j; ++k) {
    m.point_count += segs[k].point_count;
    m.chainage_sum += segs[k].chainage_sum;
  }
  return m;
}

inline std::vector<StateSegment> coalesce_adjacent(const std::vector<StateSegment>& segs) {
  std::vector<StateSegment> out;
  for (const auto& s : segs) {
    if (!out.empty() && out.back().state == s.state) {
      out.back() = merge_range({out.back(), s}, 0, 1, s.state);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

}  // namespace detail

// Merge two same-state segments when the interlude between them is short in
// both time and chainage; the interlude (possibly several segments) is
// absorbed. Applied left-to-right to fixpoint.
inline std::vector<StateSegment> consolidate_states(std::vector<StateSegment> segs,
                                                    const SegmenterConfig& cfg, TrajState state) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].state != state) continue;
      std::size_t j = i + 1;
      while (j < segs.size() && segs[j].state != state) ++j;
      if (j >= segs.size()) break;
      double gap_t = segs[j].t_start - segs[i].t_end;
      double gap_m = std::fabs(segs[j].chainage_start - segs[i].chainage_end);
      if (gap_t < cfg.merge_gap_s && gap_m < cfg.merge_gap_m) {
        StateSegment m = detail::merge_range(segs, i, j, state);
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i),
                   segs.begin() + static_cast<std::ptrdiff_t>(j + 1));
        segs.insert(segs.begin() + static_cast<std::ptrdiff_t>(i), m);
        changed = true;
        break;
      }
    }
  }
  return segs;
}

// Relabel segments of `state` shorter than min_state_s as Transition and merge
// with adjacent Transition segments (strict "<": boundary durations are kept).
inline std::vector<StateSegment> remove_short_states(std::vector<StateSegment> segs,
                                                     const SegmenterConfig& cfg, TrajState state) {
  for (auto& s : segs)
    if (s.state == state && s.duration() < cfg.min_state_s) s.state = TrajState::Transition;
  return detail::coalesce_adjacent(segs);
}

// Full pass order: Stop consolidate, Stop remove, FreeFlow consolidate,
// FreeFlow remove.
inline std::vector<StateSegment> segment_journey(const Journey& journey, const SegmenterConfig& cfg,
                                                 double speed_limit_mph) {
  auto segs = label_states(journey, cfg, speed_limit_mph);
  segs = consolidate_states(std::move(segs), cfg, TrajState::Stop);
  segs = remove_short_states(std::move(segs), cfg, TrajState::Stop);
  segs = consolidate_states(std::move(segs), cfg, TrajState::FreeFlow);
  segs = remove_short_states(std::move(segs), cfg, TrajState::FreeFlow);
  return segs;
}

inline std::vector<StateSegment> filter_segments(std::vector<StateSegment> segs,
                                                 const SegmenterConfig& cfg) {
  segs = consolidate_states(std::move(segs), cfg, TrajState::Stop);
  segs = remove_short_states(std::move(segs), cfg, TrajState::Stop);
  segs = consolidate_states(std::move(segs), cfg, TrajState::FreeFlow);
  segs = remove_short_states(std::move(segs), cfg, TrajState::FreeFlow);
  return segs;
}

}  // namespace arterial
