#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "arterial/segmenter.hpp"

namespace arterial {

struct LosThresholds {
  // Control-delay upper bounds for A..E; above the last is F. Seconds.
  std::vector<double> bounds = {10.0, 20.0, 35.0, 55.0, 80.0};
};

inline char los_rating(double control_delay_s, const LosThresholds& th = {}) {
  if (th.bounds.size() != 5 || !std::is_sorted(th.bounds.begin(), th.bounds.end()) ||
      std::adjacent_find(th.bounds.begin(), th.bounds.end()) != th.bounds.end())
    throw std::invalid_argument("LOS thresholds must be 5 strictly ascending values");
  for (std::size_t i = 0; i < th.bounds.size(); ++i)
    if (control_delay_s <= th.bounds[i]) return static_cast<char>('A' + i);
  return 'F';
}

struct VehicleMeasures {
  std::string journey_id;
  std::string link_id;
  double travel_time_s = 0.0;      // t
  double travel_speed_mph = 0.0;   // v
  double free_flow_speed_mph = 0.0;  // v_f
  double free_flow_arrival_s = 0.0;  // t_B
  double control_delay_s = 0.0;    // d_c (clamped at 0)
  double stop_delay_s = 0.0;       // d_s
  int n_stops = 0;                 // n_s
  double queue_length_m = 0.0;     // q
  int aog = 1;                     // arrive on green
  int split_failure = 0;
  char los = 'A';
  double exit_time_s = 0.0;        // t_C, used for window assignment
  bool first_stop_not_farthest = false;  // diagnostic, see queue definition
};

// Nearest-rank percentile (p in (0,1]) of an unsorted sample.
inline double nearest_rank_percentile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(v.begin(), v.end());
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

inline VehicleMeasures vehicle_measures(const Journey& journey,
                                        const std::vector<StateSegment>& segments,
                                        const Link& link, const LosThresholds& los_th = {}) {
  const auto& pts = journey.points;
  VehicleMeasures m;
  m.journey_id = journey.journey_id;
  m.link_id = link.id;

  const double t_a = pts.front().raw.t;
  const double t_c = pts.back().raw.t;
  const double s_a = pts.front().chainage_m;
  const double s_c = pts.back().chainage_m;
  m.exit_time_s = t_c;
  m.travel_time_s = t_c - t_a;
  if (m.travel_time_s <= 0.0) throw std::invalid_argument("journey has non-positive duration");
  m.travel_speed_mph = std::fabs(s_c - s_a) / m.travel_time_s * kMpsToMph;

  // v_f: nearest-rank 80th percentile of point speeds inside free-flow
  // segments, falling back to the speed limit if none exist.
  std::vector<double> ff_speeds;
  for (const auto& p : pts) {
    for (const auto& s : segments) {
      if (s.state == TrajState::FreeFlow && p.raw.t >= s.t_start - 1e-9 &&
          p.raw.t <= s.t_end + 1e-9) {
        ff_speeds.push_back(p.raw.speed_mph);
        break;
      }
    }
  }
  m.free_flow_speed_mph =
      ff_speeds.empty() ? link.speed_limit_mph : nearest_rank_percentile(ff_speeds, 0.8);

  const double v_f_mps = m.free_flow_speed_mph * kMphToMps;
  const double s_b = link.length_m;  // downstream stop line
  m.free_flow_arrival_s = t_a + (s_b - s_a) / v_f_mps;
  m.control_delay_s = std::max(0.0, t_c - m.free_flow_arrival_s);

  const StateSegment* first_stop = nullptr;
  double min_stop_chainage = std::numeric_limits<double>::infinity();
  for (const auto& s : segments) {
    if (s.state != TrajState::Stop) continue;
    ++m.n_stops;
    m.stop_delay_s += s.duration();
    if (!first_stop) first_stop = &s;
    min_stop_chainage = std::min(min_stop_chainage, s.chainage_mean());
  }
  if (first_stop) {
    m.queue_length_m = std::fabs(link.length_m - first_stop->chainage_mean());
    // First stop should also be the farthest from the stop bar when chainage
    // is monotone; record violations instead of failing.
    m.first_stop_not_farthest = first_stop->chainage_mean() > min_stop_chainage + 1e-6;
  }
  m.aog = m.n_stops >= 1 ? 0 : 1;
  m.split_failure = m.n_stops >= 2 ? 1 : 0;
  m.los = los_rating(m.control_delay_s, los_th);
  return m;
}

struct WindowConfig {
  double window_s = 900.0;
  int min_samples_flag = 10;
};

struct LinkWindowRecord {
  std::string link_id;
  double window_start = 0.0;  // seconds on the analysis clock
  int n_vehicles = 0;
  double travel_time_s = 0.0;
  double speed_mph = 0.0;
  double control_delay_s = 0.0;
  double stop_delay_s = 0.0;
  double n_stops = 0.0;
  double queue_m = 0.0;
  double aog_ratio = 0.0;
  double sf_ratio = 0.0;
  bool low_sample = false;
  bool imputed = false;
};

namespace detail {
// Compensated (Kahan) mean, accumulation-order independent to ~1e-15.
class KahanMean {
 public:
  void add(double x) {
    double y = x - c_;
    double t = sum_ + y;
    c_ = (t - sum_) - y;
    sum_ = t;
    ++n_;
  }
  double mean() const { return n_ ? sum_ / static_cast<double>(n_) : 0.0; }

 private:
  double sum_ = 0.0, c_ = 0.0;
  std::size_t n_ = 0;
};
}  // namespace detail

inline LinkWindowRecord aggregate_window(const std::vector<VehicleMeasures>& measures,
                                         const std::string& link_id, double window_start,
                                         const WindowConfig& cfg = {}) {
  if (measures.empty()) throw std::invalid_argument("empty window: no record to emit");
  LinkWindowRecord r;
  r.link_id = link_id;
  r.window_start = window_start;
  r.n_vehicles = static_cast<int>(measures.size());
  detail::KahanMean tt, sp, cd, sd, ns, q, aog, sf;
  for (const auto& m : measures) {
    tt.add(m.travel_time_s);
    sp.add(m.travel_speed_mph);
    cd.add(m.control_delay_s);
    sd.add(m.stop_delay_s);
    ns.add(m.n_stops);
    q.add(m.queue_length_m);
    aog.add(m.aog);
    sf.add(m.split_failure);
  }
  r.travel_time_s = tt.mean();
  r.speed_mph = sp.mean();
  r.control_delay_s = cd.mean();
  r.stop_delay_s = sd.mean();
  r.n_stops = ns.mean();
  r.queue_m = q.mean();
  r.aog_ratio = aog.mean();
  r.sf_ratio = sf.mean();
  r.low_sample = r.n_vehicles < cfg.min_samples_flag;
  return r;
}

// Analysis-clock conventions: the clock starts at 00:00 of day 0 and day 0 is
// a Monday; days are 86400 s.
struct WindowGrid {
  int n_days = 28;
  int day_start_bin = 24;  // 06:00 with 15-min bins
  int day_end_bin = 88;    // 22:00 (exclusive)
  double window_s = 900.0;

  int bins_per_day() const { return day_end_bin - day_start_bin; }
  int total_bins() const { return n_days * bins_per_day(); }
  // flat index <-> (day, bin-of-day in [day_start_bin, day_end_bin))
  double window_start(int flat) const {
    int day = flat / bins_per_day();
    int bin = day_start_bin + flat % bins_per_day();
    return day * 86400.0 + bin * window_s;
  }
  int flat_index(double win_start) const {
    int day = static_cast<int>(win_start / 86400.0);
    int bin = static_cast<int>(std::llround((win_start - day * 86400.0) / window_s));
    if (bin < day_start_bin || bin >= day_end_bin || day < 0 || day >= n_days) return -1;
    return day * bins_per_day() + (bin - day_start_bin);
  }
  int day_of(int flat) const { return flat / bins_per_day(); }
  int dow_of(int flat) const { return day_of(flat) % 7; }
  int tod_bin_of(int flat) const { return day_start_bin + flat % bins_per_day(); }
};

struct LinkSeries {
  std::string link_id;
  WindowGrid grid;
  std::vector<LinkWindowRecord> cells;  // dense, grid.total_bins() entries
  std::vector<char> observed;           // per cell; imputation mask = !observed
};

// Dense per-link series with imputation: same link, same time-of-day, same
// day-of-week mean over `source_days` (or all days when empty); remaining
// holes filled by linear interpolation along time.
inline LinkSeries window_series(const std::vector<LinkWindowRecord>& records,
                                const std::string& link_id, const WindowGrid& grid,
                                const std::vector<int>& source_days = {}) {
  LinkSeries s;
  s.link_id = link_id;
  s.grid = grid;
  s.cells.assign(static_cast<std::size_t>(grid.total_bins()), {});
  s.observed.assign(static_cast<std::size_t>(grid.total_bins()), 0);

  std::size_t n_obs = 0;
  for (const auto& r : records) {
    if (r.link_id != link_id) continue;
    int flat = grid.flat_index(r.window_start);
    if (flat < 0) continue;
    s.cells[static_cast<std::size_t>(flat)] = r;
    s.observed[static_cast<std::size_t>(flat)] = 1;
    ++n_obs;
  }
  if (n_obs == 0) throw std::runtime_error("link " + link_id + " has no observations");

  auto day_allowed = [&](int day) {
    return source_days.empty() ||
           std::find(source_days.begin(), source_days.end(), day) != source_days.end();
  };

  const int bpd = grid.bins_per_day();
  auto fields = [](LinkWindowRecord& r) {
    return std::array<double*, 8>{&r.travel_time_s, &r.speed_mph,   &r.control_delay_s,
                                  &r.stop_delay_s,  &r.n_stops,     &r.queue_m,
                                  &r.aog_ratio,     &r.sf_ratio};
  };

  // Pass 1: same-slot (time-of-day x day-of-week) means.
  for (int flat = 0; flat < grid.total_bins(); ++flat) {
    auto idx = static_cast<std::size_t>(flat);
    if (s.observed[idx]) continue;
    int bin = flat % bpd;
    int dow = grid.dow_of(flat);
    std::vector<const LinkWindowRecord*> peers;
    for (int d = 0; d < grid.n_days; ++d) {
      if (d % 7 != dow || !day_allowed(d)) continue;
      int p = d * bpd + bin;
      if (s.observed[static_cast<std::size_t>(p)]) peers.push_back(&s.cells[static_cast<std::size_t>(p)]);
    }
    if (peers.empty()) continue;
    LinkWindowRecord r;
    r.link_id = link_id;
    r.window_start = grid.window_start(flat);
    r.imputed = true;
    auto dst = fields(r);
    for (std::size_t f = 0; f < dst.size(); ++f) {
      detail::KahanMean km;
      for (const auto* p : peers) {
        LinkWindowRecord tmp = *p;  // const access through the field map
        km.add(*fields(tmp)[f]);
      }
      *dst[f] = km.mean();
    }
    s.cells[idx] = r;
    // mark filled but keep mask: imputed flag carries the information
    s.observed[idx] = 2;
  }

  // Pass 2: linear interpolation along time for anything still missing.
  for (int flat = 0; flat < grid.total_bins(); ++flat) {
    auto idx = static_cast<std::size_t>(flat);
    if (s.observed[idx]) continue;
    int prev = flat - 1;
    while (prev >= 0 && !s.observed[static_cast<std::size_t>(prev)]) --prev;
    int next = flat + 1;
    while (next < grid.total_bins() && !s.observed[static_cast<std::size_t>(next)]) ++next;
    LinkWindowRecord r;
    r.link_id = link_id;
    r.window_start = grid.window_start(flat);
    r.imputed = true;
    auto dst = fields(r);
    if (prev >= 0 && next < grid.total_bins()) {
      double w = static_cast<double>(flat - prev) / static_cast<double>(next - prev);
      LinkWindowRecord a = s.cells[static_cast<std::size_t>(prev)];
      LinkWindowRecord b = s.cells[static_cast<std::size_t>(next)];
      auto fa = fields(a), fb = fields(b);
      for (std::size_t f = 0; f < dst.size(); ++f) *dst[f] = (1.0 - w) * *fa[f] + w * *fb[f];
    } else {
      int src = prev >= 0 ? prev : next;
      LinkWindowRecord a = s.cells[static_cast<std::size_t>(src)];
      auto fa = fields(a);
      for (std::size_t f = 0; f < dst.size(); ++f) *dst[f] = *fa[f];
    }
    s.cells[idx] = r;
  }
  // Normalize the mask: observed means "came from data".
  for (auto& o : s.observed) o = (o == 1) ? 1 : 0;
  for (int flat = 0; flat < grid.total_bins(); ++flat) {
    auto idx = static_cast<std::size_t>(flat);
    s.cells[idx].imputed = !s.observed[idx];
  }
  return s;
}

}  // namespace arterial
