#pragma once

// Synthetic arterial corridor: Poisson arrivals shaped by a diurnal profile,
// per-link signals with a point queue (fixed discharge headway per lane),
// probe sampling with GPS noise, and aligned ground truth. Everything is
// deterministic per (seed, day) substream.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "arterial/anomaly.hpp"
#include "arterial/basemap.hpp"
#include "arterial/csv.hpp"
#include "arterial/matcher.hpp"
#include "arterial/measures.hpp"
#include "arterial/model.hpp"

namespace arterial {

struct SignalTiming {
  double cycle_s = 90.0;
  double green_ratio = 0.45;
  double offset_s = 0.0;
};

struct Incident {
  std::string link_id;
  int day = 0;
  double start_s = 0.0;     // seconds into the day
  double duration_s = 0.0;
  double severity = 0.7;    // capacity multiplied by (1 - severity)
};

struct SimScenario {
  LinkGraph graph;
  int days = 28;
  double penetration = 0.03;
  double entry_rate_vph = 620.0;  // corridor head
  double side_rate_vph = 120.0;   // each downstream link entrance
  double exit_prob = 0.22;        // per intersection
  std::map<std::string, SignalTiming> signals;
  std::vector<Incident> incidents;
  std::vector<int> holidays;
  double pos_sigma_m = 2.0;
  double heading_sigma_deg = 5.0;
  double sample_interval_s = 3.0;
  double discharge_headway_s = 2.0;  // per lane
  double jam_spacing_m = 7.0;
  double day_mult_sigma = 0.3;       // lognormal daily demand factor
  double ar_rho = 0.9, ar_sigma = 0.25;  // within-day demand modulation
  double demand_start_s = 5.5 * 3600.0, demand_end_s = 22.25 * 3600.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (penetration <= 0.0 || penetration > 1.0)
      throw std::invalid_argument("scenario: penetration outside (0, 1]");
    for (const auto& [id, s] : signals)
      if (s.green_ratio <= 0.0 || s.green_ratio > 1.0)
        throw std::invalid_argument("scenario: green ratio outside (0, 1] on " + id);
    for (const auto& inc : incidents)
      if (inc.severity <= 0.0 || inc.severity > 1.0)
        throw std::invalid_argument("scenario: severity outside (0, 1]");
  }
};

// Straight eastbound corridor with through movements at every intersection.
inline LinkGraph corridor_graph(int n_links = 10, double link_length_m = 500.0,
                                double lon0 = -81.40, double lat0 = 28.50,
                                double speed_limit_mph = 40.0, int lanes = 2) {
  LocalFrame frame({lon0, lat0});
  LinkGraph g;
  for (int i = 0; i <= n_links; ++i) {
    LonLat p = frame.to_lonlat({i * link_length_m, 0.0});
    g.intersections.push_back({"I" + std::to_string(i), p});
  }
  for (int i = 0; i < n_links; ++i) {
    Link l;
    l.id = "L" + std::to_string(i);
    l.upstream = "I" + std::to_string(i);
    l.downstream = "I" + std::to_string(i + 1);
    l.geometry = {g.intersections[static_cast<std::size_t>(i)].position,
                  g.intersections[static_cast<std::size_t>(i + 1)].position};
    l.lanes = lanes;
    l.speed_limit_mph = speed_limit_mph;
    l.road_id = "R1";
    g.links.push_back(l);
    if (i > 0) g.movements.emplace_back("L" + std::to_string(i - 1), l.id);
  }
  g.validate();
  return g;
}

inline SimScenario default_scenario() {
  SimScenario sc;
  sc.graph = corridor_graph();
  for (std::size_t i = 0; i < sc.graph.links.size(); ++i) {
    SignalTiming t;
    t.offset_s = 12.0 * static_cast<double>(i);
    sc.signals[sc.graph.links[i].id] = t;
  }
  sc.incidents = {{"L3", 9, 16.0 * 3600.0, 2.0 * 3600.0, 0.7},
                  {"L6", 16, 8.0 * 3600.0, 1.5 * 3600.0, 0.75},
                  {"L2", 24, 17.0 * 3600.0, 2.0 * 3600.0, 0.7}};
  return sc;
}

struct GroundTruthCell {
  int n_vehicles = 0;
  double delay_s = 0.0;  // mean over vehicles exiting in the window
  double queue_m = 0.0;
  double travel_time_s = 0.0;
  bool incident = false;
};

struct GroundTruth {
  WindowGrid grid;
  std::map<std::string, std::vector<GroundTruthCell>> cells;  // per link, dense
};

namespace detail {

struct SimVehicle {
  int id = 0;
  bool probe = false;
  int last_link = 0;  // exits after this link index
  // piecewise-linear trajectory: (t, corridor chainage); speed from slopes
  std::vector<std::pair<double, double>> breakpoints;
};

inline double weekday_profile(double tod_s) {
  double h = tod_s / 3600.0;
  auto bump = [](double h, double mu, double sigma) {
    double z = (h - mu) / sigma;
    return std::exp(-0.5 * z * z);
  };
  return 0.25 + 0.9 * bump(h, 8.0, 1.3) + 1.0 * bump(h, 17.5, 1.5);
}

inline bool incident_active(const SimScenario& sc, const std::string& link_id, int day,
                            double tod_s, double* severity) {
  for (const auto& inc : sc.incidents)
    if (inc.link_id == link_id && inc.day == day && tod_s >= inc.start_s &&
        tod_s < inc.start_s + inc.duration_s) {
      if (severity) *severity = inc.severity;
      return true;
    }
  return false;
}

}  // namespace detail

// Simulate one day; probes are appended, ground truth accumulated as sums
// (finalize_ground_truth turns sums into means).
inline void simulate_day(const SimScenario& sc, int day, const WindowGrid& grid,
                         std::vector<RawPoint>& probes, GroundTruth& gt) {
  const auto& links = sc.graph.links;
  const int n_links = static_cast<int>(links.size());
  std::mt19937_64 rng(sc.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(day + 1)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const bool weekend = (day % 7) >= 5;
  const bool holiday =
      std::find(sc.holidays.begin(), sc.holidays.end(), day) != sc.holidays.end();
  const double day_mult = std::exp(sc.day_mult_sigma * gauss(rng));

  // within-day AR(1) demand modulation on the 15-min grid, shared by all links
  std::vector<double> ar(96, 1.0);
  double x = 0.0;
  for (int b = 0; b < 96; ++b) {
    x = sc.ar_rho * x + sc.ar_sigma * gauss(rng);
    ar[static_cast<std::size_t>(b)] = std::exp(x);
  }
  auto rate_factor = [&](double tod_s) {
    double prof = (weekend || holiday) ? 0.45 : detail::weekday_profile(tod_s);
    int b = std::clamp(static_cast<int>(tod_s / 900.0), 0, 95);
    return prof * day_mult * ar[static_cast<std::size_t>(b)];
  };

  // arrivals by thinning against the per-entry peak rate; times are absolute
  const double day0 = day * 86400.0;
  struct Entry {
    double t;
    int link;
    int seq;
  };
  std::vector<Entry> entries;
  int seq = 0;
  for (int li = 0; li < n_links; ++li) {
    double base_vph = li == 0 ? sc.entry_rate_vph : sc.side_rate_vph;
    if (base_vph <= 0.0) continue;
    double peak = base_vph / 3600.0 * 2.6;  // profile*mults stay below 2.6
    double t = day0 + sc.demand_start_s;
    while (true) {
      t += -std::log(1.0 - u01(rng)) / peak;
      if (t >= day0 + sc.demand_end_s) break;
      if (u01(rng) * 2.6 <= rate_factor(t - day0)) entries.push_back({t, li, seq++});
    }
  }

  // route lengths and probe draws, in a fixed order for determinism
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.t < b.t || (a.t == b.t && a.seq < b.seq);
  });
  std::vector<detail::SimVehicle> vehicles(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& v = vehicles[i];
    v.id = static_cast<int>(i);
    v.probe = u01(rng) < sc.penetration;
    v.last_link = entries[i].link;
    while (v.last_link + 1 < n_links && u01(rng) >= sc.exit_prob) ++v.last_link;
  }

  // chronological event processing; FIFO per link
  std::vector<double> cum_chain(static_cast<std::size_t>(n_links) + 1, 0.0);
  for (int li = 0; li < n_links; ++li)
    cum_chain[static_cast<std::size_t>(li + 1)] =
        cum_chain[static_cast<std::size_t>(li)] + links[static_cast<std::size_t>(li)].length_m;

  struct Event {
    double t;
    int veh;
    int link;
    bool operator>(const Event& o) const {
      return t > o.t || (t == o.t && (veh > o.veh || (veh == o.veh && link > o.link)));
    }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;
  for (std::size_t i = 0; i < entries.size(); ++i)
    events.push({entries[i].t, static_cast<int>(i), entries[i].link});

  std::vector<double> last_discharge(static_cast<std::size_t>(n_links),
                                     -std::numeric_limits<double>::infinity());
  std::vector<std::deque<double>> pending(static_cast<std::size_t>(n_links));

  auto gt_cell = [&](const std::string& link_id, double exit_abs) -> GroundTruthCell* {
    int flat = grid.flat_index(std::floor(exit_abs / grid.window_s) * grid.window_s);
    if (flat < 0) return nullptr;
    auto& vec = gt.cells[link_id];
    if (vec.empty()) vec.assign(static_cast<std::size_t>(grid.total_bins()), {});
    return &vec[static_cast<std::size_t>(flat)];
  };

  while (!events.empty()) {
    auto [t_in, vi, li] = events.top();
    events.pop();
    auto& veh = vehicles[static_cast<std::size_t>(vi)];
    const Link& link = links[static_cast<std::size_t>(li)];
    const SignalTiming sig = sc.signals.count(link.id) ? sc.signals.at(link.id) : SignalTiming{};
    const double v_f = link.speed_limit_mph * kMphToMps;
    const double L = link.length_m;
    const double t_arr = t_in + L / v_f;  // unimpeded stop-line arrival

    // queue ahead when this vehicle reaches the back of the queue
    auto& q = pending[static_cast<std::size_t>(li)];
    while (!q.empty() && q.front() <= t_arr) q.pop_front();
    const int ahead = static_cast<int>(q.size());
    double q_pos = std::min(0.8 * L, std::ceil(static_cast<double>(ahead) / link.lanes) *
                                         sc.jam_spacing_m);

    double severity = 0.0;
    double tod_mid = t_arr - day0;
    double headway = sc.discharge_headway_s / link.lanes;
    if (detail::incident_active(sc, link.id, day, tod_mid, &severity))
      headway /= (1.0 - severity);

    double earliest = std::max(t_arr, last_discharge[static_cast<std::size_t>(li)] + headway);
    double cyc = sig.cycle_s, green = sig.green_ratio * cyc;
    double phase = std::fmod(earliest - sig.offset_s, cyc);
    if (phase < 0) phase += cyc;
    double t_dep = phase < green ? earliest : earliest + (cyc - phase);
    last_discharge[static_cast<std::size_t>(li)] = t_dep;
    q.push_back(t_dep);

    const double delay = t_dep - t_arr;
    // trajectory breakpoints in corridor chainage
    const double base = cum_chain[static_cast<std::size_t>(li)];
    if (veh.probe) {
      if (veh.breakpoints.empty()) veh.breakpoints.emplace_back(t_in, base);
    }
    double stop_wait = 0.0;
    if (delay > 1.0) {
      double t_arr_stop = t_in + (L - q_pos) / v_f;
      double t_go = t_dep - q_pos / (0.5 * v_f);
      if (t_go > t_arr_stop + 0.5 && q_pos > 0.0) {
        stop_wait = t_go - t_arr_stop;
        if (veh.probe) {
          veh.breakpoints.emplace_back(t_arr_stop, base + L - q_pos);
          veh.breakpoints.emplace_back(t_go, base + L - q_pos);
          veh.breakpoints.emplace_back(t_dep, base + L);
        }
      } else if (q_pos == 0.0) {
        // first in queue: wait at the stop bar
        double t_bar = t_in + L / v_f;
        stop_wait = t_dep - t_bar;
        if (veh.probe) {
          veh.breakpoints.emplace_back(t_bar, base + L);
          veh.breakpoints.emplace_back(t_dep, base + L);
        }
      } else if (veh.probe) {
        veh.breakpoints.emplace_back(t_dep, base + L);  // rolling slowdown
      }
    } else if (veh.probe) {
      veh.breakpoints.emplace_back(t_dep, base + L);
    }

    if (auto* cell = gt_cell(link.id, t_dep)) {
      ++cell->n_vehicles;
      cell->delay_s += std::max(0.0, delay);
      cell->queue_m += stop_wait >= 9.0 ? q_pos : 0.0;
      cell->travel_time_s += t_dep - t_in;
    }

    if (li < veh.last_link) events.push({t_dep, vi, li + 1});
  }

  // incident flags on the grid
  for (const auto& inc : sc.incidents) {
    if (inc.day != day) continue;
    auto& vec = gt.cells[inc.link_id];
    if (vec.empty()) vec.assign(static_cast<std::size_t>(grid.total_bins()), {});
    for (int flat = 0; flat < grid.total_bins(); ++flat) {
      double ws = grid.window_start(flat);
      if (grid.day_of(flat) != day) continue;
      double tod = ws - day0;
      if (tod + grid.window_s > inc.start_s && tod < inc.start_s + inc.duration_s)
        vec[static_cast<std::size_t>(flat)].incident = true;
    }
  }

  // probe GPS emission
  std::normal_distribution<double> pos_noise(0.0, sc.pos_sigma_m);
  std::normal_distribution<double> hdg_noise(0.0, sc.heading_sigma_deg);
  for (const auto& veh : vehicles) {
    if (!veh.probe || veh.breakpoints.size() < 2) continue;
    std::string jid = "d" + std::to_string(day) + "v" + std::to_string(veh.id);
    double t0 = veh.breakpoints.front().first, t1 = veh.breakpoints.back().first;
    std::size_t seg = 0;
    for (double t = t0; t <= t1 + 1e-9; t += sc.sample_interval_s) {
      while (seg + 2 < veh.breakpoints.size() && t >= veh.breakpoints[seg + 1].first) ++seg;
      auto [ta, ca] = veh.breakpoints[seg];
      auto [tb, cb] = veh.breakpoints[seg + 1];
      double w = tb > ta ? std::clamp((t - ta) / (tb - ta), 0.0, 1.0) : 0.0;
      double chain = ca + w * (cb - ca);
      double speed = tb > ta ? (cb - ca) / (tb - ta) : 0.0;
      // locate link
      int li = 0;
      while (li + 1 < static_cast<int>(links.size()) &&
             chain >= cum_chain[static_cast<std::size_t>(li + 1)])
        ++li;
      const Link& link = links[static_cast<std::size_t>(li)];
      double local = std::min(chain - cum_chain[static_cast<std::size_t>(li)], link.length_m);
      Vec2 xy = link.polyline().point_at(local);
      if (sc.pos_sigma_m > 0.0) {
        xy.x += pos_noise(rng);
        xy.y += pos_noise(rng);
      }
      LonLat ll = link.frame().to_lonlat(xy);
      double heading = link_bearing(link, std::min(local, link.length_m - 0.01));
      if (sc.heading_sigma_deg > 0.0) heading = std::fmod(heading + hdg_noise(rng) + 360.0, 360.0);
      probes.push_back({jid, ll.lon, ll.lat, t, speed * kMpsToMph, heading});
    }
  }
}

inline void finalize_ground_truth(GroundTruth& gt) {
  for (auto& [_, vec] : gt.cells)
    for (auto& c : vec) {
      if (c.n_vehicles > 0) {
        c.delay_s /= c.n_vehicles;
        c.queue_m /= c.n_vehicles;
        c.travel_time_s /= c.n_vehicles;
      }
    }
}

struct SimResult {
  std::vector<RawPoint> probes;
  GroundTruth gt;
};

inline SimResult simulate(const SimScenario& sc, const WindowGrid& grid) {
  sc.validate();
  SimResult res;
  res.gt.grid = grid;
  for (const auto& l : sc.graph.links)
    res.gt.cells[l.id].assign(static_cast<std::size_t>(grid.total_bins()), {});
  for (int day = 0; day < sc.days; ++day) simulate_day(sc, day, grid, res.probes, res.gt);
  finalize_ground_truth(res.gt);
  return res;
}

// ---- scenario (de)serialization ----

inline nlohmann::json scenario_to_json(const SimScenario& sc) {
  nlohmann::json sig = nlohmann::json::object();
  for (const auto& [id, s] : sc.signals)
    sig[id] = {{"cycle_s", s.cycle_s}, {"green_ratio", s.green_ratio}, {"offset_s", s.offset_s}};
  nlohmann::json inc = nlohmann::json::array();
  for (const auto& i : sc.incidents)
    inc.push_back({{"link_id", i.link_id},
                   {"day", i.day},
                   {"start_s", i.start_s},
                   {"duration_s", i.duration_s},
                   {"severity", i.severity}});
  return {{"basemap", basemap_to_json(sc.graph)},
          {"days", sc.days},
          {"penetration", sc.penetration},
          {"entry_rate_vph", sc.entry_rate_vph},
          {"side_rate_vph", sc.side_rate_vph},
          {"exit_prob", sc.exit_prob},
          {"signals", sig},
          {"incidents", inc},
          {"holidays", sc.holidays},
          {"pos_sigma_m", sc.pos_sigma_m},
          {"heading_sigma_deg", sc.heading_sigma_deg},
          {"sample_interval_s", sc.sample_interval_s},
          {"discharge_headway_s", sc.discharge_headway_s},
          {"jam_spacing_m", sc.jam_spacing_m},
          {"day_mult_sigma", sc.day_mult_sigma},
          {"ar_rho", sc.ar_rho},
          {"ar_sigma", sc.ar_sigma},
          {"demand_start_s", sc.demand_start_s},
          {"demand_end_s", sc.demand_end_s},
          {"seed", sc.seed}};
}

inline SimScenario scenario_from_json(const nlohmann::json& j) {
  SimScenario sc;
  sc.graph = parse_basemap(j.at("basemap"));
  sc.days = j.value("days", sc.days);
  sc.penetration = j.value("penetration", sc.penetration);
  sc.entry_rate_vph = j.value("entry_rate_vph", sc.entry_rate_vph);
  sc.side_rate_vph = j.value("side_rate_vph", sc.side_rate_vph);
  sc.exit_prob = j.value("exit_prob", sc.exit_prob);
  if (j.contains("signals"))
    for (auto it = j.at("signals").begin(); it != j.at("signals").end(); ++it) {
      SignalTiming s;
      s.cycle_s = it.value().value("cycle_s", s.cycle_s);
      s.green_ratio = it.value().value("green_ratio", s.green_ratio);
      s.offset_s = it.value().value("offset_s", s.offset_s);
      sc.signals[it.key()] = s;
    }
  if (j.contains("incidents"))
    for (const auto& ji : j.at("incidents"))
      sc.incidents.push_back({ji.at("link_id"), ji.at("day"), ji.at("start_s"),
                              ji.at("duration_s"), ji.at("severity")});
  sc.holidays = j.value("holidays", sc.holidays);
  sc.pos_sigma_m = j.value("pos_sigma_m", sc.pos_sigma_m);
  sc.heading_sigma_deg = j.value("heading_sigma_deg", sc.heading_sigma_deg);
  sc.sample_interval_s = j.value("sample_interval_s", sc.sample_interval_s);
  sc.discharge_headway_s = j.value("discharge_headway_s", sc.discharge_headway_s);
  sc.jam_spacing_m = j.value("jam_spacing_m", sc.jam_spacing_m);
  sc.day_mult_sigma = j.value("day_mult_sigma", sc.day_mult_sigma);
  sc.ar_rho = j.value("ar_rho", sc.ar_rho);
  sc.ar_sigma = j.value("ar_sigma", sc.ar_sigma);
  sc.demand_start_s = j.value("demand_start_s", sc.demand_start_s);
  sc.demand_end_s = j.value("demand_end_s", sc.demand_end_s);
  sc.seed = j.value("seed", sc.seed);
  sc.validate();
  return sc;
}

inline void write_ground_truth_csv(const std::string& path, const GroundTruth& gt) {
  std::ofstream out(path);
  out << "link_id,window_start,n_vehicles,delay_s,queue_m,travel_time_s,incident\n";
  out.precision(10);
  for (const auto& [link_id, vec] : gt.cells)
    for (int flat = 0; flat < gt.grid.total_bins(); ++flat) {
      const auto& c = vec[static_cast<std::size_t>(flat)];
      out << link_id << ',' << iso8601(gt.grid.window_start(flat)) << ',' << c.n_vehicles << ','
          << c.delay_s << ',' << c.queue_m << ',' << c.travel_time_s << ','
          << (c.incident ? 1 : 0) << '\n';
    }
}

// ---- dataset construction (Eq. 10 windows) ----

struct SplitConfig {
  std::vector<int> train_days, val_days, test_days;
};

// Chronological split: train is the first (1 - val - test) fraction, the last
// 10% of training days become validation.
inline SplitConfig chronological_split(int days, double test_frac = 0.2, double val_frac = 0.1) {
  SplitConfig s;
  int n_test = std::max(1, static_cast<int>(std::lround(days * test_frac)));
  int n_trainval = days - n_test;
  int n_val = std::max(1, static_cast<int>(std::lround(n_trainval * val_frac)));
  for (int d = 0; d < n_trainval - n_val; ++d) s.train_days.push_back(d);
  for (int d = n_trainval - n_val; d < n_trainval; ++d) s.val_days.push_back(d);
  for (int d = n_trainval; d < days; ++d) s.test_days.push_back(d);
  return s;
}

struct FeatureStats {
  // order: delay, queue, speed, cv volume, travel time, aog
  std::array<double, nn::kTrafficFeatures> mean{};
  std::array<double, nn::kTrafficFeatures> stddev{};
};

namespace detail {

inline std::array<double, nn::kTrafficFeatures> cell_features(const LinkWindowRecord& r) {
  return {r.control_delay_s, r.queue_m,         r.speed_mph,
          static_cast<double>(r.n_vehicles), r.travel_time_s, r.aog_ratio};
}

}  // namespace detail

inline FeatureStats feature_stats(const std::vector<LinkSeries>& series,
                                  const std::vector<int>& train_days) {
  FeatureStats st;
  std::array<double, nn::kTrafficFeatures> sum{}, sum2{};
  std::size_t n = 0;
  for (const auto& s : series)
    for (int flat = 0; flat < s.grid.total_bins(); ++flat) {
      if (std::find(train_days.begin(), train_days.end(), s.grid.day_of(flat)) ==
          train_days.end())
        continue;
      auto f = detail::cell_features(s.cells[static_cast<std::size_t>(flat)]);
      for (std::size_t k = 0; k < f.size(); ++k) {
        sum[k] += f[k];
        sum2[k] += f[k] * f[k];
      }
      ++n;
    }
  if (n == 0) throw std::runtime_error("feature_stats: no training cells");
  for (std::size_t k = 0; k < sum.size(); ++k) {
    st.mean[k] = sum[k] / static_cast<double>(n);
    double var = sum2[k] / static_cast<double>(n) - st.mean[k] * st.mean[k];
    st.stddev[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return st;
}

struct DatasetBundle {
  std::vector<nn::Sample> train, val, test;
  FeatureStats stats;
  SplitConfig split;
  WindowGrid grid;
  std::vector<std::string> link_order;
  std::map<std::string, int> road_code;
};

namespace detail {

inline void temporal_codes(const WindowGrid& grid, int flat, const std::vector<int>& holidays,
                           int* out) {
  int tod = grid.tod_bin_of(flat);
  int day = grid.day_of(flat);
  out[0] = tod;
  out[1] = day % 7;
  out[2] = std::find(holidays.begin(), holidays.end(), day) != holidays.end() ? 1 : 0;
  out[3] = (tod >= 30 && tod < 38) ? 1 : 0;  // AM peak 07:30-09:30
  out[4] = (tod >= 64 && tod < 74) ? 1 : 0;  // PM peak 16:00-18:30
  out[5] = (tod >= 44 && tod < 56) ? 1 : 0;  // midday 11:00-14:00
}

}  // namespace detail

// Dense series per link (grid order must match link_order), flags from the
// anomaly module, split by day. Historical windows average the horizon-aligned
// bins over same-weekday training days (holidays excluded).
inline DatasetBundle build_dataset(const std::vector<LinkSeries>& series,
                                   const DatasetFlags& flags, const LinkGraph& graph,
                                   const SplitConfig& split, const std::vector<int>& holidays = {},
                                   int t_in = 4, int horizon = 4) {
  if (series.empty()) throw std::invalid_argument("build_dataset: no series");
  DatasetBundle ds;
  ds.split = split;
  ds.grid = series[0].grid;
  const WindowGrid& grid = ds.grid;
  const int n = static_cast<int>(series.size());
  const int bpd = grid.bins_per_day();
  if (bpd < t_in + horizon)
    throw std::invalid_argument("build_dataset: day span shorter than window + horizon");

  for (const auto& s : series) ds.link_order.push_back(s.link_id);
  for (const auto& l : graph.links)
    if (!ds.road_code.count(l.road_id))
      ds.road_code[l.road_id] = static_cast<int>(ds.road_code.size());

  ds.stats = feature_stats(series, split.train_days);

  // road codes per link
  std::vector<std::array<int, nn::kRoadCodes>> road(static_cast<std::size_t>(n));
  for (int li = 0; li < n; ++li) {
    const Link& l = graph.link(ds.link_order[static_cast<std::size_t>(li)]);
    road[static_cast<std::size_t>(li)] = {
        ds.road_code.at(l.road_id), std::clamp(l.lanes, 0, 7),
        std::clamp(static_cast<int>(std::lround(l.speed_limit_mph / 10.0)), 0, 7)};
  }

  auto standardized = [&](int li, int flat, double* out6) {
    auto f = detail::cell_features(
        series[static_cast<std::size_t>(li)].cells[static_cast<std::size_t>(flat)]);
    for (std::size_t k = 0; k < f.size(); ++k)
      out6[k] = (f[k] - ds.stats.mean[k]) / ds.stats.stddev[k];
  };

  auto fill_window = [&](nn::FeatureWindow& w, const std::vector<int>& flats) {
    w.n_links = n;
    w.t = static_cast<int>(flats.size());
    w.traffic.resize(static_cast<std::size_t>(n) * w.t * nn::kTrafficFeatures);
    w.temporal.resize(static_cast<std::size_t>(n) * w.t * nn::kTemporalCodes);
    w.road.resize(static_cast<std::size_t>(n) * nn::kRoadCodes);
    w.mask.resize(static_cast<std::size_t>(n) * w.t);
    for (int li = 0; li < n; ++li) {
      for (int s = 0; s < w.t; ++s) {
        int flat = flats[static_cast<std::size_t>(s)];
        standardized(li, flat,
                     w.traffic.data() + (static_cast<std::size_t>(li) * w.t + s) *
                                            nn::kTrafficFeatures);
        detail::temporal_codes(grid, flat, holidays,
                               w.temporal.data() + (static_cast<std::size_t>(li) * w.t + s) *
                                                       nn::kTemporalCodes);
        w.mask[static_cast<std::size_t>(li) * w.t + s] =
            series[static_cast<std::size_t>(li)].observed[static_cast<std::size_t>(flat)];
      }
      for (int c = 0; c < nn::kRoadCodes; ++c)
        w.road[static_cast<std::size_t>(li) * nn::kRoadCodes + c] =
            road[static_cast<std::size_t>(li)][static_cast<std::size_t>(c)];
    }
  };

  // historical: mean standardized features over same-weekday training days
  auto fill_historical = [&](nn::FeatureWindow& w, int day, const std::vector<int>& target_bins) {
    w.n_links = n;
    w.t = static_cast<int>(target_bins.size());
    w.traffic.assign(static_cast<std::size_t>(n) * w.t * nn::kTrafficFeatures, 0.0);
    w.temporal.resize(static_cast<std::size_t>(n) * w.t * nn::kTemporalCodes);
    w.road.resize(static_cast<std::size_t>(n) * nn::kRoadCodes);
    w.mask.assign(static_cast<std::size_t>(n) * w.t, 1);
    std::vector<int> peers;
    for (int d : split.train_days) {
      if (d % 7 != day % 7) continue;
      if (std::find(holidays.begin(), holidays.end(), d) != holidays.end()) continue;
      peers.push_back(d);
    }
    if (peers.empty()) {
      // fall back to all non-holiday training days at the same time of day
      for (int d : split.train_days)
        if (std::find(holidays.begin(), holidays.end(), d) == holidays.end()) peers.push_back(d);
    }
    if (peers.empty()) throw std::runtime_error("build_dataset: no history for day " +
                                                std::to_string(day));
    for (int li = 0; li < n; ++li) {
      for (int s = 0; s < w.t; ++s) {
        double* dst = w.traffic.data() +
                      (static_cast<std::size_t>(li) * w.t + s) * nn::kTrafficFeatures;
        double tmp[nn::kTrafficFeatures];
        for (int d : peers) {
          int flat = d * bpd + target_bins[static_cast<std::size_t>(s)];
          standardized(li, flat, tmp);
          for (int k = 0; k < nn::kTrafficFeatures; ++k) dst[k] += tmp[k];
        }
        for (int k = 0; k < nn::kTrafficFeatures; ++k) dst[k] /= static_cast<double>(peers.size());
        // codes describe the slot being predicted, on the anchor's day
        int flat = day * bpd + target_bins[static_cast<std::size_t>(s)];
        detail::temporal_codes(grid, flat, holidays,
                               w.temporal.data() + (static_cast<std::size_t>(li) * w.t + s) *
                                                       nn::kTemporalCodes);
      }
      for (int c = 0; c < nn::kRoadCodes; ++c)
        w.road[static_cast<std::size_t>(li) * nn::kRoadCodes + c] =
            road[static_cast<std::size_t>(li)][static_cast<std::size_t>(c)];
    }
  };

  auto flag_at = [&](int li, int flat) -> char {
    const std::string& id = ds.link_order[static_cast<std::size_t>(li)];
    char f = 0;
    auto it = flags.delay.find(id);
    if (it != flags.delay.end()) f |= it->second.flag[static_cast<std::size_t>(flat)];
    auto iq = flags.queue.find(id);
    if (iq != flags.queue.end()) f |= iq->second.flag[static_cast<std::size_t>(flat)];
    return f;
  };

  auto build_for_days = [&](const std::vector<int>& days, std::vector<nn::Sample>& out) {
    for (int day : days) {
      for (int b = t_in - 1; b + horizon < bpd; ++b) {
        nn::Sample s;
        std::vector<int> rt_flats, tgt_bins;
        for (int k = t_in - 1; k >= 0; --k) rt_flats.push_back(day * bpd + (b - k));
        for (int k = 1; k <= horizon; ++k) tgt_bins.push_back(b + k);
        fill_window(s.realtime, rt_flats);
        fill_historical(s.historical, day, tgt_bins);
        s.target.resize(static_cast<std::size_t>(n) * horizon * nn::kTargets);
        for (int li = 0; li < n; ++li)
          for (int k = 0; k < horizon; ++k) {
            const auto& cell =
                series[static_cast<std::size_t>(li)]
                    .cells[static_cast<std::size_t>(day * bpd + tgt_bins[static_cast<std::size_t>(k)])];
            s.target[(static_cast<std::size_t>(li) * horizon + k) * nn::kTargets + 0] =
                cell.control_delay_s;
            s.target[(static_cast<std::size_t>(li) * horizon + k) * nn::kTargets + 1] =
                cell.queue_m;
          }
        s.abnormal_flag.resize(static_cast<std::size_t>(n));
        for (int li = 0; li < n; ++li)
          s.abnormal_flag[static_cast<std::size_t>(li)] = flag_at(li, day * bpd + b);
        s.anchor_flat = day * bpd + b;
        out.push_back(std::move(s));
      }
    }
  };

  build_for_days(split.train_days, ds.train);
  build_for_days(split.val_days, ds.val);
  build_for_days(split.test_days, ds.test);
  return ds;
}

}  // namespace arterial
