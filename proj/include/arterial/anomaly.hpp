#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "arterial/measures.hpp"

namespace arterial {

// Lower-of-two order statistic for even counts (exact, no averaging). This is
// deliberately not the midpoint convention; see build_reference callers.
inline double lower_median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sample");
  std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

struct AnomalyConfig {
  double k = 2.0;          // sensitivity multiplier
  double epsilon = 0.5;    // scale floor, in the measure's units
  int min_history = 3;
};

struct HistoricalReference {
  std::string link_id;
  int dow = 0;       // day-of-week slot
  int tod_bin = 0;   // time-of-day slot (15-min bin of day)
  std::vector<double> values;
  double m_t = 0.0;
  double mad = 0.0;
  double sigma = 0.0;
};

inline HistoricalReference build_reference(std::vector<double> values, const std::string& link_id,
                                           int dow, int tod_bin, const AnomalyConfig& cfg) {
  if (values.empty()) throw std::runtime_error("empty reference slot");
  HistoricalReference ref;
  ref.link_id = link_id;
  ref.dow = dow;
  ref.tod_bin = tod_bin;
  ref.values = values;
  ref.m_t = lower_median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double x : values) dev.push_back(std::fabs(x - ref.m_t));
  ref.mad = lower_median(dev);
  ref.sigma = 1.4826 * std::max(ref.mad, cfg.epsilon);
  return ref;
}

inline double detect_threshold(const HistoricalReference& ref, const AnomalyConfig& cfg) {
  return ref.m_t + cfg.k * ref.sigma;
}

// One-sided upper test: 1 iff x_t >= m_t + k * sigma_t.
inline int detect(double x_t, const HistoricalReference& ref, const AnomalyConfig& cfg) {
  return x_t >= detect_threshold(ref, cfg) ? 1 : 0;
}

// Per-measure flags over a dense series. References use training days only
// and exclude the labeled day from its own reference (leave-one-day-out).
// Slots with too little history pool the same time-of-day across weekdays.
struct FlagSeries {
  std::string link_id;
  std::string measure;
  std::vector<char> flag;        // per grid cell
  std::vector<double> value;
  std::vector<double> threshold;
};

inline FlagSeries label_series(const LinkSeries& series, const std::string& measure,
                               const std::vector<int>& training_days, const AnomalyConfig& cfg) {
  const WindowGrid& grid = series.grid;
  auto value_of = [&](const LinkWindowRecord& r) {
    if (measure == "delay") return r.control_delay_s;
    if (measure == "queue") return r.queue_m;
    if (measure == "speed") return r.speed_mph;
    if (measure == "travel_time") return r.travel_time_s;
    throw std::invalid_argument("unknown measure: " + measure);
  };

  FlagSeries fs;
  fs.link_id = series.link_id;
  fs.measure = measure;
  fs.flag.assign(series.cells.size(), 0);
  fs.value.assign(series.cells.size(), 0.0);
  fs.threshold.assign(series.cells.size(), 0.0);

  const int bpd = grid.bins_per_day();
  for (int flat = 0; flat < grid.total_bins(); ++flat) {
    auto idx = static_cast<std::size_t>(flat);
    int day = grid.day_of(flat);
    int dow = day % 7;
    int bin = flat % bpd;
    double x = value_of(series.cells[idx]);
    fs.value[idx] = x;

    std::vector<double> hist;
    for (int d : training_days) {
      if (d % 7 != dow || d == day) continue;
      int p = d * bpd + bin;
      if (p >= 0 && p < grid.total_bins() && series.observed[static_cast<std::size_t>(p)])
        hist.push_back(value_of(series.cells[static_cast<std::size_t>(p)]));
    }
    if (static_cast<int>(hist.size()) < cfg.min_history) {
      // fallback: pool the same time-of-day across all training days
      hist.clear();
      for (int d : training_days) {
        if (d == day) continue;
        int p = d * bpd + bin;
        if (p >= 0 && p < grid.total_bins() && series.observed[static_cast<std::size_t>(p)])
          hist.push_back(value_of(series.cells[static_cast<std::size_t>(p)]));
      }
    }
    if (hist.empty()) continue;  // no reference, leave unflagged
    auto ref = build_reference(std::move(hist), series.link_id, dow, grid.tod_bin_of(flat), cfg);
    fs.threshold[idx] = detect_threshold(ref, cfg);
    // Only observed windows can be flagged; imputed cells are by construction
    // close to the historical pattern.
    if (series.observed[idx]) fs.flag[idx] = static_cast<char>(detect(x, ref, cfg));
  }
  return fs;
}

struct DatasetFlags {
  std::map<std::string, FlagSeries> delay;  // by link id
  std::map<std::string, FlagSeries> queue;

  double prevalence(const std::string& measure) const {
    const auto& m = measure == "delay" ? delay : queue;
    std::size_t n = 0, f = 0;
    for (const auto& [_, fs] : m) {
      n += fs.flag.size();
      for (char c : fs.flag) f += c;
    }
    return n ? static_cast<double>(f) / static_cast<double>(n) : 0.0;
  }
};

inline DatasetFlags label_dataset(const std::vector<LinkSeries>& series,
                                  const std::vector<int>& training_days, const AnomalyConfig& cfg) {
  DatasetFlags out;
  for (const auto& s : series) {
    out.delay.emplace(s.link_id, label_series(s, "delay", training_days, cfg));
    out.queue.emplace(s.link_id, label_series(s, "queue", training_days, cfg));
  }
  return out;
}

inline nlohmann::json reference_to_json(const HistoricalReference& r) {
  return {{"link_id", r.link_id}, {"dow", r.dow},     {"tod_bin", r.tod_bin},
          {"values", r.values},   {"median", r.m_t},  {"mad", r.mad},
          {"sigma", r.sigma}};
}

}  // namespace arterial
