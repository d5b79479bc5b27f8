#pragma once

// End-to-end glue: trajectory -> measures extraction, evaluation against
// targets, naive baselines, ablation and detector-sensitivity harnesses,
// run manifests, and small SVG charts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arterial/anomaly.hpp"
#include "arterial/datasim.hpp"
#include "arterial/matcher.hpp"
#include "arterial/measures.hpp"
#include "arterial/model.hpp"
#include "arterial/segmenter.hpp"

namespace arterial {

struct ExtractConfig {
  MatchConfig match;
  SegmenterConfig seg;
  WindowConfig window;
  LosThresholds los;
};

// Accumulates vehicle measures across calls so multi-day corpora can be
// processed a day at a time; vehicles land in the window of their exit time.
class MeasureAccumulator {
 public:
  MeasureAccumulator(const LinkGraph& graph, WindowGrid grid, ExtractConfig cfg = {})
      : graph_(&graph), grid_(grid), cfg_(std::move(cfg)) {}

  void add_points(const std::vector<RawPoint>& points) {
    auto matched = match_points(points, *graph_, cfg_.match);
    for (const auto& link : graph_->links) {
      auto journeys = validate_journeys(matched, link, cfg_.match);
      for (const auto& j : journeys) {
        auto segs = segment_journey(j, cfg_.seg, link.speed_limit_mph);
        VehicleMeasures m = vehicle_measures(j, segs, link, cfg_.los);
        int flat = grid_.flat_index(std::floor(m.exit_time_s / grid_.window_s) * grid_.window_s);
        if (flat < 0) continue;
        buckets_[link.id][flat].push_back(std::move(m));
      }
    }
  }

  std::vector<LinkWindowRecord> records() const {
    std::vector<LinkWindowRecord> out;
    for (const auto& link : graph_->links) {
      auto it = buckets_.find(link.id);
      if (it == buckets_.end()) continue;
      for (const auto& [flat, ms] : it->second)
        out.push_back(aggregate_window(ms, link.id, grid_.window_start(flat), cfg_.window));
    }
    return out;
  }

  // Dense imputed series in basemap link order.
  std::vector<LinkSeries> series(const std::vector<int>& source_days = {}) const {
    auto recs = records();
    std::vector<LinkSeries> out;
    for (const auto& link : graph_->links)
      out.push_back(window_series(recs, link.id, grid_, source_days));
    return out;
  }

  const WindowGrid& grid() const { return grid_; }

 private:
  const LinkGraph* graph_;
  WindowGrid grid_;
  ExtractConfig cfg_;
  std::map<std::string, std::map<int, std::vector<VehicleMeasures>>> buckets_;
};

// ---- evaluation ----

struct EvalCell {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

// Keys are "measure/subset/horizon" with measure in {delay, queue}, subset in
// {overall, normal, abnormal}, horizon in {15, 30, 45, 60, all} minutes.
// Subsets with no member cells are absent, not zero.
struct EvalReport {
  std::map<std::string, EvalCell> cells;

  const EvalCell* find(const std::string& measure, const std::string& subset,
                       const std::string& horizon) const {
    auto it = cells.find(measure + "/" + subset + "/" + horizon);
    return it == cells.end() ? nullptr : &it->second;
  }
  double mae(const std::string& measure, const std::string& subset = "overall",
             const std::string& horizon = "all") const {
    const EvalCell* c = find(measure, subset, horizon);
    if (!c) throw std::out_of_range("eval: empty subset " + measure + "/" + subset + "/" + horizon);
    return c->mae;
  }
};

// Predictions are [N, P, 2] per sample in raw units, matching Sample::target.
// Cells are classified normal/abnormal by the anomaly flag (delay OR queue)
// of the predicted window itself.
inline EvalReport evaluate(const std::vector<nn::Sample>& samples,
                           const std::vector<std::vector<double>>& preds,
                           const DatasetFlags& flags, const WindowGrid& grid,
                           const std::vector<std::string>& link_order) {
  if (samples.size() != preds.size())
    throw std::invalid_argument("evaluate: sample/prediction count mismatch");
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  const int n = static_cast<int>(link_order.size());
  if (n == 0 || samples[0].target.empty())
    throw std::invalid_argument("evaluate: empty targets");
  const int p = static_cast<int>(samples[0].target.size()) / (n * nn::kTargets);
  const int bpd = grid.bins_per_day();

  struct Acc {
    double abs = 0.0, sq = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> acc;
  auto note = [&](const std::string& key, double err) {
    auto& a = acc[key];
    a.abs += std::fabs(err);
    a.sq += err * err;
    ++a.n;
  };

  auto flag_at = [&](int li, int flat) -> bool {
    const std::string& id = link_order[static_cast<std::size_t>(li)];
    char f = 0;
    auto it = flags.delay.find(id);
    if (it != flags.delay.end()) f |= it->second.flag[static_cast<std::size_t>(flat)];
    auto iq = flags.queue.find(id);
    if (iq != flags.queue.end()) f |= iq->second.flag[static_cast<std::size_t>(flat)];
    return f != 0;
  };

  const char* measures[nn::kTargets] = {"delay", "queue"};
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const auto& s = samples[si];
    const auto& y = preds[si];
    if (y.size() != s.target.size())
      throw std::invalid_argument("evaluate: prediction size mismatch");
    for (int li = 0; li < n; ++li)
      for (int h = 0; h < p; ++h) {
        int flat = s.anchor_flat + h + 1;
        // anchors never cross the end of day, so target flats stay in-day
        bool ab = (s.anchor_flat % bpd) + h + 1 < bpd && flag_at(li, flat);
        std::string horizon = std::to_string((h + 1) * 15);
        for (int m = 0; m < nn::kTargets; ++m) {
          std::size_t idx = (static_cast<std::size_t>(li) * p + h) * nn::kTargets + m;
          double err = y[idx] - s.target[idx];
          for (const std::string& hz : {horizon, std::string("all")}) {
            note(std::string(measures[m]) + "/overall/" + hz, err);
            note(std::string(measures[m]) + (ab ? "/abnormal/" : "/normal/") + hz, err);
          }
        }
      }
  }

  EvalReport rep;
  for (const auto& [key, a] : acc) {
    EvalCell c;
    c.n = a.n;
    c.mae = a.abs / static_cast<double>(a.n);
    c.rmse = std::sqrt(a.sq / static_cast<double>(a.n));
    rep.cells[key] = c;
  }
  return rep;
}

// ---- baselines ----

namespace detail {
inline double destandardize(const FeatureStats& st, int feature, double z) {
  return st.mean[static_cast<std::size_t>(feature)] +
         st.stddev[static_cast<std::size_t>(feature)] * z;
}
}  // namespace detail

// Repeats the last real-time observation across the horizon.
inline std::vector<double> baseline_persistence(const nn::Sample& s, const FeatureStats& st,
                                                int horizon) {
  const int n = s.realtime.n_links, t = s.realtime.t;
  std::vector<double> y(static_cast<std::size_t>(n) * horizon * nn::kTargets);
  for (int li = 0; li < n; ++li) {
    const double* f = s.realtime.traffic.data() +
                      (static_cast<std::size_t>(li) * t + (t - 1)) * nn::kTrafficFeatures;
    double delay = detail::destandardize(st, 0, f[0]);
    double queue = detail::destandardize(st, 1, f[1]);
    for (int h = 0; h < horizon; ++h) {
      y[(static_cast<std::size_t>(li) * horizon + h) * nn::kTargets + 0] = delay;
      y[(static_cast<std::size_t>(li) * horizon + h) * nn::kTargets + 1] = queue;
    }
  }
  return y;
}

// Emits the horizon-aligned historical average directly.
inline std::vector<double> baseline_historical(const nn::Sample& s, const FeatureStats& st,
                                               int horizon) {
  const int n = s.historical.n_links, t = s.historical.t;
  if (t < horizon) throw std::invalid_argument("baseline_historical: horizon exceeds window");
  std::vector<double> y(static_cast<std::size_t>(n) * horizon * nn::kTargets);
  for (int li = 0; li < n; ++li)
    for (int h = 0; h < horizon; ++h) {
      const double* f = s.historical.traffic.data() +
                        (static_cast<std::size_t>(li) * t + h) * nn::kTrafficFeatures;
      y[(static_cast<std::size_t>(li) * horizon + h) * nn::kTargets + 0] =
          detail::destandardize(st, 0, f[0]);
      y[(static_cast<std::size_t>(li) * horizon + h) * nn::kTargets + 1] =
          detail::destandardize(st, 1, f[1]);
    }
  return y;
}

inline std::vector<std::vector<double>> predict_all(nn::AastGcn& model,
                                                    const std::vector<nn::Sample>& samples) {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.predict(s));
  return out;
}

// ---- ablation harness ----

struct AblationRow {
  std::string variant;
  double mae_delay_normal = 0.0, mae_delay_abnormal = 0.0;
  double mae_queue_normal = 0.0, mae_queue_abnormal = 0.0;
  double rel_delay_normal = 0.0, rel_delay_abnormal = 0.0;  // vs the full model
  double gate_mean_normal = 0.0, gate_mean_abnormal = 0.0;
  int best_epoch = 0;
};

inline nn::ModelConfig ablation_variant(nn::ModelConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "only_R") {
    cfg.use_historical = false;
    cfg.use_dual_expert = false;
  } else if (variant == "R_plus_H") {
    cfg.use_dual_expert = false;
  } else if (variant == "no_embedding") {
    cfg.use_embedding = false;
  } else if (variant == "no_tcn") {
    cfg.use_tcn = false;
  } else if (variant == "no_gcn") {
    cfg.use_gcn = false;
  } else if (variant == "no_adaptive") {
    cfg.use_adaptive = false;
  } else if (variant == "no_gate") {
    cfg.use_gate = false;
  } else {
    throw std::invalid_argument("unknown ablation variant: " + variant);
  }
  return cfg;
}

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"full",   "only_R",      "R_plus_H", "no_embedding",
                                             "no_tcn", "no_gcn",      "no_adaptive", "no_gate"};
  return v;
}

struct AblationContext {
  const DatasetBundle* data = nullptr;
  const DatasetFlags* flags = nullptr;
  std::vector<double> a_fix;  // row-normalized, flattened N x N
};

inline AblationRow run_variant(const std::string& variant, const nn::ModelConfig& base,
                               const AblationContext& ctx) {
  nn::ModelConfig cfg = ablation_variant(base, variant);
  nn::AastGcn model(cfg, ctx.a_fix);
  auto result = nn::train(model, ctx.data->train, ctx.data->val);
  auto preds = predict_all(model, ctx.data->test);
  EvalReport rep = evaluate(ctx.data->test, preds, *ctx.flags, ctx.data->grid,
                            ctx.data->link_order);
  AblationRow row;
  row.variant = variant;
  row.best_epoch = result.best_epoch;
  row.mae_delay_normal = rep.mae("delay", "normal");
  row.mae_queue_normal = rep.mae("queue", "normal");
  if (rep.find("delay", "abnormal", "all")) {
    row.mae_delay_abnormal = rep.mae("delay", "abnormal");
    row.mae_queue_abnormal = rep.mae("queue", "abnormal");
  }
  if (!result.log.empty()) {
    row.gate_mean_normal = result.log.back().gate_mean_normal;
    row.gate_mean_abnormal = result.log.back().gate_mean_abnormal;
  }
  return row;
}

inline std::vector<AblationRow> run_ablation(const nn::ModelConfig& base,
                                             const AblationContext& ctx) {
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants()) rows.push_back(run_variant(v, base, ctx));
  for (auto& r : rows) {
    r.rel_delay_normal = r.mae_delay_normal / rows[0].mae_delay_normal - 1.0;
    if (rows[0].mae_delay_abnormal > 0.0)
      r.rel_delay_abnormal = r.mae_delay_abnormal / rows[0].mae_delay_abnormal - 1.0;
  }
  return rows;
}

// ---- detector sensitivity ----

struct SensitivityRow {
  double k = 0.0;
  double prevalence_delay = 0.0;
  double prevalence_queue = 0.0;
  bool has_abnormal_mae = false;  // only when predictions are supplied
  double mae_delay_abnormal = 0.0;
  double mae_queue_abnormal = 0.0;
};

// Re-labels the dataset per k; when test samples + predictions are supplied,
// also reports the abnormal-subset MAE under each k's flags.
inline std::vector<SensitivityRow> sensitivity_k(
    const std::vector<LinkSeries>& series, const std::vector<int>& training_days,
    const std::vector<double>& ks, AnomalyConfig cfg = {},
    const std::vector<nn::Sample>* test = nullptr,
    const std::vector<std::vector<double>>* preds = nullptr,
    const std::vector<std::string>* link_order = nullptr) {
  std::vector<SensitivityRow> rows;
  for (double k : ks) {
    cfg.k = k;
    DatasetFlags f = label_dataset(series, training_days, cfg);
    SensitivityRow row;
    row.k = k;
    row.prevalence_delay = f.prevalence("delay");
    row.prevalence_queue = f.prevalence("queue");
    if (test && preds && link_order && !series.empty()) {
      EvalReport rep = evaluate(*test, *preds, f, series[0].grid, *link_order);
      if (const EvalCell* c = rep.find("delay", "abnormal", "all")) {
        row.has_abnormal_mae = true;
        row.mae_delay_abnormal = c->mae;
        row.mae_queue_abnormal = rep.mae("queue", "abnormal");
      }
    }
    rows.push_back(row);
  }
  return rows;
}

// Incident recall: fraction of (link, window) cells with a ground-truth
// incident whose delay or queue flag fired.
inline double incident_recall(const DatasetFlags& flags, const GroundTruth& gt) {
  std::size_t hits = 0, total = 0;
  for (const auto& [link_id, cells] : gt.cells)
    for (std::size_t flat = 0; flat < cells.size(); ++flat) {
      if (!cells[flat].incident) continue;
      ++total;
      char f = 0;
      auto it = flags.delay.find(link_id);
      if (it != flags.delay.end()) f |= it->second.flag[flat];
      auto iq = flags.queue.find(link_id);
      if (iq != flags.queue.end()) f |= iq->second.flag[flat];
      hits += f != 0;
    }
  if (total == 0) throw std::runtime_error("incident_recall: no incident windows");
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---- manifest ----

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string digest_string(const std::string& s) { return hex64(fnv1a(s.data(), s.size())); }

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return digest_string(ss.str());
}

inline nlohmann::json make_manifest(const nlohmann::json& config, std::uint64_t seed,
                                    const std::vector<std::string>& input_paths) {
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& p : input_paths) inputs[p] = digest_file(p);
  return {{"config_digest", digest_string(config.dump())},
          {"seed", seed},
          {"inputs", inputs}};
}

// ---- SVG charts ----

struct PlotSeries {
  std::string label;
  std::vector<double> y;
};

// Minimal line chart; x is the sample index.
inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("svg chart: no series");
  const int w = 900, h = 360, ml = 60, mr = 20, mt = 40, mb = 30;
  double lo = 0.0, hi = 1e-9;
  std::size_t nx = 1;
  for (const auto& s : series)
    for (double v : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const auto& s : series) nx = std::max(nx, s.y.size());
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">"
      << title << "</text>\n";
  auto sx = [&](std::size_t i) {
    return ml + (w - ml - mr) * (nx > 1 ? static_cast<double>(i) / static_cast<double>(nx - 1) : 0.5);
  };
  auto sy = [&](double v) { return h - mb - (h - mt - mb) * (v - lo) / (hi - lo); };
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  out.precision(6);
  out << "<text x=\"8\" y=\"" << mt + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">" << hi
      << "</text>\n";
  out << "<text x=\"8\" y=\"" << h - mb << "\" font-family=\"sans-serif\" font-size=\"11\">" << lo
      << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.y.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << colors[si % 8] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) out << sx(i) << ',' << sy(s.y[i]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << w - mr - 150 << "\" y=\"" << mt + 16 * (si + 1) << "\" fill=\""
        << colors[si % 8] << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace arterial
