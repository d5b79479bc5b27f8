// arterial: one binary, subcommands for every pipeline stage. All defaults
// live in a single JSON config; every run writes a manifest with the config
// digest, seed, and input file digests.
//
// Exit codes: 0 success, 2 validation/usage error, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "arterial/csv.hpp"
#include "arterial/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arterial;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  return json::parse(in);
}

void save_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

struct RunConfig {
  ExtractConfig extract;
  AnomalyConfig anomaly;
  WindowGrid grid;
  nn::ModelConfig model;
  std::vector<int> holidays;
  std::uint64_t seed = 42;
  json raw = json::object();
};

RunConfig load_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  json j = load_json(path);
  c.raw = j;
  if (j.contains("match")) {
    const auto& m = j["match"];
    c.extract.match.geofence_width_m = m.value("geofence_width_m", 15.0);
    c.extract.match.heading_threshold_deg = m.value("heading_threshold_deg", 30.0);
    c.extract.match.backjump_repair_m = m.value("backjump_repair_m", 20.0);
  }
  if (j.contains("segmenter")) {
    const auto& s = j["segmenter"];
    c.extract.seg.v_s_mps = s.value("v_s_mps", 1.0);
    c.extract.seg.v_t_factor = s.value("v_t_factor", 0.8);
    c.extract.seg.merge_gap_s = s.value("merge_gap_s", 9.0);
    c.extract.seg.merge_gap_m = s.value("merge_gap_m", 10.0);
    c.extract.seg.min_state_s = s.value("min_state_s", 9.0);
  }
  if (j.contains("window")) {
    const auto& w = j["window"];
    c.extract.window.window_s = w.value("window_s", 900.0);
    c.extract.window.min_samples_flag = w.value("min_samples_flag", 10);
  }
  if (j.contains("anomaly")) {
    const auto& a = j["anomaly"];
    c.anomaly.k = a.value("k", 2.0);
    c.anomaly.epsilon = a.value("epsilon", 0.5);
    c.anomaly.min_history = a.value("min_history", 3);
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    c.grid.n_days = g.value("n_days", 28);
    c.grid.day_start_bin = g.value("day_start_bin", 24);
    c.grid.day_end_bin = g.value("day_end_bin", 88);
    c.grid.window_s = g.value("window_s", 900.0);
  }
  if (j.contains("model")) {
    // partial model configs merge over the defaults
    json m = nn::config_to_json(c.model);
    m.update(j["model"]);
    c.model = nn::config_from_json(m);
  }
  c.holidays = j.value("holidays", std::vector<int>{});
  c.seed = j.value("seed", std::uint64_t{42});
  return c;
}

void write_manifest(const std::string& out_dir, const RunConfig& cfg,
                    const std::vector<std::string>& inputs) {
  save_json(out_dir + "/manifest.json", make_manifest(cfg.raw, cfg.seed, inputs));
}

// ---- dataset bundle (de)serialization ----

json window_to_json(const nn::FeatureWindow& w) {
  return {{"n_links", w.n_links},
          {"t", w.t},
          {"traffic", w.traffic},
          {"temporal", w.temporal},
          {"road", w.road},
          {"mask", std::vector<int>(w.mask.begin(), w.mask.end())}};
}

nn::FeatureWindow window_from_json(const json& j) {
  nn::FeatureWindow w;
  w.n_links = j.at("n_links");
  w.t = j.at("t");
  w.traffic = j.at("traffic").get<std::vector<double>>();
  w.temporal = j.at("temporal").get<std::vector<int>>();
  w.road = j.at("road").get<std::vector<int>>();
  auto mask = j.at("mask").get<std::vector<int>>();
  w.mask.assign(mask.begin(), mask.end());
  return w;
}

json samples_to_json(const std::vector<nn::Sample>& samples) {
  json arr = json::array();
  for (const auto& s : samples)
    arr.push_back({{"realtime", window_to_json(s.realtime)},
                   {"historical", window_to_json(s.historical)},
                   {"target", s.target},
                   {"abnormal_flag", std::vector<int>(s.abnormal_flag.begin(), s.abnormal_flag.end())},
                   {"anchor_flat", s.anchor_flat}});
  return arr;
}

std::vector<nn::Sample> samples_from_json(const json& arr) {
  std::vector<nn::Sample> out;
  for (const auto& j : arr) {
    nn::Sample s;
    s.realtime = window_from_json(j.at("realtime"));
    s.historical = window_from_json(j.at("historical"));
    s.target = j.at("target").get<std::vector<double>>();
    auto fl = j.at("abnormal_flag").get<std::vector<int>>();
    s.abnormal_flag.assign(fl.begin(), fl.end());
    s.anchor_flat = j.at("anchor_flat");
    out.push_back(std::move(s));
  }
  return out;
}

json bundle_to_json(const DatasetBundle& ds) {
  return {{"link_order", ds.link_order},
          {"grid",
           {{"n_days", ds.grid.n_days},
            {"day_start_bin", ds.grid.day_start_bin},
            {"day_end_bin", ds.grid.day_end_bin},
            {"window_s", ds.grid.window_s}}},
          {"stats",
           {{"mean", std::vector<double>(ds.stats.mean.begin(), ds.stats.mean.end())},
            {"stddev", std::vector<double>(ds.stats.stddev.begin(), ds.stats.stddev.end())}}},
          {"split",
           {{"train_days", ds.split.train_days},
            {"val_days", ds.split.val_days},
            {"test_days", ds.split.test_days}}},
          {"train", samples_to_json(ds.train)},
          {"val", samples_to_json(ds.val)},
          {"test", samples_to_json(ds.test)}};
}

DatasetBundle bundle_from_json(const json& j) {
  DatasetBundle ds;
  ds.link_order = j.at("link_order").get<std::vector<std::string>>();
  const auto& g = j.at("grid");
  ds.grid.n_days = g.at("n_days");
  ds.grid.day_start_bin = g.at("day_start_bin");
  ds.grid.day_end_bin = g.at("day_end_bin");
  ds.grid.window_s = g.at("window_s");
  auto mean = j.at("stats").at("mean").get<std::vector<double>>();
  auto sd = j.at("stats").at("stddev").get<std::vector<double>>();
  std::copy(mean.begin(), mean.end(), ds.stats.mean.begin());
  std::copy(sd.begin(), sd.end(), ds.stats.stddev.begin());
  ds.split.train_days = j.at("split").at("train_days").get<std::vector<int>>();
  ds.split.val_days = j.at("split").at("val_days").get<std::vector<int>>();
  ds.split.test_days = j.at("split").at("test_days").get<std::vector<int>>();
  ds.train = samples_from_json(j.at("train"));
  ds.val = samples_from_json(j.at("val"));
  ds.test = samples_from_json(j.at("test"));
  return ds;
}

// ---- flags CSV ----

void write_flags_csv(const std::string& path, const DatasetFlags& flags, const WindowGrid& grid) {
  std::ofstream out(path);
  out << "link_id,window_start,measure,value,threshold,flag\n";
  out.precision(10);
  auto dump = [&](const std::map<std::string, FlagSeries>& m) {
    for (const auto& [link_id, fs] : m)
      for (int flat = 0; flat < grid.total_bins(); ++flat) {
        auto i = static_cast<std::size_t>(flat);
        out << link_id << ',' << iso8601(grid.window_start(flat)) << ',' << fs.measure << ','
            << fs.value[i] << ',' << fs.threshold[i] << ',' << static_cast<int>(fs.flag[i])
            << '\n';
      }
  };
  dump(flags.delay);
  dump(flags.queue);
}

DatasetFlags read_flags_csv(const std::string& path, const WindowGrid& grid) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  DatasetFlags flags;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 6) throw std::invalid_argument("flags csv: bad row: " + line);
    const std::string& link_id = f[0];
    const std::string& measure = f[2];
    auto& m = measure == "delay" ? flags.delay : flags.queue;
    auto& fs = m[link_id];
    if (fs.flag.empty()) {
      fs.link_id = link_id;
      fs.measure = measure;
      fs.flag.assign(static_cast<std::size_t>(grid.total_bins()), 0);
      fs.value.assign(static_cast<std::size_t>(grid.total_bins()), 0.0);
      fs.threshold.assign(static_cast<std::size_t>(grid.total_bins()), 0.0);
    }
    int flat = grid.flat_index(parse_iso8601(f[1]));
    if (flat < 0) continue;
    auto i = static_cast<std::size_t>(flat);
    fs.value[i] = std::stod(f[3]);
    fs.threshold[i] = std::stod(f[4]);
    fs.flag[i] = static_cast<char>(std::stoi(f[5]));
  }
  return flags;
}

// ---- prediction / target CSVs ----

void write_pred_csv(const std::string& path, const std::vector<nn::Sample>& samples,
                    const std::vector<std::vector<double>>& preds,
                    const std::vector<std::string>& link_order) {
  std::ofstream out(path);
  out << "sample,anchor_flat,link_id,horizon_min,delay,queue\n";
  out.precision(10);
  const int n = static_cast<int>(link_order.size());
  for (std::size_t si = 0; si < preds.size(); ++si) {
    const auto& y = preds[si];
    const int p = static_cast<int>(y.size()) / (n * nn::kTargets);
    for (int li = 0; li < n; ++li)
      for (int h = 0; h < p; ++h) {
        std::size_t idx = (static_cast<std::size_t>(li) * p + h) * nn::kTargets;
        out << si << ',' << samples[si].anchor_flat << ',' << link_order[static_cast<std::size_t>(li)]
            << ',' << (h + 1) * 15 << ',' << y[idx] << ',' << y[idx + 1] << '\n';
      }
  }
}

void write_target_csv(const std::string& path, const std::vector<nn::Sample>& samples,
                      const std::vector<std::string>& link_order) {
  std::vector<std::vector<double>> tgts;
  for (const auto& s : samples) tgts.push_back(s.target);
  write_pred_csv(path, samples, tgts, link_order);
}

struct FlatPreds {
  std::vector<nn::Sample> skeleton;  // anchor_flat + target filled
  std::vector<std::vector<double>> values;
  std::vector<std::string> link_order;
};

FlatPreds read_pred_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::string line;
  std::getline(in, line);
  struct Row {
    std::size_t sample;
    int anchor;
    std::string link;
    int horizon;
    double delay, queue;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 6) throw std::invalid_argument("pred csv: bad row: " + line);
    rows.push_back({static_cast<std::size_t>(std::stoul(f[0])), std::stoi(f[1]), f[2],
                    std::stoi(f[3]), std::stod(f[4]), std::stod(f[5])});
  }
  if (rows.empty()) throw std::invalid_argument("pred csv: no rows in " + path);

  FlatPreds fp;
  std::map<std::string, int> link_idx;
  int max_h = 0;
  std::size_t n_samples = 0;
  for (const auto& r : rows) {
    if (!link_idx.count(r.link)) {
      link_idx[r.link] = static_cast<int>(fp.link_order.size());
      fp.link_order.push_back(r.link);
    }
    max_h = std::max(max_h, r.horizon / 15);
    n_samples = std::max(n_samples, r.sample + 1);
  }
  const int n = static_cast<int>(fp.link_order.size());
  fp.skeleton.resize(n_samples);
  fp.values.assign(n_samples,
                   std::vector<double>(static_cast<std::size_t>(n) * max_h * nn::kTargets, 0.0));
  for (const auto& r : rows) {
    auto& s = fp.skeleton[r.sample];
    s.anchor_flat = r.anchor;
    std::size_t idx =
        (static_cast<std::size_t>(link_idx[r.link]) * max_h + (r.horizon / 15 - 1)) * nn::kTargets;
    fp.values[r.sample][idx] = r.delay;
    fp.values[r.sample][idx + 1] = r.queue;
  }
  return fp;
}

std::vector<double> flat_a_fix(const LinkGraph& g) {
  auto adj = build_fixed_adjacency(g);
  std::vector<double> a;
  for (const auto& row : adj.normalized)
    for (double v : row) a.push_back(v);
  return a;
}

void write_train_log(const std::string& path, const nn::TrainResult& r) {
  std::ofstream out(path);
  out << "epoch,train_loss,val_loss,val_mae_delay,val_mae_queue,gate_mean_normal,"
         "gate_mean_abnormal\n";
  out.precision(10);
  for (const auto& row : r.log)
    out << row.epoch << ',' << row.train_loss << ',' << row.val_loss << ',' << row.val_mae_delay
        << ',' << row.val_mae_queue << ',' << row.gate_mean_normal << ',' << row.gate_mean_abnormal
        << '\n';
}

json eval_to_json(const EvalReport& rep) {
  json out = json::object();
  for (const auto& [key, c] : rep.cells)
    out[key] = {{"mae", c.mae}, {"rmse", c.rmse}, {"n", c.n}};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arterial traffic-state pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config with all stage defaults");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run the synthetic corridor simulator");
  std::string sim_scenario, sim_out;
  sim->add_option("--scenario", sim_scenario, "scenario JSON")->required();
  sim->add_option("--out", sim_out, "output directory")->required();

  // extract
  auto* ext = app.add_subcommand("extract", "map-match trajectories and aggregate measures");
  std::string ext_basemap, ext_traj, ext_out;
  ext->add_option("--basemap", ext_basemap)->required();
  ext->add_option("--trajectories", ext_traj)->required();
  ext->add_option("--out", ext_out)->required();

  // detect
  auto* det = app.add_subcommand("detect", "flag anomalous windows");
  std::string det_series, det_out;
  double det_k = 2.0;
  det->add_option("--series", det_series, "windows CSV")->required();
  det->add_option("--k", det_k, "MAD multiplier");
  det->add_option("--out", det_out)->required();

  // dataset
  auto* dat = app.add_subcommand("dataset", "build train/val/test samples");
  std::string dat_series, dat_flags, dat_split, dat_basemap, dat_out;
  dat->add_option("--series", dat_series)->required();
  dat->add_option("--flags", dat_flags)->required();
  dat->add_option("--split", dat_split, "split JSON (train/val/test day lists)");
  dat->add_option("--basemap", dat_basemap)->required();
  dat->add_option("--out", dat_out)->required();

  // train
  auto* trn = app.add_subcommand("train", "train the dual-expert model");
  std::string trn_dataset, trn_basemap, trn_out;
  trn->add_option("--dataset", trn_dataset)->required();
  trn->add_option("--basemap", trn_basemap)->required();
  trn->add_option("--out", trn_out)->required();

  // predict
  auto* prd = app.add_subcommand("predict", "run inference on the test split");
  std::string prd_ckpt, prd_dataset, prd_out, prd_split = "test";
  prd->add_option("--checkpoint", prd_ckpt)->required();
  prd->add_option("--dataset", prd_dataset)->required();
  prd->add_option("--split", prd_split, "train|val|test");
  prd->add_option("--out", prd_out)->required();

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "score predictions against targets");
  std::string evl_pred, evl_truth, evl_flags, evl_out;
  evl->add_option("--pred", evl_pred)->required();
  evl->add_option("--truth", evl_truth)->required();
  evl->add_option("--flags", evl_flags)->required();
  evl->add_option("--out", evl_out)->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "train and score model variants");
  std::string abl_dataset, abl_basemap, abl_flags, abl_out;
  std::vector<std::string> abl_variants = ablation_variants();
  abl->add_option("--dataset", abl_dataset)->required();
  abl->add_option("--basemap", abl_basemap)->required();
  abl->add_option("--flags", abl_flags)->required();
  abl->add_option("--variants", abl_variants, "variant names");
  abl->add_option("--out", abl_out)->required();

  // plot
  auto* plt = app.add_subcommand("plot", "render a CSV as an SVG line chart");
  std::string plt_series, plt_out, plt_title = "series";
  plt->add_option("--series", plt_series, "CSV with a header; numeric columns are plotted")
      ->required();
  plt->add_option("--out", plt_out)->required();
  plt->add_option("--title", plt_title);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path);

    if (*sim) {
      SimScenario sc = scenario_from_json(load_json(sim_scenario));
      WindowGrid grid = cfg.grid;
      grid.n_days = sc.days;
      auto res = simulate(sc, grid);
      fs::create_directories(sim_out);
      write_trajectory_csv(sim_out + "/trajectories.csv", res.probes);
      write_ground_truth_csv(sim_out + "/ground_truth.csv", res.gt);
      save_json(sim_out + "/basemap.json", basemap_to_json(sc.graph));
      cfg.seed = sc.seed;
      write_manifest(sim_out, cfg, {sim_scenario});
    } else if (*ext) {
      LinkGraph graph = load_basemap(ext_basemap);
      auto points = read_trajectory_csv(ext_traj);
      MeasureAccumulator acc(graph, cfg.grid, cfg.extract);
      acc.add_points(points);
      fs::create_directories(ext_out);
      write_window_csv(ext_out + "/windows.csv", acc.records());
      write_manifest(ext_out, cfg, {ext_basemap, ext_traj});
    } else if (*det) {
      auto records = read_window_csv(det_series);
      std::set<std::string> link_ids;
      for (const auto& r : records) link_ids.insert(r.link_id);
      std::vector<int> all_days(static_cast<std::size_t>(cfg.grid.n_days));
      std::iota(all_days.begin(), all_days.end(), 0);
      std::vector<LinkSeries> series;
      for (const auto& id : link_ids) series.push_back(window_series(records, id, cfg.grid));
      AnomalyConfig acfg = cfg.anomaly;
      acfg.k = det_k;
      DatasetFlags flags = label_dataset(series, all_days, acfg);
      fs::create_directories(det_out);
      write_flags_csv(det_out + "/flags.csv", flags, cfg.grid);
      std::cout << "prevalence delay=" << flags.prevalence("delay")
                << " queue=" << flags.prevalence("queue") << '\n';
      write_manifest(det_out, cfg, {det_series});
    } else if (*dat) {
      LinkGraph graph = load_basemap(dat_basemap);
      auto records = read_window_csv(dat_series);
      DatasetFlags flags = read_flags_csv(dat_flags, cfg.grid);
      SplitConfig split;
      std::vector<std::string> inputs = {dat_series, dat_flags, dat_basemap};
      if (!dat_split.empty()) {
        json js = load_json(dat_split);
        split.train_days = js.at("train_days").get<std::vector<int>>();
        split.val_days = js.at("val_days").get<std::vector<int>>();
        split.test_days = js.at("test_days").get<std::vector<int>>();
        inputs.push_back(dat_split);
      } else {
        split = chronological_split(cfg.grid.n_days);
      }
      std::vector<LinkSeries> series;
      for (const auto& l : graph.links)
        series.push_back(window_series(records, l.id, cfg.grid, split.train_days));
      auto ds = build_dataset(series, flags, graph, split, cfg.holidays, cfg.model.t_in,
                              cfg.model.horizon);
      fs::create_directories(dat_out);
      save_json(dat_out + "/dataset.json", bundle_to_json(ds));
      write_target_csv(dat_out + "/targets.csv", ds.test, ds.link_order);
      write_manifest(dat_out, cfg, inputs);
    } else if (*trn) {
      DatasetBundle ds = bundle_from_json(load_json(trn_dataset));
      LinkGraph graph = load_basemap(trn_basemap);
      nn::ModelConfig mc = cfg.model;
      mc.n_links = static_cast<int>(ds.link_order.size());
      mc.seed = cfg.seed;
      mc.vocab_road = std::max(mc.vocab_road, static_cast<int>(graph.links.size()));
      if (mc.target_mean_delay == 0.0 && mc.target_mean_queue == 0.0) {
        double md = 0.0, mq = 0.0;
        std::size_t n = 0;
        for (const auto& s : ds.train)
          for (std::size_t i = 0; i + 1 < s.target.size(); i += nn::kTargets) {
            md += s.target[i];
            mq += s.target[i + 1];
            ++n;
          }
        if (n) {
          mc.target_mean_delay = md / static_cast<double>(n);
          mc.target_mean_queue = mq / static_cast<double>(n);
        }
      }
      nn::AastGcn model(mc, flat_a_fix(graph));
      auto result = nn::train(model, ds.train, ds.val);
      fs::create_directories(trn_out);
      save_json(trn_out + "/checkpoint.json", nn::checkpoint_to_json(model));
      save_json(trn_out + "/model_config.json", nn::config_to_json(mc));
      write_train_log(trn_out + "/training_log.csv", result);
      std::cout << "best_epoch=" << result.best_epoch << " best_val_loss=" << result.best_val_loss
                << '\n';
      write_manifest(trn_out, cfg, {trn_dataset, trn_basemap});
    } else if (*prd) {
      nn::AastGcn model = nn::checkpoint_from_json(load_json(prd_ckpt));
      DatasetBundle ds = bundle_from_json(load_json(prd_dataset));
      const auto& samples = prd_split == "train" ? ds.train
                            : prd_split == "val" ? ds.val
                                                 : ds.test;
      auto preds = predict_all(model, samples);
      write_pred_csv(prd_out, samples, preds, ds.link_order);
    } else if (*evl) {
      FlatPreds pred = read_pred_csv(evl_pred);
      FlatPreds truth = read_pred_csv(evl_truth);
      if (pred.values.size() != truth.values.size())
        throw std::invalid_argument("evaluate: pred/truth sample counts differ");
      WindowGrid grid = cfg.grid;
      DatasetFlags flags = read_flags_csv(evl_flags, grid);
      for (std::size_t i = 0; i < truth.skeleton.size(); ++i)
        truth.skeleton[i].target = truth.values[i];
      EvalReport rep = evaluate(truth.skeleton, pred.values, flags, grid, truth.link_order);
      save_json(evl_out, eval_to_json(rep));
      std::cout << "delay MAE=" << rep.mae("delay") << " queue MAE=" << rep.mae("queue") << '\n';
    } else if (*abl) {
      DatasetBundle ds = bundle_from_json(load_json(abl_dataset));
      LinkGraph graph = load_basemap(abl_basemap);
      DatasetFlags flags = read_flags_csv(abl_flags, ds.grid);
      nn::ModelConfig mc = cfg.model;
      mc.n_links = static_cast<int>(ds.link_order.size());
      mc.seed = cfg.seed;
      mc.vocab_road = std::max(mc.vocab_road, static_cast<int>(graph.links.size()));
      AblationContext ctx{&ds, &flags, flat_a_fix(graph)};
      fs::create_directories(abl_out);
      std::ofstream out(abl_out + "/ablation.csv");
      out << "variant,mae_delay_normal,mae_delay_abnormal,mae_queue_normal,mae_queue_abnormal,"
             "rel_delay_normal,rel_delay_abnormal,gate_mean_normal,gate_mean_abnormal,best_epoch\n";
      out.precision(10);
      std::vector<AblationRow> rows;
      for (const auto& v : abl_variants) rows.push_back(run_variant(v, mc, ctx));
      for (auto& r : rows) {
        r.rel_delay_normal = r.mae_delay_normal / rows[0].mae_delay_normal - 1.0;
        if (rows[0].mae_delay_abnormal > 0.0)
          r.rel_delay_abnormal = r.mae_delay_abnormal / rows[0].mae_delay_abnormal - 1.0;
        out << r.variant << ',' << r.mae_delay_normal << ',' << r.mae_delay_abnormal << ','
            << r.mae_queue_normal << ',' << r.mae_queue_abnormal << ',' << r.rel_delay_normal
            << ',' << r.rel_delay_abnormal << ',' << r.gate_mean_normal << ','
            << r.gate_mean_abnormal << ',' << r.best_epoch << '\n';
      }
      write_manifest(abl_out, cfg, {abl_dataset, abl_basemap, abl_flags});
    } else if (*plt) {
      std::ifstream in(plt_series);
      if (!in) throw std::invalid_argument("cannot open " + plt_series);
      std::string line;
      std::getline(in, line);
      auto headers = split_csv_line(line);
      std::vector<PlotSeries> series(headers.size());
      for (std::size_t i = 0; i < headers.size(); ++i) series[i].label = headers[i];
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        for (std::size_t i = 0; i < f.size() && i < series.size(); ++i) {
          try {
            series[i].y.push_back(std::stod(f[i]));
          } catch (const std::exception&) {
            // non-numeric column, skip
          }
        }
      }
      series.erase(std::remove_if(series.begin(), series.end(),
                                  [](const PlotSeries& s) { return s.y.empty(); }),
                   series.end());
      write_svg_chart(plt_out, plt_title, series);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    // malformed configs / input files are validation errors
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
