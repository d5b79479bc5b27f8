#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "arterial/pipeline.hpp"

using namespace arterial;

namespace {

WindowGrid grid_days(int days) {
  WindowGrid g;
  g.n_days = days;
  return g;
}

// one link, horizon 4; targets/preds as flat [1*4*2] vectors
nn::Sample sample_at(int anchor_flat, std::vector<double> target) {
  nn::Sample s;
  s.anchor_flat = anchor_flat;
  s.target = std::move(target);
  s.abnormal_flag = {0};
  return s;
}

DatasetFlags flags_with(const WindowGrid& grid, const std::string& link,
                        const std::vector<int>& delay_flats) {
  DatasetFlags f;
  auto& fs = f.delay[link];
  fs.link_id = link;
  fs.measure = "delay";
  fs.flag.assign(static_cast<std::size_t>(grid.total_bins()), 0);
  fs.value.assign(static_cast<std::size_t>(grid.total_bins()), 0.0);
  fs.threshold.assign(static_cast<std::size_t>(grid.total_bins()), 0.0);
  for (int flat : delay_flats) fs.flag[static_cast<std::size_t>(flat)] = 1;
  return f;
}

LinkSeries const_series(const std::string& id, const WindowGrid& grid, double delay, double queue) {
  LinkSeries s;
  s.link_id = id;
  s.grid = grid;
  s.cells.assign(static_cast<std::size_t>(grid.total_bins()), {});
  s.observed.assign(static_cast<std::size_t>(grid.total_bins()), 1);
  for (int flat = 0; flat < grid.total_bins(); ++flat) {
    auto& c = s.cells[static_cast<std::size_t>(flat)];
    c.link_id = id;
    c.window_start = grid.window_start(flat);
    c.n_vehicles = 12;
    c.control_delay_s = delay;
    c.queue_m = queue;
    c.speed_mph = 30.0;
    c.travel_time_s = 60.0;
  }
  return s;
}

LinkGraph tiny_graph() {
  LocalFrame frame({-81.4, 28.5});
  LinkGraph g;
  g.intersections = {{"A", frame.to_lonlat({0, 0})}, {"B", frame.to_lonlat({400, 0})}};
  Link l;
  l.id = "L0";
  l.upstream = "A";
  l.downstream = "B";
  l.geometry = {g.intersections[0].position, g.intersections[1].position};
  l.lanes = 2;
  l.speed_limit_mph = 40.0;
  l.road_id = "R1";
  g.links.push_back(l);
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("evaluate: hand-computed MAE and RMSE") {
  WindowGrid grid = grid_days(2);
  // errors {1, 0, 0, 2} on delay across the 4 horizons
  auto s = sample_at(10, {5, 0, 5, 0, 5, 0, 5, 0});
  std::vector<std::vector<double>> preds = {{6, 0, 5, 0, 5, 0, 7, 0}};
  auto rep = evaluate({s}, preds, DatasetFlags{}, grid, {"L0"});
  CHECK(rep.mae("delay") == doctest::Approx(0.75));
  CHECK(rep.find("delay", "overall", "all")->rmse == doctest::Approx(std::sqrt(5.0 / 4.0)));
  CHECK(rep.find("delay", "overall", "all")->n == 4);
  // per-horizon slices
  CHECK(rep.mae("delay", "overall", "15") == doctest::Approx(1.0));
  CHECK(rep.mae("delay", "overall", "30") == doctest::Approx(0.0));
  CHECK(rep.mae("delay", "overall", "60") == doctest::Approx(2.0));
  // queue is exact
  CHECK(rep.mae("queue") == doctest::Approx(0.0));
}

TEST_CASE("evaluate: perfect prediction gives zero error; RMSE >= MAE always") {
  WindowGrid grid = grid_days(2);
  auto s = sample_at(7, {1, 2, 3, 4, 5, 6, 7, 8});
  auto rep = evaluate({s}, {s.target}, DatasetFlags{}, grid, {"L0"});
  CHECK(rep.mae("delay") == 0.0);
  CHECK(rep.mae("queue") == 0.0);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<nn::Sample> samples;
  std::vector<std::vector<double>> preds;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> t(8), p(8);
    for (auto& v : t) v = g(rng);
    for (auto& v : p) v = g(rng);
    samples.push_back(sample_at(3 + i, t));
    preds.push_back(p);
  }
  auto r2 = evaluate(samples, preds, DatasetFlags{}, grid, {"L0"});
  for (const auto& [key, c] : r2.cells) CHECK(c.rmse >= c.mae - 1e-12);
}

TEST_CASE("evaluate: abnormal subset split by target-window flag, counts add up") {
  WindowGrid grid = grid_days(2);
  auto flags = flags_with(grid, "L0", {12});  // one abnormal window
  auto s = sample_at(10, {5, 5, 5, 5, 5, 5, 5, 5});  // targets bins 11..14
  std::vector<std::vector<double>> preds = {{6, 6, 8, 8, 6, 6, 6, 6}};
  auto rep = evaluate({s}, preds, flags, grid, {"L0"});
  // horizon step 2 (bin 12) is abnormal: delay error 3
  CHECK(rep.mae("delay", "abnormal") == doctest::Approx(3.0));
  CHECK(rep.mae("delay", "normal") == doctest::Approx(1.0));
  CHECK(rep.find("delay", "normal", "all")->n + rep.find("delay", "abnormal", "all")->n ==
        rep.find("delay", "overall", "all")->n);
  // queue flags inherit the same union
  CHECK(rep.mae("queue", "abnormal") == doctest::Approx(3.0));
}

TEST_CASE("evaluate: empty subset is absent, not zero") {
  WindowGrid grid = grid_days(2);
  auto s = sample_at(10, {1, 1, 1, 1, 1, 1, 1, 1});
  auto rep = evaluate({s}, {s.target}, DatasetFlags{}, grid, {"L0"});
  CHECK(rep.find("delay", "abnormal", "all") == nullptr);
  CHECK_THROWS_AS(rep.mae("delay", "abnormal"), std::out_of_range);
}

TEST_CASE("evaluate equals a brute-force recomputation within 1e-9") {
  WindowGrid grid = grid_days(3);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g(10.0, 4.0);
  std::uniform_int_distribution<int> coin(0, 4);
  const std::vector<std::string> links = {"A", "B", "C"};
  DatasetFlags flags;
  for (const auto& id : links) {
    auto& fs = flags.delay[id];
    fs.link_id = id;
    fs.measure = "delay";
    fs.flag.assign(static_cast<std::size_t>(grid.total_bins()), 0);
    for (auto& c : fs.flag) c = coin(rng) == 0 ? 1 : 0;
  }
  std::vector<nn::Sample> samples;
  std::vector<std::vector<double>> preds;
  const int n = 3, p = 4;
  for (int i = 0; i < 30; ++i) {
    nn::Sample s;
    s.anchor_flat = 5 + i;
    s.target.resize(static_cast<std::size_t>(n) * p * 2);
    std::vector<double> y(s.target.size());
    for (auto& v : s.target) v = g(rng);
    for (auto& v : y) v = g(rng);
    samples.push_back(s);
    preds.push_back(y);
  }
  auto rep = evaluate(samples, preds, flags, grid, links);

  // independent accumulation over flat (sample, link, horizon, measure) cells
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t cnt = 0;
  double abs_ab = 0.0;
  std::size_t cnt_ab = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (int li = 0; li < n; ++li)
      for (int h = 0; h < p; ++h) {
        std::size_t idx = (static_cast<std::size_t>(li) * p + h) * 2;
        double e = preds[i][idx] - samples[i].target[idx];
        abs_sum += std::fabs(e);
        sq_sum += e * e;
        ++cnt;
        if (flags.delay[links[static_cast<std::size_t>(li)]]
                .flag[static_cast<std::size_t>(samples[i].anchor_flat + h + 1)]) {
          abs_ab += std::fabs(e);
          ++cnt_ab;
        }
      }
  CHECK(rep.mae("delay") == doctest::Approx(abs_sum / cnt).epsilon(1e-9));
  CHECK(rep.find("delay", "overall", "all")->rmse ==
        doctest::Approx(std::sqrt(sq_sum / cnt)).epsilon(1e-9));
  CHECK(rep.mae("delay", "abnormal") == doctest::Approx(abs_ab / cnt_ab).epsilon(1e-9));
}

// ---- baselines ----

namespace {

// Build a 1-link dataset from a time-of-day value function, per-day offsets.
DatasetBundle dataset_from(double (*tod_fn)(int bin), const std::vector<double>& day_offset,
                           const SplitConfig& split) {
  WindowGrid grid = grid_days(static_cast<int>(day_offset.size()));
  LinkSeries s = const_series("L0", grid, 0.0, 0.0);
  const int bpd = grid.bins_per_day();
  for (int flat = 0; flat < grid.total_bins(); ++flat) {
    double v = tod_fn(flat % bpd) + day_offset[static_cast<std::size_t>(flat / bpd)];
    s.cells[static_cast<std::size_t>(flat)].control_delay_s = v;
    s.cells[static_cast<std::size_t>(flat)].queue_m = 2.0 * v;
  }
  return build_dataset({s}, DatasetFlags{}, tiny_graph(), split);
}

double wave(int bin) { return 20.0 + 10.0 * std::sin(bin * 0.4); }
double flat20(int) { return 20.0; }

EvalReport score(const DatasetBundle& ds, const std::vector<std::vector<double>>& preds) {
  return evaluate(ds.test, preds, DatasetFlags{}, ds.grid, ds.link_order);
}

}  // namespace

TEST_CASE("baselines: constant series gives zero error for both") {
  SplitConfig split;
  split.train_days = {0, 1, 2, 3, 4, 5, 6};
  split.test_days = {7};
  auto ds = dataset_from(flat20, std::vector<double>(8, 0.0), split);
  std::vector<std::vector<double>> pp, ph;
  for (const auto& s : ds.test) {
    pp.push_back(baseline_persistence(s, ds.stats, 4));
    ph.push_back(baseline_historical(s, ds.stats, 4));
  }
  CHECK(score(ds, pp).mae("delay") == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(score(ds, ph).mae("delay") == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(score(ds, ph).mae("queue") == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("baselines: periodic series favors historical_average at 60 min") {
  SplitConfig split;
  split.train_days = {0, 1, 2, 3, 4, 5, 6};
  split.test_days = {7};
  auto ds = dataset_from(wave, std::vector<double>(8, 0.0), split);
  std::vector<std::vector<double>> pp, ph;
  for (const auto& s : ds.test) {
    pp.push_back(baseline_persistence(s, ds.stats, 4));
    ph.push_back(baseline_historical(s, ds.stats, 4));
  }
  auto rp = score(ds, pp), rh = score(ds, ph);
  CHECK(rh.mae("delay", "overall", "60") < rp.mae("delay", "overall", "60"));
  CHECK(rh.mae("delay") < rp.mae("delay"));
}

TEST_CASE("baselines: persistence wins immediately after a step change") {
  SplitConfig split;
  split.train_days = {0, 1, 2, 3, 4, 5, 6};
  split.test_days = {7};
  std::vector<double> offsets(8, 0.0);
  offsets[7] = 15.0;  // the whole test day steps up by 15
  auto ds = dataset_from(flat20, offsets, split);
  std::vector<std::vector<double>> pp, ph;
  for (const auto& s : ds.test) {
    pp.push_back(baseline_persistence(s, ds.stats, 4));
    ph.push_back(baseline_historical(s, ds.stats, 4));
  }
  auto rp = score(ds, pp), rh = score(ds, ph);
  CHECK(rp.mae("delay") < rh.mae("delay"));
  CHECK(rp.mae("delay") == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(rh.mae("delay") == doctest::Approx(15.0).epsilon(1e-6));
}

// ---- sensitivity ----

TEST_CASE("sensitivity: prevalence non-increasing in k, report shape") {
  WindowGrid grid = grid_days(14);
  LinkSeries s = const_series("L0", grid, 10.0, 20.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& c : s.cells) {
    c.control_delay_s += g(rng);
    c.queue_m += g(rng);
  }
  // a handful of genuine excursions
  for (int flat : {40, 200, 420, 600}) {
    s.cells[static_cast<std::size_t>(flat)].control_delay_s += 25.0;
    s.cells[static_cast<std::size_t>(flat)].queue_m += 50.0;
  }
  std::vector<int> train_days;
  for (int d = 0; d < 14; ++d) train_days.push_back(d);
  auto rows = sensitivity_k({s}, train_days, {1.0, 1.5, 2.0, 2.5, 3.0});
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].prevalence_delay <= rows[i - 1].prevalence_delay);
    CHECK(rows[i].prevalence_queue <= rows[i - 1].prevalence_queue);
  }
  CHECK(rows[0].prevalence_delay > 0.0);
  CHECK_FALSE(rows[0].has_abnormal_mae);
}

TEST_CASE("sensitivity: includes abnormal-subset MAE when predictions supplied") {
  WindowGrid grid = grid_days(14);
  LinkSeries s = const_series("L0", grid, 10.0, 20.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& c : s.cells) c.control_delay_s += g(rng);
  for (int d = 0; d < 14; ++d)
    s.cells[static_cast<std::size_t>(d * grid.bins_per_day() + 30)].control_delay_s += 30.0;
  std::vector<int> train_days;
  for (int d = 0; d < 14; ++d) train_days.push_back(d);

  std::vector<nn::Sample> test;
  std::vector<std::vector<double>> preds;
  for (int i = 20; i < 40; ++i) {
    nn::Sample smp;
    smp.anchor_flat = i;
    smp.target = {10, 20, 10, 20, 10, 20, 10, 20};
    test.push_back(smp);
    preds.push_back({11, 21, 11, 21, 11, 21, 11, 21});
  }
  std::vector<std::string> order = {"L0"};
  auto rows = sensitivity_k({s}, train_days, {1.0, 2.0}, {}, &test, &preds, &order);
  CHECK(rows[0].has_abnormal_mae);
  CHECK(rows[0].mae_delay_abnormal == doctest::Approx(1.0));
}

// ---- ablation plumbing ----

TEST_CASE("ablation variants map to exactly one switch") {
  nn::ModelConfig base;
  base.n_links = 2;
  CHECK(ablation_variant(base, "full").use_gcn);
  CHECK_FALSE(ablation_variant(base, "no_gcn").use_gcn);
  CHECK_FALSE(ablation_variant(base, "no_tcn").use_tcn);
  CHECK_FALSE(ablation_variant(base, "no_embedding").use_embedding);
  CHECK_FALSE(ablation_variant(base, "no_adaptive").use_adaptive);
  CHECK_FALSE(ablation_variant(base, "no_gate").use_gate);
  auto r = ablation_variant(base, "R_plus_H");
  CHECK_FALSE(r.use_dual_expert);
  CHECK(r.use_historical);
  auto o = ablation_variant(base, "only_R");
  CHECK_FALSE(o.use_dual_expert);
  CHECK_FALSE(o.use_historical);
  CHECK_THROWS_AS(ablation_variant(base, "no_such"), std::invalid_argument);
}

TEST_CASE("variant full reproduces the baseline training run exactly") {
  // tiny dataset, 2 links, few epochs
  WindowGrid grid = grid_days(4);
  LocalFrame frame({-81.4, 28.5});
  LinkGraph g;
  g.intersections = {{"A", frame.to_lonlat({0, 0})},
                     {"B", frame.to_lonlat({400, 0})},
                     {"C", frame.to_lonlat({800, 0})}};
  for (int i = 0; i < 2; ++i) {
    Link l;
    l.id = "L" + std::to_string(i);
    l.upstream = i == 0 ? "A" : "B";
    l.downstream = i == 0 ? "B" : "C";
    l.geometry = {g.intersections[static_cast<std::size_t>(i)].position,
                  g.intersections[static_cast<std::size_t>(i + 1)].position};
    l.road_id = "R1";
    g.links.push_back(l);
  }
  g.movements.emplace_back("L0", "L1");
  g.validate();

  std::vector<LinkSeries> series;
  for (int li = 0; li < 2; ++li) {
    LinkSeries s = const_series("L" + std::to_string(li), grid, 10.0 + li, 20.0);
    std::mt19937_64 rng(static_cast<std::uint64_t>(li) + 1);
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& c : s.cells) c.control_delay_s += n(rng);
    series.push_back(s);
  }
  SplitConfig split;
  split.train_days = {0, 1};
  split.val_days = {2};
  split.test_days = {3};
  auto ds = build_dataset(series, DatasetFlags{}, g, split);

  nn::ModelConfig cfg;
  cfg.n_links = 2;
  cfg.hidden = 8;
  cfg.embed_traffic = 4;
  cfg.embed_temporal = 2;
  cfg.embed_road = 2;
  cfg.blocks = 1;
  cfg.dilations = {1};
  cfg.d_node = 2;
  cfg.dropout = 0.0;
  cfg.epochs = 3;
  cfg.patience = 0;
  cfg.batch = 16;
  cfg.vocab_road = 4;
  auto adj = build_fixed_adjacency(g);
  std::vector<double> a_fix;
  for (const auto& row : adj.normalized)
    for (double v : row) a_fix.push_back(v);

  DatasetFlags flags;
  AblationContext ctx{&ds, &flags, a_fix};
  auto row = run_variant("full", cfg, ctx);

  nn::AastGcn direct(cfg, a_fix);
  auto direct_result = nn::train(direct, ds.train, ds.val);
  auto preds = predict_all(direct, ds.test);
  auto rep = evaluate(ds.test, preds, flags, ds.grid, ds.link_order);
  CHECK(row.mae_delay_normal == doctest::Approx(rep.mae("delay", "normal")).epsilon(1e-12));
  CHECK(row.best_epoch == direct_result.best_epoch);
}

// ---- accumulator, manifest, svg ----

TEST_CASE("measure accumulator windows a synthetic journey") {
  LinkGraph g = tiny_graph();
  const Link& link = g.link("L0");
  std::vector<RawPoint> pts;
  // constant 40 mph eastbound across the 400 m link, inside window bin 24
  double t0 = 24 * 900.0 + 60.0;
  for (int i = 0;; ++i) {
    double chain = i * 3.0 * 40.0 * kMphToMps;
    if (chain > 400.0) break;
    Vec2 xy = link.polyline().point_at(std::min(chain, link.length_m));
    LonLat ll = link.frame().to_lonlat(xy);
    pts.push_back({"veh1", ll.lon, ll.lat, t0 + i * 3.0, 40.0, 90.0});
  }
  WindowGrid grid = grid_days(1);
  MeasureAccumulator acc(g, grid);
  acc.add_points(pts);
  auto recs = acc.records();
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].link_id == "L0");
  CHECK(recs[0].n_vehicles == 1);
  CHECK(recs[0].control_delay_s == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(recs[0].window_start == doctest::Approx(24 * 900.0));
}

TEST_CASE("manifest digests are deterministic and sensitive") {
  nlohmann::json cfg = {{"a", 1}, {"b", 2}};
  CHECK(digest_string(cfg.dump()) == digest_string(cfg.dump()));
  nlohmann::json cfg2 = {{"a", 1}, {"b", 3}};
  CHECK(digest_string(cfg.dump()) != digest_string(cfg2.dump()));

  auto dir = std::filesystem::temp_directory_path();
  auto p = (dir / "manifest_input.txt").string();
  {
    std::ofstream out(p);
    out << "hello\n";
  }
  auto m = make_manifest(cfg, 42, {p});
  CHECK(m.at("seed") == 42);
  CHECK(m.at("inputs").at(p) == digest_file(p));
  CHECK(m.at("config_digest") == digest_string(cfg.dump()));
  std::filesystem::remove(p);
}

TEST_CASE("svg chart emission") {
  auto path = (std::filesystem::temp_directory_path() / "chart_test.svg").string();
  write_svg_chart(path, "losses", {{"train", {3, 2, 1.5, 1.2}}, {"val", {3.5, 2.5, 2, 1.9}}});
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string svg = ss.str();
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("train") != std::string::npos);
  CHECK_THROWS_AS(write_svg_chart(path, "t", {}), std::invalid_argument);
  std::filesystem::remove(path);
}
