#include <doctest.h>

#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "arterial/model.hpp"

using namespace arterial::nn;

namespace {

// Small config that keeps FD checks and overfit runs fast.
ModelConfig tiny_config(int n_links, int t = 2, int p = 2, int d = 4) {
  ModelConfig c;
  c.n_links = n_links;
  c.t_in = t;
  c.horizon = p;
  c.hidden = d;
  c.embed_traffic = 4;
  c.embed_temporal = 2;
  c.embed_road = 2;
  c.blocks = 2;
  c.dilations = {1, 2};
  c.k_gc = 1;
  c.d_node = 2;
  c.dropout = 0.0;
  c.vocab_road = 4;
  return c;
}

std::vector<double> ring_adjacency(int n) {
  std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    a[static_cast<std::size_t>(i) * n + i] = 0.5;
    a[static_cast<std::size_t>(i) * n + (i + 1) % n] = 0.25;
    a[static_cast<std::size_t>(i) * n + (i + n - 1) % n] = 0.25;
  }
  return a;
}

FeatureWindow random_window(const ModelConfig& c, std::mt19937_64& rng) {
  FeatureWindow w;
  w.n_links = c.n_links;
  w.t = c.t_in;
  std::normal_distribution<double> g(0.0, 1.0);
  w.traffic.resize(static_cast<std::size_t>(c.n_links) * c.t_in * kTrafficFeatures);
  for (auto& v : w.traffic) v = g(rng);
  w.temporal.resize(static_cast<std::size_t>(c.n_links) * c.t_in * kTemporalCodes);
  const int vt[kTemporalCodes] = {c.vocab_tod, c.vocab_dow, c.vocab_holiday,
                                  c.vocab_peak, c.vocab_peak, c.vocab_peak};
  for (std::size_t i = 0; i < w.temporal.size(); ++i)
    w.temporal[i] = static_cast<int>(rng() % static_cast<unsigned>(vt[i % kTemporalCodes]));
  w.road.resize(static_cast<std::size_t>(c.n_links) * kRoadCodes);
  const int vr[kRoadCodes] = {c.vocab_road, c.vocab_lane, c.vocab_speed};
  for (std::size_t i = 0; i < w.road.size(); ++i)
    w.road[i] = static_cast<int>(rng() % static_cast<unsigned>(vr[i % kRoadCodes]));
  w.mask.assign(static_cast<std::size_t>(c.n_links) * c.t_in, 1);
  return w;
}

Sample random_sample(const ModelConfig& c, std::mt19937_64& rng, double flag_prob = 0.3) {
  Sample s;
  s.realtime = random_window(c, rng);
  s.historical = random_window(c, rng);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  s.target.resize(static_cast<std::size_t>(c.n_links) * c.horizon * kTargets);
  for (auto& v : s.target) v = u(rng);
  s.abnormal_flag.resize(static_cast<std::size_t>(c.n_links));
  std::bernoulli_distribution b(flag_prob);
  for (auto& f : s.abnormal_flag) f = b(rng) ? 1 : 0;
  return s;
}

}  // namespace

TEST_CASE("jacobi_svd matches the Eigen oracle on random matrices") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng() % 12);
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    for (auto& v : a) v = g(rng);
    auto svd = arterial::jacobi_svd(a, n, n);

    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = a[static_cast<std::size_t>(r) * n + c];
    Eigen::JacobiSVD<Eigen::MatrixXd> es(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    for (int i = 0; i < n; ++i)
      CHECK(svd.sigma[static_cast<std::size_t>(i)] ==
            doctest::Approx(es.singularValues()(i)).epsilon(1e-8));

    // reconstruction: A = U diag(sigma) V^T
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k)
          acc += svd.u[static_cast<std::size_t>(r) * n + k] * svd.sigma[static_cast<std::size_t>(k)] *
                 svd.v[static_cast<std::size_t>(c) * n + k];
        CHECK(acc == doctest::Approx(m(r, c)).epsilon(1e-8));
      }
  }
}

TEST_CASE("adaptive_adjacency: closed-form softmax and row sums") {
  auto e1 = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto a = adaptive_adjacency(e1, e1);  // relu(I) = I
  CHECK(a.data()[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)));  // 0.731
  CHECK(a.data()[1] == doctest::Approx(1.0 / (std::exp(1.0) + 1.0)));            // 0.269
  std::mt19937_64 rng(43);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng() % 8), d = 1 + static_cast<int>(rng() % 4);
    std::vector<double> v1(static_cast<std::size_t>(n) * d), v2(v1.size());
    for (auto& v : v1) v = g(rng);
    for (auto& v : v2) v = g(rng);
    auto adj = adaptive_adjacency(Tensor::from({n, d}, v1), Tensor::from({n, d}, v2));
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) s += adj.data()[static_cast<std::size_t>(r) * n + c];
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("SVD seeding approximates A_fix within the rank-d truncation bound") {
  std::mt19937_64 rng(47);
  for (int n : {6, 12, 20}) {
    auto a = ring_adjacency(n);
    // add some asymmetric structure
    std::uniform_real_distribution<double> u(0.0, 0.2);
    for (auto& v : a) v += u(rng);
    int d = 3;
    auto svd = arterial::jacobi_svd(a, n, n);
    std::vector<double> e1(static_cast<std::size_t>(n) * d), e2(e1.size());
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < d; ++j) {
        double s = std::sqrt(svd.sigma[static_cast<std::size_t>(j)]);
        e1[static_cast<std::size_t>(r) * d + j] = svd.u[static_cast<std::size_t>(r) * n + j] * s;
        e2[static_cast<std::size_t>(r) * d + j] = svd.v[static_cast<std::size_t>(r) * n + j] * s;
      }
    // ||A - E1 E2^T||_F should equal the discarded-singular-value energy
    double frob2 = 0.0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
          acc += e1[static_cast<std::size_t>(r) * d + j] * e2[static_cast<std::size_t>(c) * d + j];
        double diff = a[static_cast<std::size_t>(r) * n + c] - acc;
        frob2 += diff * diff;
      }
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = a[static_cast<std::size_t>(r) * n + c];
    Eigen::JacobiSVD<Eigen::MatrixXd> es(m);
    double bound2 = 0.0;
    for (int j = d; j < n; ++j) bound2 += es.singularValues()(j) * es.singularValues()(j);
    CHECK(std::sqrt(frob2) <= std::sqrt(bound2) + 1e-8);
  }
}

TEST_CASE("graph_diffusion: hand cases and the matrix-power oracle") {
  SUBCASE("k_gc = 0 with identity weight is the identity") {
    auto h = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto a = Tensor::from({2, 2}, {0, 1, 1, 0});
    auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto z = graph_diffusion(h, a, Tensor(), {eye}, {});
    CHECK(z.data() == h.data());
  }
  SUBCASE("N=2 swap adjacency, k_gc = 1, identity weights") {
    auto h = Tensor::from({2, 1}, {1, 0});
    auto a = Tensor::from({2, 2}, {0, 1, 1, 0});
    auto eye = Tensor::from({1, 1}, {1.0});
    auto zero = Tensor::from({1, 1}, {0.0});
    auto z = graph_diffusion(h, a, a, {eye, eye}, {zero, zero});
    CHECK(z.data() == std::vector<double>{1, 1});  // h + A h = [1,0] + [0,1]
  }
  SUBCASE("equals a brute-force explicit-power oracle") {
    std::mt19937_64 rng(53);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
      int n = 2 + static_cast<int>(rng() % 9);   // N <= 10
      int k = static_cast<int>(rng() % 4);        // k_gc <= 3
      int dc = 1 + static_cast<int>(rng() % 4);
      auto rnd = [&](Shape s) {
        std::vector<double> d(numel(s));
        for (auto& v : d) v = g(rng);
        return Tensor::from(std::move(s), std::move(d));
      };
      auto h = rnd({n, dc});
      auto af = rnd({n, n});
      auto aa = rnd({n, n});
      std::vector<Tensor> wf, wa;
      for (int i = 0; i <= k; ++i) {
        wf.push_back(rnd({dc, dc}));
        wa.push_back(rnd({dc, dc}));
      }
      auto z = graph_diffusion(h, af, aa, wf, wa);

      // oracle: materialize dense powers with Eigen
      auto to_eigen = [&](const Tensor& t) {
        Eigen::MatrixXd m(t.shape()[0], t.shape()[1]);
        for (int r = 0; r < t.shape()[0]; ++r)
          for (int c = 0; c < t.shape()[1]; ++c)
            m(r, c) = t.data()[static_cast<std::size_t>(r) * t.shape()[1] + c];
        return m;
      };
      Eigen::MatrixXd H = to_eigen(h), AF = to_eigen(af), AA = to_eigen(aa);
      Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(n, dc);
      for (int i = 0; i <= k; ++i) {
        Eigen::MatrixXd pf = Eigen::MatrixXd::Identity(n, n);
        Eigen::MatrixXd pa = Eigen::MatrixXd::Identity(n, n);
        for (int q = 0; q < i; ++q) {
          pf = AF * pf;
          pa = AA * pa;
        }
        expect += pf * H * to_eigen(wf[static_cast<std::size_t>(i)]) +
                  pa * H * to_eigen(wa[static_cast<std::size_t>(i)]);
      }
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < dc; ++c)
          CHECK(std::fabs(z.data()[static_cast<std::size_t>(r) * dc + c] - expect(r, c)) <= 1e-10);
    }
  }
}

TEST_CASE("gated_fusion: saturation, convex combination, betweenness") {
  auto eye = Tensor::from({1, 1}, {1.0});
  SUBCASE("gate forced to 1 returns the projected real-time branch") {
    auto wg = Tensor::from({2, 1}, {0.0, 0.0});
    auto bg = Tensor::from({1}, {100.0});  // sigmoid -> 1
    auto f = gated_fusion(Tensor::from({1, 1}, {4.0}), Tensor::from({1, 1}, {8.0}), wg, bg, eye, eye);
    CHECK(f.out.data()[0] == doctest::Approx(4.0));
  }
  SUBCASE("g = 0.25 scalar convex combination") {
    auto wg = Tensor::from({2, 1}, {0.0, 0.0});
    auto bg = Tensor::from({1}, {std::log(0.25 / 0.75)});  // sigmoid -> 0.25
    auto f = gated_fusion(Tensor::from({1, 1}, {4.0}), Tensor::from({1, 1}, {8.0}), wg, bg, eye, eye);
    CHECK(f.gate.data()[0] == doctest::Approx(0.25));
    CHECK(f.out.data()[0] == doctest::Approx(7.0));  // 0.25*4 + 0.75*8
  }
  SUBCASE("output lies between the projected branches") {
    std::mt19937_64 rng(59);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      auto rnd = [&](Shape s) {
        std::vector<double> d(numel(s));
        for (auto& v : d) v = g(rng);
        return Tensor::from(std::move(s), std::move(d));
      };
      auto h_rt = rnd({3, 2}), h_hist = rnd({3, 2});
      auto wg = rnd({4, 2}), bg = rnd({2}), wr = rnd({2, 2}), wh = rnd({2, 2});
      auto f = gated_fusion(h_rt, h_hist, wg, bg, wr, wh);
      auto pr = matmul(h_rt, wr), ph = matmul(h_hist, wh);
      for (std::size_t i = 0; i < f.out.size(); ++i) {
        double lo = std::min(pr.data()[i], ph.data()[i]);
        double hi = std::max(pr.data()[i], ph.data()[i]);
        CHECK(f.out.data()[i] >= lo - 1e-12);
        CHECK(f.out.data()[i] <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("model forward: shapes, non-negativity over 10k cells, determinism") {
  auto cfg = tiny_config(5);
  AastGcn model(cfg, ring_adjacency(5));
  std::mt19937_64 rng(61);
  std::size_t cells = 0;
  Sample first = random_sample(cfg, rng);
  auto base = model.forward(first);
  auto again = model.forward(first);
  CHECK(base.y_normal.data() == again.y_normal.data());  // pure given fixed params
  for (int i = 0; i < 250; ++i) {
    auto s = random_sample(cfg, rng);
    auto out = model.forward(s);
    CHECK(out.y_normal.shape() == Shape{5, 2, 2});
    for (double v : out.y_normal.data()) {
      CHECK(v >= 0.0);
      ++cells;
    }
    for (double v : out.y_abnormal.data()) {
      CHECK(v >= 0.0);
      ++cells;
    }
  }
  CHECK(cells >= 10000);
}

TEST_CASE("embedding: zero traffic with zeroed projection gives a zero traffic slice") {
  auto cfg = tiny_config(3);
  AastGcn model(cfg, ring_adjacency(3));
  // Identical windows on two links -> identical predictions per link requires
  // identical adjacency rows too; instead check full-output determinism with
  // permuted-but-identical inputs at the embedding level via the public API:
  // two samples identical except link order of identical features give equal rows.
  std::mt19937_64 rng(67);
  Sample s = random_sample(cfg, rng, 0.0);
  // make links 0 and 1 identical everywhere (features, codes, flags)
  auto copy_link = [&](FeatureWindow& w) {
    const std::size_t tf = static_cast<std::size_t>(w.t) * kTrafficFeatures;
    const std::size_t tc = static_cast<std::size_t>(w.t) * kTemporalCodes;
    std::copy_n(w.traffic.begin(), tf, w.traffic.begin() + static_cast<std::ptrdiff_t>(tf));
    std::copy_n(w.temporal.begin(), tc, w.temporal.begin() + static_cast<std::ptrdiff_t>(tc));
    std::copy_n(w.road.begin(), kRoadCodes, w.road.begin() + kRoadCodes);
  };
  copy_link(s.realtime);
  copy_link(s.historical);
  // with a symmetric ring over 3 nodes, links 0 and 1 still differ through
  // their neighborhoods, so equality is only guaranteed with GCN off:
  auto cfg2 = cfg;
  cfg2.use_gcn = false;
  AastGcn flat(cfg2, ring_adjacency(3));
  auto out = flat.forward(s);
  for (int h = 0; h < cfg.horizon * kTargets; ++h)
    CHECK(out.y_normal.data()[static_cast<std::size_t>(h)] ==
          doctest::Approx(out.y_normal.data()[static_cast<std::size_t>(cfg.horizon * kTargets + h)])
              .epsilon(1e-12));
}

TEST_CASE("dual expert routing") {
  auto cfg = tiny_config(3);
  AastGcn model(cfg, ring_adjacency(3));
  std::mt19937_64 rng(71);
  Sample s = random_sample(cfg, rng);
  s.abnormal_flag = {0, 1, 0};
  auto out = model.forward(s);
  auto served = model.route(out, s.abnormal_flag);
  const std::size_t pl = static_cast<std::size_t>(cfg.horizon) * kTargets;
  for (std::size_t j = 0; j < pl; ++j) {
    CHECK(served[j] == out.y_normal.data()[j]);
    CHECK(served[pl + j] == out.y_abnormal.data()[pl + j]);
    CHECK(served[2 * pl + j] == out.y_normal.data()[2 * pl + j]);
  }
  SUBCASE("all flags zero -> normal expert everywhere") {
    s.abnormal_flag = {0, 0, 0};
    auto o2 = model.forward(s);
    CHECK(model.route(o2, s.abnormal_flag) == o2.y_normal.data());
  }
  SUBCASE("predictions for flag-0 links ignore the abnormal expert's parameters") {
    s.abnormal_flag = {0, 1, 0};
    auto before = model.predict(s);
    for (auto& p : model.params().all())
      if (p.name.rfind("a.", 0) == 0)
        for (auto& v : p.tensor.data()) v += 0.37;
    auto after = model.predict(s);
    for (std::size_t j = 0; j < pl; ++j) {
      CHECK(before[j] == after[j]);              // link 0: normal expert
      CHECK(before[2 * pl + j] == after[2 * pl + j]);
    }
  }
  SUBCASE("experts with identical parameters give identical outputs") {
    for (auto& p : model.params().all()) {
      if (p.name.rfind("n.", 0) == 0) {
        Tensor twin = model.params().get("a." + p.name.substr(2));
        twin.data() = p.tensor.data();  // shared node: updates the stored param
      }
    }
    auto o = model.forward(s);
    CHECK(o.y_normal.data() == o.y_abnormal.data());
  }
}

TEST_CASE("loss: decomposition and hand-weighted combination") {
  auto cfg = tiny_config(4);
  AastGcn model(cfg, ring_adjacency(4));
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    Sample s = random_sample(cfg, rng, 0.5);
    auto out = model.forward(s);
    double total = model.loss(out, s).item();
    // hand recomputation
    const std::size_t pl = static_cast<std::size_t>(cfg.horizon) * kTargets;
    auto part = [&](const Tensor& y, bool want_flag) {
      double acc = 0.0;
      std::size_t n = 0;
      for (int l = 0; l < cfg.n_links; ++l) {
        if ((s.abnormal_flag[static_cast<std::size_t>(l)] != 0) != want_flag) continue;
        for (std::size_t j = 0; j < pl; ++j) {
          double e = y.data()[static_cast<std::size_t>(l) * pl + j] -
                     s.target[static_cast<std::size_t>(l) * pl + j];
          double a = std::fabs(e);
          acc += a < 1.0 ? 0.5 * e * e : a - 0.5;
          ++n;
        }
      }
      return n ? acc / static_cast<double>(n) : 0.0;
    };
    double expect = 0.3 * part(out.y_normal, false) + 0.7 * part(out.y_abnormal, true);
    CHECK(std::fabs(total - expect) <= 1e-12);
  }
  SUBCASE("perfect predictions give zero loss") {
    Sample s = random_sample(cfg, rng);
    auto out = model.forward(s);
    s.target = model.route(out, s.abnormal_flag);
    CHECK(model.loss(model.forward(s), s).item() == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("end-to-end gradient check on a tiny instance") {
  auto cfg = tiny_config(3, 2, 2, 4);
  AastGcn model(cfg, ring_adjacency(3));
  std::mt19937_64 rng(79);
  Sample s = random_sample(cfg, rng, 0.4);
  s.abnormal_flag = {0, 1, 0};  // both experts in play

  auto f = [&] { return model.loss(model.forward(s), s); };
  Tensor l0 = f();
  model.params().zero_grad();
  backward(l0);
  // copy gradients before FD perturbs the graph
  std::vector<std::vector<double>> grads;
  for (auto& p : model.params().all()) grads.push_back(p.tensor.grad());

  const double h = 1e-5;
  std::size_t pi = 0;
  for (auto& p : model.params().all()) {
    // probe a few entries per parameter to keep runtime sane
    std::size_t stride = std::max<std::size_t>(1, p.tensor.size() / 5);
    for (std::size_t i = 0; i < p.tensor.size(); i += stride) {
      double keep = p.tensor.data()[i];
      p.tensor.data()[i] = keep + h;
      double yp = f().item();
      p.tensor.data()[i] = keep - h;
      double ym = f().item();
      p.tensor.data()[i] = keep;
      double fd = (yp - ym) / (2.0 * h);
      double ad = grads[pi][i];
      double denom = std::max({1.0, std::fabs(fd), std::fabs(ad)});
      CHECK(std::fabs(fd - ad) / denom <= 1e-4);
    }
    ++pi;
  }
}

TEST_CASE("training: overfits 20 samples and logs deterministically") {
  auto cfg = tiny_config(4);
  cfg.hidden = 24;
  cfg.lr = 1e-2;
  cfg.epochs = 200;
  cfg.patience = 0;  // disabled
  cfg.batch = 4;
  cfg.target_mean_delay = 5.0;
  cfg.target_mean_queue = 5.0;
  std::mt19937_64 rng(83);
  std::vector<Sample> data;
  for (int i = 0; i < 20; ++i) data.push_back(random_sample(cfg, rng, 0.25));

  AastGcn model(cfg, ring_adjacency(4));
  auto res = train(model, data, {});
  REQUIRE(!res.log.empty());
  CHECK(res.log.back().train_loss < 0.05 * res.log.front().train_loss);

  AastGcn model2(cfg, ring_adjacency(4));
  auto res2 = train(model2, data, {});
  REQUIRE(res.log.size() == res2.log.size());
  for (std::size_t i = 0; i < res.log.size(); ++i) {
    CHECK(res.log[i].train_loss == res2.log[i].train_loss);
    CHECK(res.log[i].gate_mean_normal == res2.log[i].gate_mean_normal);
  }
}

TEST_CASE("checkpoint round-trip preserves forward outputs") {
  auto cfg = tiny_config(4);
  AastGcn model(cfg, ring_adjacency(4));
  std::mt19937_64 rng(89);
  Sample s = random_sample(cfg, rng);
  auto before = model.predict(s);
  auto j = checkpoint_to_json(model);
  auto restored = checkpoint_from_json(j);
  CHECK(restored.predict(s) == before);
  auto bad = j;
  bad["magic"] = "nope";
  CHECK_THROWS_AS(checkpoint_from_json(bad), std::runtime_error);
}

TEST_CASE("config validation") {
  auto cfg = tiny_config(3);
  cfg.w_abnormal = 0.4;
  CHECK_THROWS_AS(AastGcn(cfg, ring_adjacency(3)), std::invalid_argument);
  cfg = tiny_config(3);
  cfg.dilations = {1};
  CHECK_THROWS_AS(AastGcn(cfg, ring_adjacency(3)), std::invalid_argument);
  cfg = tiny_config(3);
  CHECK_THROWS_AS(AastGcn(cfg, std::vector<double>(4, 0.0)), std::invalid_argument);
}
