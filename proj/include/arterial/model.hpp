#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arterial/svd.hpp"
#include "arterial/tensor.hpp"

namespace arterial::nn {

inline constexpr int kTrafficFeatures = 6;  // delay, queue, speed, volume, travel time, aog
inline constexpr int kTemporalCodes = 6;    // tod bin, dow, holiday, 3 peak indicators
inline constexpr int kRoadCodes = 3;        // road id, lane class, speed-limit class
inline constexpr int kTargets = 2;          // delay, queue

struct ModelConfig {
  int n_links = 0;  // N, set from the basemap
  int t_in = 4;     // T_P = T_H
  int horizon = 4;  // P
  int hidden = 64;  // D
  int embed_traffic = 32;
  int embed_temporal = 16;
  int embed_road = 16;
  int blocks = 2;
  std::vector<int> dilations = {1, 2};
  int kernel = 2;  // K
  int k_gc = 2;
  int d_node = 10;
  double dropout = 0.1;
  double w_abnormal = 0.7;  // W_AN; W_N = 1 - W_AN
  double smooth_l1_beta = 1.0;
  double lr = 1e-3;
  double grad_clip = 5.0;
  int batch = 32;
  int epochs = 100;
  int patience = 10;
  std::uint64_t seed = 42;

  int vocab_tod = 96, vocab_dow = 7, vocab_holiday = 2, vocab_peak = 2;
  int vocab_road = 32, vocab_lane = 8, vocab_speed = 8;

  // Ablation and interpretation switches.
  bool use_embedding = true;
  bool use_tcn = true;
  bool use_gcn = true;
  bool use_adaptive = true;
  bool use_gate = true;
  bool use_historical = true;
  bool use_dual_expert = true;
  bool zero_mask_inputs = false;  // alternative expert-input masking semantics

  // Head bias initialization: training-set target means in raw units.
  double target_mean_delay = 0.0, target_mean_queue = 0.0;

  int embed_dim() const {
    return use_embedding ? embed_traffic + embed_temporal + embed_road : embed_traffic;
  }

  void validate() const {
    if (n_links <= 0) throw std::invalid_argument("config: n_links not set");
    if (w_abnormal <= 0.5 || w_abnormal >= 1.0)
      throw std::invalid_argument("config: W_AN must lie in (0.5, 1)");
    if (static_cast<int>(dilations.size()) != blocks)
      throw std::invalid_argument("config: one dilation per block");
    for (int d : dilations)
      if (d < 1) throw std::invalid_argument("config: dilations must be positive");
    if (t_in < 1 || horizon < 1 || hidden < 1 || kernel < 1 || k_gc < 0)
      throw std::invalid_argument("config: non-positive dimension");
  }
};

struct FeatureWindow {
  int n_links = 0, t = 0;
  std::vector<double> traffic;  // [N,T,6], standardized
  std::vector<int> temporal;    // [N,T,6] integer codes
  std::vector<int> road;        // [N,3] integer codes
  std::vector<char> mask;       // [N,T] observed flag
};

struct Sample {
  FeatureWindow realtime;
  FeatureWindow historical;
  std::vector<double> target;      // [N,P,2], raw units
  std::vector<char> abnormal_flag;  // [N]
  int anchor_flat = -1;  // grid index of the last real-time step (provenance)
};

struct ExpertOutputs {
  Tensor y_normal;    // [N,P,2]
  Tensor y_abnormal;  // [N,P,2]
  std::vector<double> gate_normal;    // per-link mean gate activation
  std::vector<double> gate_abnormal;
  double gate_mean_normal = 0.0;
  double gate_mean_abnormal = 0.0;
};

class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> data) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
    Tensor t = Tensor::from(std::move(shape), std::move(data), true);
    index_[name] = params_.size();
    params_.emplace_back(name, t);
    return t;
  }
  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return params_[it->second].tensor;
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> s;
    for (const auto& p : params_) s.push_back(p.tensor.data());
    return s;
  }
  void restore(const std::vector<std::vector<double>>& s) {
    if (s.size() != params_.size()) throw std::logic_error("snapshot size mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) params_[i].tensor.data() = s[i];
  }
  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

// ---- standalone layer ops (also exercised directly by tests) ----

// row_softmax(relu(E1 E2^T)); rows sum to 1.
inline Tensor adaptive_adjacency(const Tensor& e1, const Tensor& e2) {
  return row_softmax(relu(matmul(e1, transpose_last2(e2))));
}

// z = sum_i (A_fix^i h W_fix[i] + A_apt^i h W_apt[i]); h: [N, C]. Powers are
// applied iteratively, never materialized. Pass an undefined a_apt (or empty
// w_apt) to drop the adaptive branch.
inline Tensor graph_diffusion(const Tensor& h, const Tensor& a_fix, const Tensor& a_apt,
                              const std::vector<Tensor>& w_fix, const std::vector<Tensor>& w_apt) {
  if (w_fix.empty()) throw std::invalid_argument("graph_diffusion: no weights");
  const bool apt = a_apt.defined() && !w_apt.empty();
  if (apt && w_apt.size() != w_fix.size())
    throw std::invalid_argument("graph_diffusion: branch weight counts differ");
  Tensor z;
  Tensor p_fix = h, p_apt = h;
  for (std::size_t i = 0; i < w_fix.size(); ++i) {
    if (i > 0) {
      p_fix = matmul(a_fix, p_fix);
      if (apt) p_apt = matmul(a_apt, p_apt);
    }
    Tensor term = matmul(p_fix, w_fix[i]);
    if (apt) term = add(term, matmul(p_apt, w_apt[i]));
    z = i == 0 ? term : add(z, term);
  }
  return z;
}

// g = sigmoid([H_rt ⊕ H_hist] W_g + b_g); out = g ⊗ H_rt W_r + (1−g) ⊗ H_hist W_h.
struct FusionOut {
  Tensor out;
  Tensor gate;
};

inline FusionOut gated_fusion(const Tensor& h_rt, const Tensor& h_hist, const Tensor& w_g,
                              const Tensor& b_g, const Tensor& w_r, const Tensor& w_h) {
  Tensor g = sigmoid(add(matmul(concat({h_rt, h_hist}), w_g), b_g));
  Tensor one_minus_g = affine(g, -1.0, 1.0);
  Tensor out = add(mul(matmul(h_rt, w_r), g), mul(matmul(h_hist, w_h), one_minus_g));
  return {out, g};
}

// ---- the full network ----

class AastGcn {
 public:
  AastGcn(ModelConfig cfg, std::vector<double> a_fix_normalized) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto n = static_cast<std::size_t>(cfg_.n_links);
    if (a_fix_normalized.size() != n * n)
      throw std::invalid_argument("adjacency size != n_links^2");
    a_fix_ = Tensor::from({cfg_.n_links, cfg_.n_links}, std::move(a_fix_normalized));
    init_params();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Tensor& fixed_adjacency() const { return a_fix_; }

  // Both experts run on the full (or zero-masked) input; routing is by flag.
  ExpertOutputs forward(const Sample& sample, bool training = false,
                        std::mt19937_64* dropout_rng = nullptr) {
    ExpertOutputs out;
    auto nrm = expert_forward("n.", sample, /*abnormal=*/false, training, dropout_rng);
    out.y_normal = nrm.first;
    out.gate_normal = nrm.second;
    if (cfg_.use_dual_expert) {
      auto abn = expert_forward("a.", sample, /*abnormal=*/true, training, dropout_rng);
      out.y_abnormal = abn.first;
      out.gate_abnormal = abn.second;
    } else {
      out.y_abnormal = out.y_normal;
      out.gate_abnormal = out.gate_normal;
    }
    out.gate_mean_normal = vec_mean(out.gate_normal);
    out.gate_mean_abnormal = vec_mean(out.gate_abnormal);
    return out;
  }

  // W_N · SmoothL1(normal expert on flag-0 cells) + W_AN · (abnormal on flag-1).
  Tensor loss(const ExpertOutputs& out, const Sample& sample) const {
    const std::size_t cells = sample.target.size();
    std::vector<double> w_n(cells, 0.0), w_a(cells, 0.0);
    const std::size_t per_link = static_cast<std::size_t>(cfg_.horizon) * kTargets;
    for (int l = 0; l < cfg_.n_links; ++l) {
      bool ab = sample.abnormal_flag[static_cast<std::size_t>(l)] != 0;
      for (std::size_t j = 0; j < per_link; ++j)
        (ab ? w_a : w_n)[static_cast<std::size_t>(l) * per_link + j] = 1.0;
    }
    if (!cfg_.use_dual_expert) {
      std::vector<double> all(cells, 1.0);
      return smooth_l1(out.y_normal, sample.target, all, cfg_.smooth_l1_beta);
    }
    Tensor l_n = smooth_l1(out.y_normal, sample.target, w_n, cfg_.smooth_l1_beta);
    Tensor l_a = smooth_l1(out.y_abnormal, sample.target, w_a, cfg_.smooth_l1_beta);
    return add(affine(l_n, 1.0 - cfg_.w_abnormal, 0.0), affine(l_a, cfg_.w_abnormal, 0.0));
  }

  // Served predictions: per-link selection by abnormal flag. [N,P,2] flat.
  std::vector<double> predict(const Sample& sample) {
    auto out = forward(sample, false, nullptr);
    return route(out, sample.abnormal_flag);
  }

  std::vector<double> route(const ExpertOutputs& out, const std::vector<char>& flags) const {
    const std::size_t per_link = static_cast<std::size_t>(cfg_.horizon) * kTargets;
    std::vector<double> served(out.y_normal.data());
    for (int l = 0; l < cfg_.n_links; ++l)
      if (flags[static_cast<std::size_t>(l)])
        for (std::size_t j = 0; j < per_link; ++j) {
          auto i = static_cast<std::size_t>(l) * per_link + j;
          served[i] = out.y_abnormal.data()[i];
        }
    return served;
  }

 private:
  static double vec_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }

  // -- parameter initialization --

  double glorot(std::mt19937_64& rng, int fan_in, int fan_out) {
    double lim = std::sqrt(6.0 / (fan_in + fan_out));
    return std::uniform_real_distribution<double>(-lim, lim)(rng);
  }

  Tensor add_matrix(std::mt19937_64& rng, const std::string& name, int rows, int cols) {
    std::vector<double> d(static_cast<std::size_t>(rows) * cols);
    for (auto& v : d) v = glorot(rng, rows, cols);
    return params_.add(name, {rows, cols}, std::move(d));
  }

  Tensor add_bias(const std::string& name, int n, double fill = 0.0) {
    return params_.add(name, {n}, std::vector<double>(static_cast<std::size_t>(n), fill));
  }

  Tensor add_conv(std::mt19937_64& rng, const std::string& name, int out, int in, int k) {
    std::vector<double> d(static_cast<std::size_t>(out) * in * k);
    for (auto& v : d) v = glorot(rng, in * k, out * k);
    return params_.add(name, {out, in, k}, std::move(d));
  }

  Tensor add_table(std::mt19937_64& rng, const std::string& name, int vocab, int dim) {
    std::normal_distribution<double> g(0.0, 0.1);
    std::vector<double> d(static_cast<std::size_t>(vocab) * dim);
    for (auto& v : d) v = g(rng);
    return params_.add(name, {vocab, dim}, std::move(d));
  }

  void init_branch(std::mt19937_64& rng, const std::string& p) {
    const int de = cfg_.embed_dim(), dd = cfg_.hidden;
    add_matrix(rng, p + "embed.traffic.w", kTrafficFeatures, cfg_.embed_traffic);
    add_bias(p + "embed.traffic.b", cfg_.embed_traffic);
    if (cfg_.use_embedding) {
      const int vt[kTemporalCodes] = {cfg_.vocab_tod, cfg_.vocab_dow, cfg_.vocab_holiday,
                                      cfg_.vocab_peak, cfg_.vocab_peak, cfg_.vocab_peak};
      for (int c = 0; c < kTemporalCodes; ++c)
        add_table(rng, p + "embed.tm" + std::to_string(c), vt[c], cfg_.embed_temporal);
      const int vr[kRoadCodes] = {cfg_.vocab_road, cfg_.vocab_lane, cfg_.vocab_speed};
      for (int c = 0; c < kRoadCodes; ++c)
        add_table(rng, p + "embed.rd" + std::to_string(c), vr[c], cfg_.embed_road);
    }
    add_matrix(rng, p + "in.w", de, dd);
    add_bias(p + "in.b", dd);
    const int k = cfg_.use_tcn ? cfg_.kernel : 1;
    for (int b = 0; b < cfg_.blocks; ++b) {
      std::string bp = p + "b" + std::to_string(b) + ".";
      add_conv(rng, bp + "filter", dd, dd, k);
      add_conv(rng, bp + "gate", dd, dd, k);
      if (cfg_.use_gcn) {
        for (int i = 0; i <= cfg_.k_gc; ++i) {
          add_matrix(rng, bp + "gcn.fix" + std::to_string(i), dd, dd);
          if (cfg_.use_adaptive) add_matrix(rng, bp + "gcn.apt" + std::to_string(i), dd, dd);
        }
      }
      add_matrix(rng, bp + "skip.w", dd, dd);
    }
    add_matrix(rng, p + "out.w", dd, dd);
    add_bias(p + "out.b", dd);
  }

  void init_expert(std::mt19937_64& rng, const std::string& p) {
    const int dd = cfg_.hidden;
    init_branch(rng, p + "rt.");
    if (cfg_.use_historical) {
      init_branch(rng, p + "hist.");
      if (cfg_.use_gate) {
        add_matrix(rng, p + "fuse.wg", 2 * dd, dd);
        add_bias(p + "fuse.bg", dd);
      }
      add_matrix(rng, p + "fuse.wr", dd, dd);
      add_matrix(rng, p + "fuse.wh", dd, dd);
    }
    if (cfg_.use_gcn && cfg_.use_adaptive) {
      // SVD seeding: E1 = U_d sqrt(S_d), E2 = V_d sqrt(S_d) of A_fix, plus
      // small noise to break symmetry.
      const int n = cfg_.n_links, d = std::min(cfg_.d_node, n);
      auto svd = jacobi_svd(a_fix_.data(), n, n);
      std::normal_distribution<double> g(0.0, 1e-2);
      std::vector<double> e1(static_cast<std::size_t>(n) * cfg_.d_node, 0.0);
      std::vector<double> e2(e1.size(), 0.0);
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j) {
          double s = std::sqrt(svd.sigma[static_cast<std::size_t>(j)]);
          e1[static_cast<std::size_t>(r) * cfg_.d_node + j] =
              svd.u[static_cast<std::size_t>(r) * n + j] * s;
          e2[static_cast<std::size_t>(r) * cfg_.d_node + j] =
              svd.v[static_cast<std::size_t>(r) * n + j] * s;
        }
      for (auto& v : e1) v += g(rng);
      for (auto& v : e2) v += g(rng);
      params_.add(p + "apt.e1", {n, cfg_.d_node}, std::move(e1));
      params_.add(p + "apt.e2", {n, cfg_.d_node}, std::move(e2));
    }
    add_matrix(rng, p + "head.w1", dd, dd);
    add_bias(p + "head.b1", dd);
    add_matrix(rng, p + "head.w2", dd, cfg_.horizon * kTargets);
    std::vector<double> b2(static_cast<std::size_t>(cfg_.horizon) * kTargets);
    for (int h = 0; h < cfg_.horizon; ++h) {
      b2[static_cast<std::size_t>(h) * kTargets + 0] = cfg_.target_mean_delay;
      b2[static_cast<std::size_t>(h) * kTargets + 1] = cfg_.target_mean_queue;
    }
    params_.add(p + "head.b2", {cfg_.horizon * kTargets}, std::move(b2));
  }

  void init_params() {
    std::mt19937_64 rng(cfg_.seed);
    init_expert(rng, "n.");
    if (cfg_.use_dual_expert) init_expert(rng, "a.");
  }

  // -- forward pieces --

  Tensor embed(const FeatureWindow& w, const std::string& p, const std::vector<double>* traffic_override) const {
    const int n = w.n_links, t = w.t;
    Tensor x = Tensor::from({n, t, kTrafficFeatures},
                            traffic_override ? *traffic_override : w.traffic);
    Tensor tr = add(matmul(x, params_.get(p + "embed.traffic.w")),
                    params_.get(p + "embed.traffic.b"));
    if (!cfg_.use_embedding) return tr;

    Tensor tm;
    for (int c = 0; c < kTemporalCodes; ++c) {
      std::vector<int> idx(static_cast<std::size_t>(n) * t);
      for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = w.temporal[i * kTemporalCodes + static_cast<std::size_t>(c)];
      Tensor e = gather_rows(params_.get(p + "embed.tm" + std::to_string(c)), idx);
      tm = c == 0 ? e : add(tm, e);
    }
    tm = reshape(tm, {n, t, cfg_.embed_temporal});

    Tensor rd;
    for (int c = 0; c < kRoadCodes; ++c) {
      std::vector<int> idx(static_cast<std::size_t>(n) * t);
      for (int l = 0; l < n; ++l)
        for (int s = 0; s < t; ++s)
          idx[static_cast<std::size_t>(l) * t + s] =
              w.road[static_cast<std::size_t>(l) * kRoadCodes + static_cast<std::size_t>(c)];
      Tensor e = gather_rows(params_.get(p + "embed.rd" + std::to_string(c)), idx);
      rd = c == 0 ? e : add(rd, e);
    }
    rd = reshape(rd, {n, t, cfg_.embed_road});
    return concat({tr, tm, rd});
  }

  // Spatial layer over [N,D,T]: flatten time, diffuse over nodes, apply the
  // per-order channel weights.
  Tensor diffusion_time(const Tensor& h, const Tensor& a_apt, const std::string& bp) const {
    const int n = h.shape()[0], dd = h.shape()[1], t = h.shape()[2];
    Tensor flat = reshape(h, {n, dd * t});
    Tensor acc;
    Tensor p_fix = flat, p_apt = flat;
    for (int i = 0; i <= cfg_.k_gc; ++i) {
      if (i > 0) {
        p_fix = matmul(a_fix_, p_fix);
        if (cfg_.use_adaptive) p_apt = matmul(a_apt, p_apt);
      }
      Tensor term = matmul(transpose_last2(reshape(p_fix, {n, dd, t})),
                           params_.get(bp + "gcn.fix" + std::to_string(i)));
      if (cfg_.use_adaptive)
        term = add(term, matmul(transpose_last2(reshape(p_apt, {n, dd, t})),
                                params_.get(bp + "gcn.apt" + std::to_string(i))));
      acc = i == 0 ? term : add(acc, term);
    }
    return transpose_last2(acc);  // back to [N,D,T]
  }

  Tensor st_wavenet(const Tensor& emb, const Tensor& a_apt, const std::string& p, bool training,
                    std::mt19937_64* dropout_rng) const {
    const int n = emb.shape()[0], t = emb.shape()[1];
    Tensor x = add(matmul(emb, params_.get(p + "in.w")), params_.get(p + "in.b"));
    x = transpose_last2(x);  // [N,D,T]
    Tensor skip;
    for (int b = 0; b < cfg_.blocks; ++b) {
      std::string bp = p + "b" + std::to_string(b) + ".";
      const int d = cfg_.use_tcn ? cfg_.dilations[static_cast<std::size_t>(b)] : 1;
      Tensor glu = mul(tanh(dilated_causal_conv(x, params_.get(bp + "filter"), d)),
                       sigmoid(dilated_causal_conv(x, params_.get(bp + "gate"), d)));
      if (training && cfg_.dropout > 0.0 && dropout_rng) {
        std::bernoulli_distribution keep(1.0 - cfg_.dropout);
        std::vector<double> mask(glu.size());
        for (auto& v : mask) v = keep(*dropout_rng) ? 1.0 / (1.0 - cfg_.dropout) : 0.0;
        glu = mul(glu, Tensor::from(glu.shape(), std::move(mask)));
      }
      Tensor sp = cfg_.use_gcn ? diffusion_time(glu, a_apt, bp) : glu;
      x = add(x, sp);  // residual
      Tensor s = matmul(transpose_last2(glu), params_.get(bp + "skip.w"));  // [N,T,D]
      skip = b == 0 ? s : add(skip, s);
    }
    Tensor h = last_step(transpose_last2(relu(skip)));  // [N,D] at the final step
    (void)n;
    (void)t;
    return relu(add(matmul(h, params_.get(p + "out.w")), params_.get(p + "out.b")));
  }

  Tensor head(const Tensor& h, const std::string& p) const {
    Tensor h1 = relu(add(matmul(h, params_.get(p + "head.w1")), params_.get(p + "head.b1")));
    Tensor y = relu(add(matmul(h1, params_.get(p + "head.w2")), params_.get(p + "head.b2")));
    return reshape(y, {cfg_.n_links, cfg_.horizon, kTargets});
  }

  // Returns (prediction [N,P,2], per-link gate means).
  std::pair<Tensor, std::vector<double>> expert_forward(const std::string& p, const Sample& sample,
                                                        bool abnormal, bool training,
                                                        std::mt19937_64* dropout_rng) {
    // Optional zero-masking of the other regime's traffic channels.
    std::vector<double> rt_masked, hist_masked;
    const std::vector<double>* rt_ptr = nullptr;
    const std::vector<double>* hist_ptr = nullptr;
    if (cfg_.zero_mask_inputs && cfg_.use_dual_expert) {
      auto mask_traffic = [&](const FeatureWindow& w) {
        std::vector<double> out = w.traffic;
        const std::size_t per_link =
            static_cast<std::size_t>(w.t) * kTrafficFeatures;
        for (int l = 0; l < w.n_links; ++l) {
          bool flag = sample.abnormal_flag[static_cast<std::size_t>(l)] != 0;
          if (flag != abnormal)
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(l * per_link), per_link, 0.0);
        }
        return out;
      };
      rt_masked = mask_traffic(sample.realtime);
      rt_ptr = &rt_masked;
      if (cfg_.use_historical) {
        hist_masked = mask_traffic(sample.historical);
        hist_ptr = &hist_masked;
      }
    }

    Tensor a_apt;
    if (cfg_.use_gcn && cfg_.use_adaptive)
      a_apt = adaptive_adjacency(params_.get(p + "apt.e1"), params_.get(p + "apt.e2"));

    Tensor h_rt = st_wavenet(embed(sample.realtime, p + "rt.", rt_ptr), a_apt, p + "rt.",
                             training, dropout_rng);
    std::vector<double> gate_per_link(static_cast<std::size_t>(cfg_.n_links), 0.5);
    Tensor fused = h_rt;
    if (cfg_.use_historical) {
      Tensor h_hist = st_wavenet(embed(sample.historical, p + "hist.", hist_ptr), a_apt,
                                 p + "hist.", training, dropout_rng);
      if (cfg_.use_gate) {
        auto f = gated_fusion(h_rt, h_hist, params_.get(p + "fuse.wg"), params_.get(p + "fuse.bg"),
                              params_.get(p + "fuse.wr"), params_.get(p + "fuse.wh"));
        fused = f.out;
        const int dd = cfg_.hidden;
        for (int l = 0; l < cfg_.n_links; ++l) {
          double s = 0.0;
          for (int j = 0; j < dd; ++j)
            s += f.gate.data()[static_cast<std::size_t>(l) * dd + static_cast<std::size_t>(j)];
          gate_per_link[static_cast<std::size_t>(l)] = s / dd;
        }
      } else {
        fused = add(affine(matmul(h_rt, params_.get(p + "fuse.wr")), 0.5, 0.0),
                    affine(matmul(h_hist, params_.get(p + "fuse.wh")), 0.5, 0.0));
      }
    }
    return {head(fused, p), gate_per_link};
  }

  ModelConfig cfg_;
  Tensor a_fix_;
  ParamStore params_;
};

// ---- optimizer and training loop ----

class Adam {
 public:
  Adam(ParamStore& store, double lr, double clip)
      : store_(&store), lr_(lr), clip_(clip) {
    for (const auto& p : store.all())
      state_.push_back({std::vector<double>(p.tensor.size(), 0.0),
                        std::vector<double>(p.tensor.size(), 0.0)});
  }

  void step() {
    ++t_;
    double norm2 = 0.0;
    for (auto& p : store_->all())
      for (double g : p.tensor.grad()) norm2 += g * g;
    double scale = 1.0;
    double norm = std::sqrt(norm2);
    if (clip_ > 0.0 && norm > clip_) scale = clip_ / norm;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1.0 - std::pow(b1, t_), bc2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < state_.size(); ++i) {
      auto& p = store_->all()[i].tensor;
      auto& [m, v] = state_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        double g = p.grad()[j] * scale;
        m[j] = b1 * m[j] + (1.0 - b1) * g;
        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
        p.data()[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
      }
    }
  }

 private:
  ParamStore* store_;
  double lr_, clip_;
  int t_ = 0;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> state_;
};

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0, val_loss = 0.0;
  double val_mae_delay = 0.0, val_mae_queue = 0.0;
  double gate_mean_normal = 0.0, gate_mean_abnormal = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

struct ValStats {
  double loss = 0.0, mae_delay = 0.0, mae_queue = 0.0;
};

inline ValStats validate_model(AastGcn& model, const std::vector<Sample>& val) {
  ValStats s;
  if (val.empty()) return s;
  double abs_d = 0.0, abs_q = 0.0;
  std::size_t n_cells = 0;
  for (const auto& sample : val) {
    auto out = model.forward(sample, false, nullptr);
    s.loss += model.loss(out, sample).item();
    auto served = model.route(out, sample.abnormal_flag);
    for (std::size_t i = 0; i < served.size(); i += 2) {
      abs_d += std::fabs(served[i] - sample.target[i]);
      abs_q += std::fabs(served[i + 1] - sample.target[i + 1]);
      ++n_cells;
    }
  }
  s.loss /= static_cast<double>(val.size());
  s.mae_delay = abs_d / static_cast<double>(n_cells);
  s.mae_queue = abs_q / static_cast<double>(n_cells);
  return s;
}

// Mini-batch Adam with early stopping on validation loss; restores the best
// checkpoint into the model before returning.
inline TrainResult train(AastGcn& model, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& val_set) {
  const ModelConfig& cfg = model.config();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  Adam opt(model.params(), cfg.lr, cfg.grad_clip);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);

  TrainResult res;
  std::vector<std::vector<double>> best;
  int stale = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0u);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0, gate_n = 0.0, gate_a = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      model.params().zero_grad();
      Tensor batch_loss;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train_set[order[i]];
        auto out = model.forward(s, true, &dropout_rng);
        gate_n += out.gate_mean_normal;
        gate_a += out.gate_mean_abnormal;
        Tensor l = model.loss(out, s);
        batch_loss = i == start ? l : add(batch_loss, l);
      }
      batch_loss = affine(batch_loss, 1.0 / static_cast<double>(end - start), 0.0);
      double lv = batch_loss.item();
      if (!std::isfinite(lv)) throw std::runtime_error("training diverged: non-finite loss");
      backward(batch_loss);
      opt.step();
      epoch_loss += lv;
      ++batches;
    }

    auto vs = validate_model(model, val_set);
    TrainLogRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / static_cast<double>(batches);
    row.val_loss = vs.loss;
    row.val_mae_delay = vs.mae_delay;
    row.val_mae_queue = vs.mae_queue;
    row.gate_mean_normal = gate_n / static_cast<double>(train_set.size());
    row.gate_mean_abnormal = gate_a / static_cast<double>(train_set.size());
    res.log.push_back(row);

    double monitored = val_set.empty() ? row.train_loss : vs.loss;
    if (res.best_epoch < 0 || monitored < res.best_val_loss) {
      res.best_epoch = epoch;
      res.best_val_loss = monitored;
      best = model.params().snapshot();
      stale = 0;
    } else if (++stale >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  if (!best.empty()) model.params().restore(best);
  return res;
}

// ---- checkpoint serialization ----

inline constexpr const char* kCheckpointMagic = "numkernel-checkpoint-v1";

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_links", c.n_links},       {"t_in", c.t_in},
          {"horizon", c.horizon},       {"hidden", c.hidden},
          {"embed_traffic", c.embed_traffic}, {"embed_temporal", c.embed_temporal},
          {"embed_road", c.embed_road}, {"blocks", c.blocks},
          {"dilations", c.dilations},   {"kernel", c.kernel},
          {"k_gc", c.k_gc},             {"d_node", c.d_node},
          {"dropout", c.dropout},       {"w_abnormal", c.w_abnormal},
          {"smooth_l1_beta", c.smooth_l1_beta}, {"lr", c.lr},
          {"grad_clip", c.grad_clip},   {"batch", c.batch},
          {"epochs", c.epochs},         {"patience", c.patience},
          {"seed", c.seed},             {"vocab_tod", c.vocab_tod},
          {"vocab_dow", c.vocab_dow},   {"vocab_holiday", c.vocab_holiday},
          {"vocab_peak", c.vocab_peak}, {"vocab_road", c.vocab_road},
          {"vocab_lane", c.vocab_lane}, {"vocab_speed", c.vocab_speed},
          {"use_embedding", c.use_embedding}, {"use_tcn", c.use_tcn},
          {"use_gcn", c.use_gcn},       {"use_adaptive", c.use_adaptive},
          {"use_gate", c.use_gate},     {"use_historical", c.use_historical},
          {"use_dual_expert", c.use_dual_expert}, {"zero_mask_inputs", c.zero_mask_inputs},
          {"target_mean_delay", c.target_mean_delay},
          {"target_mean_queue", c.target_mean_queue}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_links = j.at("n_links");
  c.t_in = j.at("t_in");
  c.horizon = j.at("horizon");
  c.hidden = j.at("hidden");
  c.embed_traffic = j.at("embed_traffic");
  c.embed_temporal = j.at("embed_temporal");
  c.embed_road = j.at("embed_road");
  c.blocks = j.at("blocks");
  c.dilations = j.at("dilations").get<std::vector<int>>();
  c.kernel = j.at("kernel");
  c.k_gc = j.at("k_gc");
  c.d_node = j.at("d_node");
  c.dropout = j.at("dropout");
  c.w_abnormal = j.at("w_abnormal");
  c.smooth_l1_beta = j.at("smooth_l1_beta");
  c.lr = j.at("lr");
  c.grad_clip = j.at("grad_clip");
  c.batch = j.at("batch");
  c.epochs = j.at("epochs");
  c.patience = j.at("patience");
  c.seed = j.at("seed");
  c.vocab_tod = j.at("vocab_tod");
  c.vocab_dow = j.at("vocab_dow");
  c.vocab_holiday = j.at("vocab_holiday");
  c.vocab_peak = j.at("vocab_peak");
  c.vocab_road = j.at("vocab_road");
  c.vocab_lane = j.at("vocab_lane");
  c.vocab_speed = j.at("vocab_speed");
  c.use_embedding = j.at("use_embedding");
  c.use_tcn = j.at("use_tcn");
  c.use_gcn = j.at("use_gcn");
  c.use_adaptive = j.at("use_adaptive");
  c.use_gate = j.at("use_gate");
  c.use_historical = j.at("use_historical");
  c.use_dual_expert = j.at("use_dual_expert");
  c.zero_mask_inputs = j.at("zero_mask_inputs");
  c.target_mean_delay = j.at("target_mean_delay");
  c.target_mean_queue = j.at("target_mean_queue");
  return c;
}

inline nlohmann::json checkpoint_to_json(const AastGcn& model) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.params().all())
    params[p.name] = {{"shape", p.tensor.shape()}, {"values", p.tensor.data()}};
  return {{"magic", kCheckpointMagic},
          {"config", config_to_json(model.config())},
          {"adjacency", model.fixed_adjacency().data()},
          {"params", params}};
}

inline AastGcn checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("magic", "") != kCheckpointMagic)
    throw std::runtime_error("not a model checkpoint (bad magic)");
  AastGcn model(config_from_json(j.at("config")),
                j.at("adjacency").get<std::vector<double>>());
  for (auto& p : model.params().all()) {
    const auto& jp = j.at("params").at(p.name);
    auto values = jp.at("values").get<std::vector<double>>();
    if (values.size() != p.tensor.size())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    p.tensor.data() = std::move(values);
  }
  return model;
}

}  // namespace arterial::nn
