#pragma once

// Minimal reverse-mode autodiff over dense double-precision tensors. The op
// set is exactly what the forecasting network needs: matmul, dilated causal
// convolution, elementwise nonlinearities, broadcasting add/mul, row softmax,
// concatenation, gathers, and reductions. Graphs are built per forward pass
// and freed when the result tensors go out of scope.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace arterial::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;  // accumulates this->grad into parents

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  bool is_leaf() const { return parents.empty() && !backward_fn; }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->data.assign(numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) throw std::invalid_argument("shape/data size mismatch");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor scalar(double v) { return from({1}, {v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  std::shared_ptr<Node> node() const { return node_; }
  double item() const {
    if (node_->data.size() != 1) throw std::logic_error("item() on non-scalar");
    return node_->data[0];
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }
  bool defined() const { return node_ != nullptr; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline bool needs_graph(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->requires_grad() || !t->node()->parents.empty() || t->node()->backward_fn) return true;
  return false;
}

inline std::shared_ptr<Node> make_result(Shape shape, std::vector<double> data,
                                         std::vector<std::shared_ptr<Node>> parents,
                                         std::function<void()> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool track = false;
  for (const auto& p : parents)
    if (p->requires_grad || !p->parents.empty() || p->backward_fn) track = true;
  if (track) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
    n->requires_grad = true;
  }
  return n;
}

// Trailing-axis broadcasting only: b's shape must equal the trailing dims of
// a's shape.
inline void check_trailing(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) throw std::invalid_argument("broadcast: rhs rank exceeds lhs");
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i])
      throw std::invalid_argument("broadcast: trailing dimensions differ");
}

}  // namespace detail

// loss must be scalar; accumulates d(loss)/d(param) on every reachable
// grad-requiring leaf. Non-leaf grads are reset per call, so repeated calls
// add one full pass each.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::logic_error("backward() requires a scalar loss");
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : topo) {
    n->ensure_grad();
    if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

// a: [..., m, k] (any leading dims), b: [k, n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() < 1 || b.shape().size() != 2)
    throw std::invalid_argument("matmul: rhs must be 2-D");
  const int k = b.shape()[0];
  const int n = b.shape()[1];
  if (a.shape().back() != k) throw std::invalid_argument("matmul: inner dimensions disagree");
  const std::size_t rows = a.size() / static_cast<std::size_t>(k);

  std::vector<double> out(rows * static_cast<std::size_t>(n), 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* arow = ad + r * static_cast<std::size_t>(k);
    double* orow = out.data() + r * static_cast<std::size_t>(n);
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = bd + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Shape os(a.shape().begin(), a.shape().end() - 1);
  os.push_back(n);

  auto an = a.node(), bn = b.node();
  auto result = detail::make_result(std::move(os), std::move(out), {an, bn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [an, bn, wr, rows, k, n]() {
      auto r = wr.lock();
      if (!r) return;
      const double* g = r->grad.data();
      an->ensure_grad();
      bn->ensure_grad();
      const double* bd = bn->data.data();
      const double* ad = an->data.data();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* grow = g + row * static_cast<std::size_t>(n);
        double* garow = an->grad.data() + row * static_cast<std::size_t>(k);
        const double* arow = ad + row * static_cast<std::size_t>(k);
        for (int kk = 0; kk < k; ++kk) {
          const double* brow = bd + static_cast<std::size_t>(kk) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          garow[kk] += acc;
          const double av = arow[kk];
          if (av != 0.0) {
            double* gbrow = bn->grad.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return Tensor(result);
}

// x: [node, in, time], f: [out, in, K]; left zero padding, dilation d.
inline Tensor dilated_causal_conv(const Tensor& x, const Tensor& f, int d) {
  if (x.shape().size() != 3 || f.shape().size() != 3)
    throw std::invalid_argument("conv: expects x[node,in,time], f[out,in,K]");
  if (d < 1) throw std::invalid_argument("conv: dilation must be >= 1");
  const int N = x.shape()[0], Cin = x.shape()[1], T = x.shape()[2];
  const int Cout = f.shape()[0], K = f.shape()[2];
  if (f.shape()[1] != Cin) throw std::invalid_argument("conv: channel mismatch");

  std::vector<double> out(static_cast<std::size_t>(N) * Cout * T, 0.0);
  const double* xd = x.data().data();
  const double* fd = f.data().data();
  for (int nn = 0; nn < N; ++nn)
    for (int o = 0; o < Cout; ++o) {
      double* orow = out.data() + (static_cast<std::size_t>(nn) * Cout + o) * T;
      for (int c = 0; c < Cin; ++c) {
        const double* xrow = xd + (static_cast<std::size_t>(nn) * Cin + c) * T;
        const double* frow = fd + (static_cast<std::size_t>(o) * Cin + c) * K;
        for (int k = 0; k < K; ++k) {
          const double fv = frow[k];
          if (fv == 0.0) continue;
          const int shift = d * k;
          for (int t = shift; t < T; ++t) orow[t] += fv * xrow[t - shift];
        }
      }
    }

  auto xn = x.node(), fn = f.node();
  auto result = detail::make_result({N, Cout, T}, std::move(out), {xn, fn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, fn, wr, N, Cin, Cout, T, K, d]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      fn->ensure_grad();
      const double* g = r->grad.data();
      const double* xd = xn->data.data();
      const double* fd = fn->data.data();
      for (int nn = 0; nn < N; ++nn)
        for (int o = 0; o < Cout; ++o) {
          const double* grow = g + (static_cast<std::size_t>(nn) * Cout + o) * T;
          for (int c = 0; c < Cin; ++c) {
            const double* xrow = xd + (static_cast<std::size_t>(nn) * Cin + c) * T;
            double* gxrow = xn->grad.data() + (static_cast<std::size_t>(nn) * Cin + c) * T;
            const double* frow = fd + (static_cast<std::size_t>(o) * Cin + c) * K;
            double* gfrow = fn->grad.data() + (static_cast<std::size_t>(o) * Cin + c) * K;
            for (int k = 0; k < K; ++k) {
              const int shift = d * k;
              const double fv = frow[k];
              double facc = 0.0;
              for (int t = shift; t < T; ++t) {
                facc += grow[t] * xrow[t - shift];
                if (fv != 0.0) gxrow[t - shift] += fv * grow[t];
              }
              gfrow[k] += facc;
            }
          }
        }
    };
  }
  return Tensor(result);
}

namespace detail {

inline Tensor unary(const Tensor& x, const std::function<double(double)>& fwd,
                    const std::function<double(double, double)>& dfd /* (x, y) -> dy/dx */) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x.data()[i]);
  auto xn = x.node();
  auto result = make_result(x.shape(), std::move(out), {xn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, wr, dfd]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < r->data.size(); ++i)
        xn->grad[i] += r->grad[i] * dfd(xn->data[i], r->data[i]);
    };
  }
  return Tensor(result);
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

// Subgradient 0 at 0.
inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

// y = a*x + b with scalar constants.
inline Tensor affine(const Tensor& x, double a, double b) {
  return detail::unary(
      x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_trailing(a.shape(), b.shape());
  const std::size_t bn_ = b.size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i % bn_];
  auto an = a.node(), bn = b.node();
  auto result = detail::make_result(a.shape(), std::move(out), {an, bn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [an, bn, wr, bn_]() {
      auto r = wr.lock();
      if (!r) return;
      an->ensure_grad();
      bn->ensure_grad();
      for (std::size_t i = 0; i < r->grad.size(); ++i) {
        an->grad[i] += r->grad[i];
        bn->grad[i % bn_] += r->grad[i];
      }
    };
  }
  return Tensor(result);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_trailing(a.shape(), b.shape());
  const std::size_t bn_ = b.size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i % bn_];
  auto an = a.node(), bn = b.node();
  auto result = detail::make_result(a.shape(), std::move(out), {an, bn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [an, bn, wr, bn_]() {
      auto r = wr.lock();
      if (!r) return;
      an->ensure_grad();
      bn->ensure_grad();
      for (std::size_t i = 0; i < r->grad.size(); ++i) {
        an->grad[i] += r->grad[i] * bn->data[i % bn_];
        bn->grad[i % bn_] += r->grad[i] * an->data[i];
      }
    };
  }
  return Tensor(result);
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, affine(b, -1.0, 0.0)); }

// Numerically stabilized softmax along the last axis; rows sum to 1.
inline Tensor row_softmax(const Tensor& x) {
  const int n = x.shape().back();
  const std::size_t rows = x.size() / static_cast<std::size_t>(n);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * static_cast<std::size_t>(n);
    double* yi = out.data() + r * static_cast<std::size_t>(n);
    double mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += (yi[j] = std::exp(xi[j] - mx));
    for (int j = 0; j < n; ++j) yi[j] /= sum;
  }
  auto xn = x.node();
  auto result = detail::make_result(x.shape(), std::move(out), {xn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, wr, rows, n]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* y = r->data.data() + row * static_cast<std::size_t>(n);
        const double* g = r->grad.data() + row * static_cast<std::size_t>(n);
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += y[j] * g[j];
        double* gx = xn->grad.data() + row * static_cast<std::size_t>(n);
        for (int j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Tensor(result);
}

// Concatenate along the last axis; all other dims must match.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  int total_last = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) throw std::invalid_argument("concat: leading dims differ");
    total_last += p.shape().back();
  }
  const std::size_t rows = parts[0].size() / static_cast<std::size_t>(parts[0].shape().back());
  std::vector<double> out(rows * static_cast<std::size_t>(total_last));
  std::size_t off = 0;
  for (const auto& p : parts) {
    const int w = p.shape().back();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().data() + r * static_cast<std::size_t>(w), w,
                  out.data() + r * static_cast<std::size_t>(total_last) + off);
    off += static_cast<std::size_t>(w);
  }
  Shape os = lead;
  os.push_back(total_last);
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  auto result = detail::make_result(std::move(os), std::move(out), parents, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    std::vector<int> widths;
    for (const auto& p : parts) widths.push_back(p.shape().back());
    result->backward_fn = [parents, wr, widths, rows, total_last]() {
      auto r = wr.lock();
      if (!r) return;
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < parents.size(); ++pi) {
        auto& p = parents[pi];
        p->ensure_grad();
        const int w = widths[pi];
        for (std::size_t row = 0; row < rows; ++row) {
          const double* g = r->grad.data() + row * static_cast<std::size_t>(total_last) + off;
          double* gp = p->grad.data() + row * static_cast<std::size_t>(w);
          for (int j = 0; j < w; ++j) gp[j] += g[j];
        }
        off += static_cast<std::size_t>(w);
      }
    };
  }
  return Tensor(result);
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) throw std::invalid_argument("reshape: element count differs");
  auto xn = x.node();
  auto result = detail::make_result(std::move(shape), x.data(), {xn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, wr]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < r->grad.size(); ++i) xn->grad[i] += r->grad[i];
    };
  }
  return Tensor(result);
}

// Swap the last two axes.
inline Tensor transpose_last2(const Tensor& x) {
  if (x.shape().size() < 2) throw std::invalid_argument("transpose needs rank >= 2");
  const int a = x.shape()[x.shape().size() - 2];
  const int b = x.shape().back();
  const std::size_t blocks = x.size() / static_cast<std::size_t>(a * b);
  std::vector<double> out(x.size());
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const double* src = x.data().data() + blk * static_cast<std::size_t>(a * b);
    double* dst = out.data() + blk * static_cast<std::size_t>(a * b);
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j) dst[static_cast<std::size_t>(j) * a + i] = src[static_cast<std::size_t>(i) * b + j];
  }
  Shape os = x.shape();
  std::swap(os[os.size() - 2], os.back());
  auto xn = x.node();
  auto result = detail::make_result(std::move(os), std::move(out), {xn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, wr, a, b, blocks]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      for (std::size_t blk = 0; blk < blocks; ++blk) {
        const double* g = r->grad.data() + blk * static_cast<std::size_t>(a * b);
        double* gx = xn->grad.data() + blk * static_cast<std::size_t>(a * b);
        for (int i = 0; i < a; ++i)
          for (int j = 0; j < b; ++j) gx[static_cast<std::size_t>(i) * b + j] += g[static_cast<std::size_t>(j) * a + i];
      }
    };
  }
  return Tensor(result);
}

// Embedding lookup: table [V, D], one output row per index.
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& indices) {
  if (table.shape().size() != 2) throw std::invalid_argument("gather: table must be 2-D");
  const int V = table.shape()[0], D = table.shape()[1];
  std::vector<double> out(indices.size() * static_cast<std::size_t>(D));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= V)
      throw std::out_of_range("gather: code index " + std::to_string(indices[i]) +
                              " outside vocabulary of " + std::to_string(V));
    std::copy_n(table.data().data() + static_cast<std::size_t>(indices[i]) * D, D,
                out.data() + i * static_cast<std::size_t>(D));
  }
  auto tn = table.node();
  auto result = detail::make_result({static_cast<int>(indices.size()), D}, std::move(out), {tn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [tn, wr, indices, D]() {
      auto r = wr.lock();
      if (!r) return;
      tn->ensure_grad();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* g = r->grad.data() + i * static_cast<std::size_t>(D);
        double* gt = tn->grad.data() + static_cast<std::size_t>(indices[i]) * D;
        for (int j = 0; j < D; ++j) gt[j] += g[j];
      }
    };
  }
  return Tensor(result);
}

// Last slice along the time (final) axis: [..., T] -> [...].
inline Tensor last_step(const Tensor& x) {
  const int T = x.shape().back();
  const std::size_t rows = x.size() / static_cast<std::size_t>(T);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = x.data()[r * static_cast<std::size_t>(T) + T - 1];
  Shape os(x.shape().begin(), x.shape().end() - 1);
  auto xn = x.node();
  auto result = detail::make_result(std::move(os), std::move(out), {xn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, wr, T, rows]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      for (std::size_t row = 0; row < rows; ++row)
        xn->grad[row * static_cast<std::size_t>(T) + T - 1] += r->grad[row];
    };
  }
  return Tensor(result);
}

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xn = x.node();
  auto result = detail::make_result({1}, {s}, {xn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [xn, wr]() {
      auto r = wr.lock();
      if (!r) return;
      xn->ensure_grad();
      for (auto& g : xn->grad) g += r->grad[0];
    };
  }
  return Tensor(result);
}

inline Tensor mean_all(const Tensor& x) {
  return affine(sum_all(x), 1.0 / static_cast<double>(x.size()), 0.0);
}

// Weighted Smooth-L1 against a constant target: mean over cells with w > 0.
// Transition at |e| = beta; returns scalar 0 when all weights vanish.
inline Tensor smooth_l1(const Tensor& pred, const std::vector<double>& target,
                        const std::vector<double>& weight, double beta = 1.0) {
  if (target.size() != pred.size() || weight.size() != pred.size())
    throw std::invalid_argument("smooth_l1: size mismatch");
  double wsum = 0.0;
  for (double w : weight) wsum += w;
  std::vector<double> out(1, 0.0);
  if (wsum > 0.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      double e = pred.data()[i] - target[i];
      double a = std::fabs(e);
      acc += weight[i] * (a < beta ? 0.5 * e * e / beta : a - 0.5 * beta);
    }
    out[0] = acc / wsum;
  }
  auto pn = pred.node();
  auto result = detail::make_result({1}, std::move(out), {pn}, nullptr);
  if (result->requires_grad) {
    std::weak_ptr<Node> wr = result;
    result->backward_fn = [pn, wr, target, weight, beta, wsum]() {
      auto r = wr.lock();
      if (!r || wsum <= 0.0) return;
      pn->ensure_grad();
      const double g = r->grad[0] / wsum;
      for (std::size_t i = 0; i < pn->data.size(); ++i) {
        double e = pn->data[i] - target[i];
        double d = std::fabs(e) < beta ? e / beta : (e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0));
        pn->grad[i] += g * weight[i] * d;
      }
    };
  }
  return Tensor(result);
}

struct Param {
  std::string name;
  Tensor tensor;  // requires_grad = true

  Param() = default;
  Param(std::string n, Tensor t) : name(std::move(n)), tensor(std::move(t)) {}
};

}  // namespace arterial::nn
