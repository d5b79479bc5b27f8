#pragma once

// One-sided Jacobi SVD for the small dense matrices used to seed the adaptive
// adjacency node embeddings. Plenty for N x N with N in the dozens.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace arterial {

struct SvdResult {
  int m = 0, n = 0;
  std::vector<double> u;      // m x n, column-orthonormal (thin)
  std::vector<double> sigma;  // n singular values, descending
  std::vector<double> v;      // n x n orthonormal
};

// A is row-major m x n with m >= n.
inline SvdResult jacobi_svd(std::vector<double> a, int m, int n) {
  if (m < n || n <= 0) throw std::invalid_argument("jacobi_svd: needs m >= n > 0");
  if (static_cast<int>(a.size()) != m * n) throw std::invalid_argument("jacobi_svd: size mismatch");
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

  auto col_dot = [&](int p, int q) {
    double s = 0.0;
    for (int r = 0; r < m; ++r)
      s += a[static_cast<std::size_t>(r) * n + p] * a[static_cast<std::size_t>(r) * n + q];
    return s;
  };

  const double eps = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double app = col_dot(p, p), aqq = col_dot(q, q), apq = col_dot(p, q);
        off = std::max(off, std::fabs(apq) / std::max(std::sqrt(app * aqq), 1e-300));
        if (std::fabs(apq) <= eps * std::sqrt(app * aqq)) continue;
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (int r = 0; r < m; ++r) {
          double* row = a.data() + static_cast<std::size_t>(r) * n;
          double xp = row[p], xq = row[q];
          row[p] = c * xp - s * xq;
          row[q] = s * xp + c * xq;
        }
        for (int r = 0; r < n; ++r) {
          double* row = v.data() + static_cast<std::size_t>(r) * n;
          double xp = row[p], xq = row[q];
          row[p] = c * xp - s * xq;
          row[q] = s * xp + c * xq;
        }
      }
    }
    if (off < 1e-13) break;
  }

  SvdResult res;
  res.m = m;
  res.n = n;
  res.sigma.resize(static_cast<std::size_t>(n));
  res.u.assign(static_cast<std::size_t>(m) * n, 0.0);
  for (int j = 0; j < n; ++j) {
    double norm = std::sqrt(col_dot(j, j));
    res.sigma[static_cast<std::size_t>(j)] = norm;
    if (norm > 0)
      for (int r = 0; r < m; ++r)
        res.u[static_cast<std::size_t>(r) * n + j] = a[static_cast<std::size_t>(r) * n + j] / norm;
  }
  res.v = v;
  // sort descending by sigma, permuting U and V columns together
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return res.sigma[static_cast<std::size_t>(i)] > res.sigma[static_cast<std::size_t>(j)];
  });
  SvdResult out = res;
  for (int j = 0; j < n; ++j) {
    int src = order[static_cast<std::size_t>(j)];
    out.sigma[static_cast<std::size_t>(j)] = res.sigma[static_cast<std::size_t>(src)];
    for (int r = 0; r < m; ++r)
      out.u[static_cast<std::size_t>(r) * n + j] = res.u[static_cast<std::size_t>(r) * n + src];
    for (int r = 0; r < n; ++r)
      out.v[static_cast<std::size_t>(r) * n + j] = res.v[static_cast<std::size_t>(r) * n + src];
  }
  return out;
}

}  // namespace arterial
