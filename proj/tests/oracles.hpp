#pragma once

// Straight-line reference computations used as independent oracles. Nothing
// here touches Eigen or the library's kernels: plain vectors and loops only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "cfn/data.hpp"
#include "cfn/model.hpp"
#include "cfn/rng.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
inline std::vector<double> jacobi_eigenvalues(Dense a, double tol = 1e-15, int max_sweeps = 100) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += a[i][j] * a[i][j];
    if (off <= tol * tol * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

/// Singular values of T (rows x cols), descending, via eig(T^T T).
inline std::vector<double> singular_values(const Dense& t) {
  const std::size_t rows = t.size(), cols = t.empty() ? 0 : t[0].size();
  Dense gram(cols, std::vector<double>(cols, 0.0));
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t r = 0; r < rows; ++r) gram[i][j] += t[r][i] * t[r][j];
  auto eig = jacobi_eigenvalues(gram);
  for (double& e : eig) e = std::sqrt(std::max(e, 0.0));
  return eig;
}

/// Plain copy of the network weights as nested vectors.
struct Net {
  Dense w1, w2;  // w1: k x (n + p_in), w2: n x (k + p_h)
  std::vector<double> b1, b2;
  std::size_t n = 0, k = 0, p_in = 0, p_h = 0;
};

inline Net copy(const cfn::AutoencoderParams& p) {
  Net net;
  net.n = p.input_dim();
  net.k = p.hidden();
  net.p_in = p.side_input();
  net.p_h = p.side_hidden();
  net.w1.assign(net.k, std::vector<double>(net.n + net.p_in));
  for (std::size_t r = 0; r < net.k; ++r)
    for (std::size_t c = 0; c < net.n + net.p_in; ++c) net.w1[r][c] = p.w1(r, c);
  net.w2.assign(net.n, std::vector<double>(net.k + net.p_h));
  for (std::size_t r = 0; r < net.n; ++r)
    for (std::size_t c = 0; c < net.k + net.p_h; ++c) net.w2[r][c] = p.w2(r, c);
  net.b1.assign(p.b1.data(), p.b1.data() + net.k);
  net.b2.assign(p.b2.data(), p.b2.data() + net.n);
  return net;
}

/// Term-by-term evaluation of
///   u' = tanh(W1' [x; side] + b1)
///   out_j = tanh(V'[1:k] u' + V'[k+1:k+P] side + b2)_j
inline std::vector<double> forward(const Net& net, const std::vector<double>& x, const std::vector<double>& side) {
  std::vector<double> u(net.k);
  for (std::size_t h = 0; h < net.k; ++h) {
    double s = net.b1[h];
    for (std::size_t j = 0; j < net.n; ++j) s += net.w1[h][j] * x[j];
    for (std::size_t q = 0; q < net.p_in; ++q) s += net.w1[h][net.n + q] * side[q];
    u[h] = std::tanh(s);
  }
  std::vector<double> out(net.n);
  for (std::size_t j = 0; j < net.n; ++j) {
    double latent = 0.0;
    for (std::size_t h = 0; h < net.k; ++h) latent += net.w2[j][h] * u[h];
    double side_bias = 0.0;
    for (std::size_t q = 0; q < net.p_h; ++q) side_bias += net.w2[j][net.k + q] * side[q];
    out[j] = std::tanh(latent + side_bias + net.b2[j]);
  }
  return out;
}

/// Masked denoising loss evaluated from dense vectors; `known` and
/// `corrupted` are 0/1 flags.
inline double loss(const Net& net, const std::vector<double>& x, const std::vector<int>& known,
                   const std::vector<double>& x_tilde, const std::vector<int>& corrupted,
                   const std::vector<double>& side, double alpha, double beta, double lambda) {
  const auto out = forward(net, x_tilde, side);
  double pred = 0.0, rec = 0.0;
  for (std::size_t j = 0; j < net.n; ++j) {
    if (!known[j]) continue;
    const double e = out[j] - x[j];
    (corrupted[j] ? pred : rec) += e * e;
  }
  double reg = 0.0;
  for (const auto& row : net.w1)
    for (double w : row) reg += w * w;
  for (const auto& row : net.w2)
    for (double w : row) reg += w * w;
  return alpha * pred + beta * rec + lambda * reg;
}

inline double rmse(const std::vector<double>& truth, const std::vector<double>& predicted) {
  double s = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) s += (truth[t] - predicted[t]) * (truth[t] - predicted[t]);
  return std::sqrt(s / static_cast<double>(truth.size()));
}

/// Row (by_user) or column means of a dense matrix with NaN for missing.
inline std::vector<double> means(const Dense& m, bool by_row, double fallback) {
  const std::size_t rows = m.size(), cols = m[0].size();
  std::vector<double> out(by_row ? rows : cols);
  for (std::size_t e = 0; e < out.size(); ++e) {
    double s = 0.0;
    int c = 0;
    for (std::size_t t = 0; t < (by_row ? cols : rows); ++t) {
      const double v = by_row ? m[e][t] : m[t][e];
      if (!std::isnan(v)) {
        s += v;
        ++c;
      }
    }
    out[e] = c ? s / c : fallback;
  }
  return out;
}

/// Random sparse rating matrix with integer ratings in [1, 5].
inline cfn::RatingMatrix random_ratings(std::size_t users, std::size_t items, double density, std::uint64_t seed) {
  cfn::Rng rng(seed);
  std::vector<cfn::Rating> r;
  for (cfn::Index u = 0; u < users; ++u)
    for (cfn::Index i = 0; i < items; ++i)
      if (rng.uniform() < density) r.push_back({u, i, static_cast<double>(1 + rng.below(5))});
  if (r.empty()) r.push_back({0, 0, 3.0});
  return cfn::RatingMatrix(users, items, std::move(r));
}

inline Dense to_dense(const cfn::RatingMatrix& m) {
  Dense d(m.n_users(), std::vector<double>(m.n_items(), std::nan("")));
  for (const auto& r : m.entries()) d[r.user][r.item] = r.value;
  return d;
}

}  // namespace oracle
