#include "cfn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <Eigen/SVD>
#include <Eigen/SparseCore>

#include "cfn/error.hpp"
#include "cfn/rng.hpp"
#include "csv.hpp"

namespace cfn {

BiasTable fit_bias(const RatingMatrix& train, Orientation orientation) {
  if (train.empty()) throw DataError("cannot fit biases on an empty training set");
  BiasTable bias;
  bias.orientation = orientation;
  const std::size_t n = orientation == Orientation::by_user ? train.n_users() : train.n_items();
  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  double total = 0.0;
  for (const auto& r : train.entries()) {
    const Index e = orientation == Orientation::by_user ? r.user : r.item;
    sums[e] += r.value;
    ++counts[e];
    total += r.value;
  }
  bias.global_mean = total / static_cast<double>(train.size());
  bias.means.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    bias.means[e] = counts[e] > 0 ? sums[e] / static_cast<double>(counts[e]) : bias.global_mean;
  }
  return bias;
}

Scaler::Scaler(RatingScale scale, double centered_low, double centered_high)
    : scale_(scale), low_(centered_low), high_(centered_high) {
  half_width_ = std::max(std::abs(low_), std::abs(high_));
  if (!(low_ <= high_) || !(half_width_ > 0.0) || !std::isfinite(half_width_)) {
    throw NumericError("scaler requires a finite, non-empty centered range");
  }
}

Scaler Scaler::fit(const RatingScale& scale, const BiasTable& bias) {
  const auto [lo, hi] = std::minmax_element(bias.means.begin(), bias.means.end());
  const double min_mean = bias.means.empty() ? bias.global_mean : *lo;
  const double max_mean = bias.means.empty() ? bias.global_mean : *hi;
  return Scaler(scale, scale.min_rating - max_mean, scale.max_rating - min_mean);
}

double Scaler::transform(double rating, Index entity, const BiasTable& bias) const {
  if (!std::isfinite(rating)) throw NumericError("cannot transform a non-finite rating");
  return (rating - bias.mean(entity)) / half_width_;
}

double Scaler::inverse_transform_unclamped(double value, Index entity, const BiasTable& bias) const {
  if (!std::isfinite(value)) throw NumericError("cannot invert a non-finite network output");
  return value * half_width_ + bias.mean(entity);
}

double Scaler::inverse_transform(double value, Index entity, const BiasTable& bias) const {
  return scale_.clamp(inverse_transform_unclamped(value, entity, bias));
}

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

}  // namespace

SvdEmbedding svd_embed(const TagMatrix& tags, std::size_t k_prime, const SvdOptions& options) {
  const auto rows = static_cast<Eigen::Index>(tags.n_entities());
  const auto cols = static_cast<Eigen::Index>(tags.n_tags());
  const auto k = static_cast<Eigen::Index>(k_prime);

  SvdEmbedding out;
  out.table.features = Eigen::MatrixXd::Zero(rows, k);
  out.table.svd_dim = k_prime;
  out.singular_values = Eigen::VectorXd::Zero(k);
  if (rows == 0 || cols == 0 || tags.empty() || k == 0) {
    out.padded_columns = k_prime;
    return out;
  }

  Eigen::SparseMatrix<double, Eigen::RowMajor> t(rows, cols);
  {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(tags.entries().size());
    for (const auto& e : tags.entries()) triplets.emplace_back(e.entity, e.tag, e.count);
    t.setFromTriplets(triplets.begin(), triplets.end());
  }

  const Eigen::Index full = std::min(rows, cols);
  const Eigen::Index sketch = std::min<Eigen::Index>(k + static_cast<Eigen::Index>(options.oversampling), full);

  Rng rng(options.seed);
  Eigen::MatrixXd omega(cols, sketch);
  for (Eigen::Index j = 0; j < sketch; ++j)
    for (Eigen::Index i = 0; i < cols; ++i) omega(i, j) = rng.normal();

  Eigen::MatrixXd q = orthonormal_basis(t * omega);
  if (sketch < full) {
    for (std::size_t it = 0; it < options.power_iterations; ++it) {
      const Eigen::MatrixXd z = orthonormal_basis(t.transpose() * q);
      q = orthonormal_basis(t * z);
    }
  }

  const Eigen::MatrixXd b = q.transpose() * t;  // sketch x cols
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const Eigen::MatrixXd p = q * svd.matrixU();

  const double tol = static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() *
                     (sigma.size() > 0 ? sigma(0) : 0.0);
  for (Eigen::Index c = 0; c < k; ++c) {
    if (c >= sigma.size() || !(sigma(c) > tol)) {
      ++out.padded_columns;
      continue;
    }
    Eigen::VectorXd col = p.col(c);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) col = -col;  // fix the sign ambiguity
    out.singular_values(c) = sigma(c);
    out.table.features.col(c) = col * std::sqrt(sigma(c));
  }
  return out;
}

SideInfoTable build_side_info(const SideInfoTable& svd_part, const TagMatrix& binary_part) {
  if (svd_part.n_entities() != binary_part.n_entities()) {
    throw DataError("side information tables disagree on the entity count (" + std::to_string(svd_part.n_entities()) +
                    " vs " + std::to_string(binary_part.n_entities()) + ")");
  }
  SideInfoTable out;
  out.svd_dim = svd_part.dim();
  const auto n = static_cast<Eigen::Index>(svd_part.n_entities());
  const auto d_svd = static_cast<Eigen::Index>(svd_part.dim());
  out.features = Eigen::MatrixXd::Zero(n, d_svd + static_cast<Eigen::Index>(binary_part.n_tags()));
  out.features.leftCols(d_svd) = svd_part.features;
  for (const auto& e : binary_part.entries()) out.features(e.entity, d_svd + e.tag) = e.count;
  return out;
}

void write_side_info_csv(const std::filesystem::path& path, const SideInfoTable& table, const IdMap& entities) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "entity";
  for (std::size_t c = 0; c < table.dim(); ++c) out << ",f" << c;
  out << '\n';
  char buf[64];
  for (Eigen::Index e = 0; e < table.features.rows(); ++e) {
    out << detail::quote_csv(entities.raw(static_cast<Index>(e)));
    for (Eigen::Index c = 0; c < table.features.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", table.features(e, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace cfn
