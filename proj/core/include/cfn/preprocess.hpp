#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "cfn/data.hpp"

namespace cfn {

enum class Orientation { by_user, by_item };

/// Per-entity rating means used to center the training data.
struct BiasTable {
  Orientation orientation = Orientation::by_item;
  /// One mean per user (by_user) or per item (by_item). Entities without
  /// training ratings hold global_mean.
  std::vector<double> means;
  double global_mean = 0.0;

  double mean(Index entity) const { return means[entity]; }
};

BiasTable fit_bias(const RatingMatrix& train, Orientation orientation);

/// Affine map between centered ratings and the tanh output range.
///
/// The centered interval [centered_low, centered_high] is scaled by its
/// largest magnitude, so a rating equal to its entity mean maps to 0 (the
/// value fed for unknown inputs) and every centered training rating lands in
/// [-1, 1].
class Scaler {
 public:
  Scaler() = default;
  Scaler(RatingScale scale, double centered_low, double centered_high);

  /// Centered range [min_rating - max mean, max_rating - min mean].
  static Scaler fit(const RatingScale& scale, const BiasTable& bias);

  const RatingScale& scale() const { return scale_; }
  double centered_low() const { return low_; }
  double centered_high() const { return high_; }
  double half_width() const { return half_width_; }

  /// Throws NumericError on non-finite input.
  double transform(double rating, Index entity, const BiasTable& bias) const;
  /// Clamped to the rating scale.
  double inverse_transform(double value, Index entity, const BiasTable& bias) const;
  double inverse_transform_unclamped(double value, Index entity, const BiasTable& bias) const;

 private:
  RatingScale scale_;
  double low_ = -1.0;
  double high_ = 1.0;
  double half_width_ = 1.0;
};

/// Dense per-entity feature rows: SVD columns first, then binary columns.
struct SideInfoTable {
  Eigen::MatrixXd features;  // n_entities x dim, row-major semantics via row(e)
  std::size_t svd_dim = 0;

  std::size_t n_entities() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  static SideInfoTable empty(std::size_t n_entities) {
    return SideInfoTable{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_entities), 0), 0};
  }
};

struct SvdEmbedding {
  SideInfoTable table;
  /// Leading singular values of the tag matrix, descending (length k_prime,
  /// zero-padded past the numerical rank).
  Eigen::VectorXd singular_values;
  /// Columns filled with zeros because k_prime exceeded the rank.
  std::size_t padded_columns = 0;
};

struct SvdOptions {
  std::size_t oversampling = 10;
  std::size_t power_iterations = 4;
  std::uint64_t seed = 0x5eed;
};

/// Y = P_k * D_k^(1/2) from the truncated SVD T = P D Q^T (singular values
/// descending), computed by randomized subspace iteration. Exact up to
/// round-off when k_prime + oversampling covers min(n_entities, n_tags).
SvdEmbedding svd_embed(const TagMatrix& tags, std::size_t k_prime, const SvdOptions& options = {});

/// Horizontal concatenation [svd_part | binary_part]. Throws DataError when the
/// entity counts differ.
SideInfoTable build_side_info(const SideInfoTable& svd_part, const TagMatrix& binary_part);

/// `entity,f0,f1,...` with raw entity ids.
void write_side_info_csv(const std::filesystem::path& path, const SideInfoTable& table, const IdMap& entities);

}  // namespace cfn
