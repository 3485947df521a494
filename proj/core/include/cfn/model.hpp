#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cfn/data.hpp"
#include "cfn/rng.hpp"

namespace cfn {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One-hidden-layer tanh autoencoder with optional side-information inputs.
///
///   h   = tanh(w1 * [x; side] + b1)          w1: k x (n + side_input)
///   out = tanh(w2 * [h; side] + b2)          w2: n x (k + side_hidden)
///
/// w1 is column-major so the column of an input unit is contiguous; w2 is
/// row-major so the row of an output unit is contiguous. Both match the sparse
/// access pattern of incomplete vectors.
struct AutoencoderParams {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  RowMajorMatrix w2;
  Eigen::VectorXd b2;

  std::size_t input_dim() const { return static_cast<std::size_t>(b2.size()); }
  std::size_t hidden() const { return static_cast<std::size_t>(b1.size()); }
  std::size_t side_input() const { return static_cast<std::size_t>(w1.cols() - b2.size()); }
  std::size_t side_hidden() const { return static_cast<std::size_t>(w2.cols() - b1.size()); }
  std::size_t side_dim() const { return side_input() > 0 ? side_input() : side_hidden(); }

  /// Sum of squared weights of w1 and w2 (biases excluded).
  double weight_norm_squared() const { return w1.squaredNorm() + w2.squaredNorm(); }
  bool all_finite() const;

  friend bool operator==(const AutoencoderParams& a, const AutoencoderParams& b);
};

/// Weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
AutoencoderParams init_params(std::size_t n, std::size_t k, std::size_t side_input, std::size_t side_hidden,
                              std::uint64_t seed);

/// Incomplete vector: known entries sorted by strictly increasing index.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<SparseEntry> known;

  /// Throws DataError if indices are unsorted, repeated or out of range.
  void validate() const;
  Eigen::VectorXd dense() const;
};

/// Indices of known entries masked out of the network input, sorted.
struct CorruptionMask {
  std::vector<Index> corrupted;

  bool contains(Index j) const;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.5;
  double lambda = 0.0;

  /// Throws DataError on negative weights or alpha == beta == 0.
  void validate() const;
};

struct Corrupted {
  SparseVector input;
  CorruptionMask mask;
};

/// Masks round(mask_ratio * |known|) entries drawn uniformly without
/// replacement; they are dropped from the input (fed as zeros).
Corrupted corrupt(const SparseVector& x, double mask_ratio, Rng& rng);

/// Full network output. Unknown input entries are zero. `side` must have
/// params.side_dim() entries (empty when side information is disabled).
Eigen::VectorXd forward(const AutoencoderParams& params, const SparseVector& x, std::span<const double> side = {});

/// Hidden activation tanh(w1 * [x; side] + b1).
Eigen::VectorXd hidden_activation(const AutoencoderParams& params, const SparseVector& x,
                                  std::span<const double> side = {});

/// Output unit j given a hidden activation.
double output_unit(const AutoencoderParams& params, const Eigen::VectorXd& hidden, Index j,
                   std::span<const double> side = {});

/// alpha * sum_{K(x) & C} (out_j - x_j)^2 + beta * sum_{K(x) \ C} (out_j - x_j)^2
///   + lambda * (|w1|^2 + |w2|^2), with out = forward(x_tilde).
double loss(const AutoencoderParams& params, const SparseVector& x, const SparseVector& x_tilde,
            const CorruptionMask& mask, const LossWeights& weights, std::span<const double> side = {});

/// Same shapes as AutoencoderParams.
struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  RowMajorMatrix w2;
  Eigen::VectorXd b2;

  static Gradients zeros_like(const AutoencoderParams& params);
  double squared_norm() const { return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm(); }
};

/// Exact gradient of loss() with respect to every parameter.
Gradients loss_gradients(const AutoencoderParams& params, const SparseVector& x, const SparseVector& x_tilde,
                         const CorruptionMask& mask, const LossWeights& weights, std::span<const double> side = {});

/// Dense gradient buffer that remembers which w1 columns and w2 rows were
/// written, so a minibatch update only has to visit (and then clear) those.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(const AutoencoderParams& params);

  /// Adds the data-term gradient of one sample (no weight decay) and returns
  /// its data loss.
  double add_sample(const AutoencoderParams& params, const SparseVector& x, const SparseVector& x_tilde,
                    const CorruptionMask& mask, const LossWeights& weights, std::span<const double> side = {});

  /// params -= rate * (grad / batch + 2 * lambda * W), then clears the buffer.
  void apply(AutoencoderParams& params, double rate, double lambda, std::size_t batch);

  const Gradients& gradients() const { return grad_; }
  double squared_norm() const { return grad_.squared_norm(); }

 private:
  void touch_input(Index j);
  void touch_output(Index j);

  Gradients grad_;
  std::vector<Index> input_cols_;
  std::vector<Index> output_rows_;
  std::vector<char> input_seen_;
  std::vector<char> output_seen_;
  // scratch
  Eigen::VectorXd delta_hidden_;
  std::vector<double> delta_out_;
};

/// Factorized view of a side-information-free network: out = tanh(v * u)
/// with v = [w2 | I_n] and u = [tanh(w1 x + b1); b2].
struct Factorization {
  Eigen::VectorXd u;
  Eigen::MatrixXd v;
};

/// Throws DataError when the network carries side-information weights.
Factorization decompose(const AutoencoderParams& params, const SparseVector& x);

}  // namespace cfn
