#include "cfn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfn/error.hpp"

namespace cfn {

namespace {

void check_side(const AutoencoderParams& params, std::span<const double> side) {
  const std::size_t need = params.side_dim();
  if (side.size() != need) {
    throw DataError("side information has " + std::to_string(side.size()) + " features, the network expects " +
                    std::to_string(need));
  }
}

void check_input(const AutoencoderParams& params, const SparseVector& x) {
  if (x.dim != params.input_dim()) {
    throw DataError("input vector has dimension " + std::to_string(x.dim) + ", the network expects " +
                    std::to_string(params.input_dim()));
  }
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> side) {
  return {side.data(), static_cast<Eigen::Index>(side.size())};
}

}  // namespace

bool AutoencoderParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

bool operator==(const AutoencoderParams& a, const AutoencoderParams& b) {
  return a.w1.rows() == b.w1.rows() && a.w1.cols() == b.w1.cols() && a.w2.rows() == b.w2.rows() &&
         a.w2.cols() == b.w2.cols() && a.b1.size() == b.b1.size() && a.b2.size() == b.b2.size() && a.w1 == b.w1 &&
         a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

AutoencoderParams init_params(std::size_t n, std::size_t k, std::size_t side_input, std::size_t side_hidden,
                              std::uint64_t seed) {
  if (n == 0 || k == 0) throw DataError("autoencoder widths must be positive");
  if (side_input > 0 && side_hidden > 0 && side_input != side_hidden) {
    throw DataError("input and hidden side-information widths must match");
  }
  const auto n_ = static_cast<Eigen::Index>(n);
  const auto k_ = static_cast<Eigen::Index>(k);
  AutoencoderParams p;
  p.w1.resize(k_, n_ + static_cast<Eigen::Index>(side_input));
  p.w2.resize(n_, k_ + static_cast<Eigen::Index>(side_hidden));
  p.b1 = Eigen::VectorXd::Zero(k_);
  p.b2 = Eigen::VectorXd::Zero(n_);

  Rng rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(p.w1.cols()));
  for (Eigen::Index c = 0; c < p.w1.cols(); ++c)
    for (Eigen::Index r = 0; r < p.w1.rows(); ++r) p.w1(r, c) = rng.uniform(-r1, r1);
  const double r2 = 1.0 / std::sqrt(static_cast<double>(p.w2.cols()));
  for (Eigen::Index r = 0; r < p.w2.rows(); ++r)
    for (Eigen::Index c = 0; c < p.w2.cols(); ++c) p.w2(r, c) = rng.uniform(-r2, r2);
  return p;
}

void SparseVector::validate() const {
  for (std::size_t t = 0; t < known.size(); ++t) {
    if (known[t].index >= dim) throw DataError("sparse vector index out of range");
    if (t > 0 && known[t].index <= known[t - 1].index) throw DataError("sparse vector indices must strictly increase");
  }
}

Eigen::VectorXd SparseVector::dense() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& e : known) out(e.index) = e.value;
  return out;
}

bool CorruptionMask::contains(Index j) const {
  return std::binary_search(corrupted.begin(), corrupted.end(), j);
}

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || lambda < 0.0) throw DataError("loss weights must be nonnegative");
  if (alpha == 0.0 && beta == 0.0) throw DataError("alpha and beta cannot both be zero");
}

Corrupted corrupt(const SparseVector& x, double mask_ratio, Rng& rng) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw DataError("mask ratio must lie in [0, 1)");
  const std::size_t n_known = x.known.size();
  const auto n_mask = static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(n_known)));

  // partial Fisher-Yates over positions in `known`
  std::vector<std::size_t> pos(n_known);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  for (std::size_t t = 0; t < n_mask; ++t) {
    const auto pick = t + static_cast<std::size_t>(rng.below(n_known - t));
    std::swap(pos[t], pos[pick]);
  }
  std::vector<char> masked(n_known, 0);
  for (std::size_t t = 0; t < n_mask; ++t) masked[pos[t]] = 1;

  Corrupted out;
  out.input.dim = x.dim;
  out.input.known.reserve(n_known - n_mask);
  out.mask.corrupted.reserve(n_mask);
  for (std::size_t t = 0; t < n_known; ++t) {
    if (masked[t]) {
      out.mask.corrupted.push_back(x.known[t].index);
    } else {
      out.input.known.push_back(x.known[t]);
    }
  }
  return out;
}

Eigen::VectorXd hidden_activation(const AutoencoderParams& params, const SparseVector& x,
                                  std::span<const double> side) {
  check_input(params, x);
  check_side(params, side);
  Eigen::VectorXd pre = params.b1;
  for (const auto& e : x.known) pre.noalias() += e.value * params.w1.col(e.index);
  if (params.side_input() > 0) {
    pre.noalias() += params.w1.rightCols(static_cast<Eigen::Index>(params.side_input())) * as_vector(side);
  }
  return pre.array().tanh().matrix();
}

double output_unit(const AutoencoderParams& params, const Eigen::VectorXd& hidden, Index j,
                   std::span<const double> side) {
  const auto k = static_cast<Eigen::Index>(params.hidden());
  double pre = params.b2(j) + params.w2.row(j).head(k).dot(hidden);
  if (params.side_hidden() > 0) {
    pre += params.w2.row(j).tail(static_cast<Eigen::Index>(params.side_hidden())).dot(as_vector(side).transpose());
  }
  return std::tanh(pre);
}

Eigen::VectorXd forward(const AutoencoderParams& params, const SparseVector& x, std::span<const double> side) {
  const Eigen::VectorXd h = hidden_activation(params, x, side);
  const auto k = static_cast<Eigen::Index>(params.hidden());
  Eigen::VectorXd pre = params.b2;
  pre.noalias() += params.w2.leftCols(k) * h;
  if (params.side_hidden() > 0) {
    pre.noalias() += params.w2.rightCols(static_cast<Eigen::Index>(params.side_hidden())) * as_vector(side);
  }
  return pre.array().tanh().matrix();
}

double loss(const AutoencoderParams& params, const SparseVector& x, const SparseVector& x_tilde,
            const CorruptionMask& mask, const LossWeights& weights, std::span<const double> side) {
  check_input(params, x);
  const Eigen::VectorXd h = hidden_activation(params, x_tilde, side);
  double predicted = 0.0;
  double reconstructed = 0.0;
  for (const auto& e : x.known) {
    const double err = output_unit(params, h, e.index, side) - e.value;
    (mask.contains(e.index) ? predicted : reconstructed) += err * err;
  }
  return weights.alpha * predicted + weights.beta * reconstructed + weights.lambda * params.weight_norm_squared();
}

Gradients Gradients::zeros_like(const AutoencoderParams& params) {
  Gradients g;
  g.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
  g.b1 = Eigen::VectorXd::Zero(params.b1.size());
  g.w2 = RowMajorMatrix::Zero(params.w2.rows(), params.w2.cols());
  g.b2 = Eigen::VectorXd::Zero(params.b2.size());
  return g;
}

Gradients loss_gradients(const AutoencoderParams& params, const SparseVector& x, const SparseVector& x_tilde,
                         const CorruptionMask& mask, const LossWeights& weights, std::span<const double> side) {
  GradientAccumulator acc(params);
  acc.add_sample(params, x, x_tilde, mask, weights, side);
  Gradients g = acc.gradients();
  if (weights.lambda != 0.0) {
    g.w1 += 2.0 * weights.lambda * params.w1;
    g.w2 += 2.0 * weights.lambda * params.w2;
  }
  return g;
}

GradientAccumulator::GradientAccumulator(const AutoencoderParams& params)
    : grad_(Gradients::zeros_like(params)),
      input_seen_(params.input_dim(), 0),
      output_seen_(params.input_dim(), 0),
      delta_hidden_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.hidden()))) {}

void GradientAccumulator::touch_input(Index j) {
  if (!input_seen_[j]) {
    input_seen_[j] = 1;
    input_cols_.push_back(j);
  }
}

void GradientAccumulator::touch_output(Index j) {
  if (!output_seen_[j]) {
    output_seen_[j] = 1;
    output_rows_.push_back(j);
  }
}

double GradientAccumulator::add_sample(const AutoencoderParams& params, const SparseVector& x,
                                       const SparseVector& x_tilde, const CorruptionMask& mask,
                                       const LossWeights& weights, std::span<const double> side) {
  check_input(params, x);
  const Eigen::VectorXd h = hidden_activation(params, x_tilde, side);
  const auto k = static_cast<Eigen::Index>(params.hidden());
  const auto p_hidden = static_cast<Eigen::Index>(params.side_hidden());
  const auto p_input = static_cast<Eigen::Index>(params.side_input());
  const auto side_vec = as_vector(side);

  // output layer: zero error outside K(x), alpha/beta-weighted inside
  double data_loss = 0.0;
  delta_hidden_.setZero();
  auto corrupted = mask.corrupted.begin();
  for (const auto& e : x.known) {
    while (corrupted != mask.corrupted.end() && *corrupted < e.index) ++corrupted;
    const bool is_corrupted = corrupted != mask.corrupted.end() && *corrupted == e.index;
    const double w = is_corrupted ? weights.alpha : weights.beta;
    const double out = output_unit(params, h, e.index, side);
    const double err = out - e.value;
    data_loss += w * err * err;
    const double delta = 2.0 * w * err * (1.0 - out * out);
    if (delta == 0.0) continue;

    touch_output(e.index);
    grad_.b2(e.index) += delta;
    grad_.w2.row(e.index).head(k).noalias() += delta * h.transpose();
    if (p_hidden > 0) grad_.w2.row(e.index).tail(p_hidden).noalias() += delta * side_vec.transpose();
    delta_hidden_.noalias() += delta * params.w2.row(e.index).head(k).transpose();
  }

  delta_hidden_.array() *= (1.0 - h.array().square());
  grad_.b1 += delta_hidden_;
  for (const auto& e : x_tilde.known) {
    touch_input(e.index);
    grad_.w1.col(e.index).noalias() += e.value * delta_hidden_;
  }
  if (p_input > 0) grad_.w1.rightCols(p_input).noalias() += delta_hidden_ * side_vec.transpose();
  return data_loss;
}

void GradientAccumulator::apply(AutoencoderParams& params, double rate, double lambda, std::size_t batch) {
  const double step = rate / static_cast<double>(std::max<std::size_t>(batch, 1));
  if (lambda != 0.0) {
    const double shrink = 1.0 - 2.0 * rate * lambda;
    params.w1 *= shrink;
    params.w2 *= shrink;
  }
  for (Index j : input_cols_) {
    params.w1.col(j).noalias() -= step * grad_.w1.col(j);
    grad_.w1.col(j).setZero();
    input_seen_[j] = 0;
  }
  for (Index j : output_rows_) {
    params.w2.row(j).noalias() -= step * grad_.w2.row(j);
    params.b2(j) -= step * grad_.b2(j);
    grad_.w2.row(j).setZero();
    grad_.b2(j) = 0.0;
    output_seen_[j] = 0;
  }
  const auto p_input = static_cast<Eigen::Index>(params.side_input());
  if (p_input > 0) {
    params.w1.rightCols(p_input).noalias() -= step * grad_.w1.rightCols(p_input);
    grad_.w1.rightCols(p_input).setZero();
  }
  params.b1.noalias() -= step * grad_.b1;
  grad_.b1.setZero();
  input_cols_.clear();
  output_rows_.clear();
}

Factorization decompose(const AutoencoderParams& params, const SparseVector& x) {
  if (params.side_input() > 0 || params.side_hidden() > 0) {
    throw DataError("decompose() is only defined for networks without side information");
  }
  const auto n = static_cast<Eigen::Index>(params.input_dim());
  const auto k = static_cast<Eigen::Index>(params.hidden());
  Factorization f;
  f.u.resize(k + n);
  f.u.head(k) = hidden_activation(params, x);
  f.u.tail(n) = params.b2;
  f.v.resize(n, k + n);
  f.v.leftCols(k) = params.w2;
  f.v.rightCols(n) = Eigen::MatrixXd::Identity(n, n);
  return f;
}

}  // namespace cfn
