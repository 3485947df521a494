#include "cfn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cfn/error.hpp"
#include "cfn/rng.hpp"

namespace cfn {

Orientation bias_orientation(Network network) {
  return network == Network::u_cfn ? Orientation::by_user : Orientation::by_item;
}

void TrainConfig::validate() const {
  if (hidden == 0) throw DataError("hidden width must be positive");
  if (!(lr0 > 0.0)) throw DataError("lr0 must be positive");
  if (lr_decay < 0.0) throw DataError("lr_decay must be nonnegative");
  if (epochs < 1) throw DataError("epochs must be at least 1");
  if (batch_size < 1) throw DataError("batch_size must be at least 1");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw DataError("mask_ratio must lie in [0, 1)");
  if (weight_decay < 0.0) throw DataError("weight_decay must be nonnegative");
  LossWeights{alpha, beta, 0.0}.validate();
}

Preprocessing Preprocessing::fit(const RatingMatrix& train, const RatingScale& scale, Network network) {
  Preprocessing p;
  p.bias = fit_bias(train, bias_orientation(network));
  p.scaler = Scaler::fit(scale, p.bias);
  return p;
}

std::vector<SparseVector> training_vectors(const RatingMatrix& train, const Preprocessing& prep, Network network) {
  const bool by_user = network == Network::u_cfn;
  const std::size_t n_entities = by_user ? train.n_users() : train.n_items();
  const std::size_t dim = by_user ? train.n_items() : train.n_users();
  std::vector<SparseVector> out(n_entities);
  for (std::size_t e = 0; e < n_entities; ++e) {
    const auto entity = static_cast<Index>(e);
    const auto known = by_user ? train.row(entity) : train.col(entity);
    out[e].dim = dim;
    out[e].known.reserve(known.size());
    for (const auto& k : known) {
      out[e].known.push_back(SparseEntry{k.index, prep.scaler.transform(k.value, entity, prep.bias)});
    }
  }
  return out;
}

namespace {

std::size_t entity_count(const RatingMatrix& m, Network network) {
  return network == Network::u_cfn ? m.n_users() : m.n_items();
}

std::size_t input_dim(const RatingMatrix& m, Network network) {
  return network == Network::u_cfn ? m.n_items() : m.n_users();
}

const SideInfoTable* checked_side(const RatingMatrix& data, const SideInfoTable* side, const TrainConfig& cfg) {
  if (cfg.side_info == SideInjection::none) return nullptr;
  if (side == nullptr || side->dim() == 0) throw DataError("side information requested but none was provided");
  if (side->n_entities() != entity_count(data, cfg.network)) {
    throw DataError("side information covers " + std::to_string(side->n_entities()) + " entities, expected " +
                    std::to_string(entity_count(data, cfg.network)));
  }
  if (!side->features.allFinite()) throw NumericError("side information contains non-finite values");
  return side;
}

std::vector<double> row_major_copy(const SideInfoTable* side) {
  if (side == nullptr) return {};
  std::vector<double> out(side->n_entities() * side->dim());
  for (Eigen::Index e = 0; e < side->features.rows(); ++e)
    for (Eigen::Index c = 0; c < side->features.cols(); ++c)
      out[static_cast<std::size_t>(e) * side->dim() + static_cast<std::size_t>(c)] = side->features(e, c);
  return out;
}

}  // namespace

TrainState train(const RatingMatrix& train_data, const SideInfoTable* side, const TrainConfig& cfg,
                 const Preprocessing& prep, const EvalHook& eval_hook) {
  cfg.validate();
  const SideInfoTable* used = checked_side(train_data, side, cfg);
  const std::size_t p = used ? used->dim() : 0;
  const bool to_input = cfg.side_info == SideInjection::input_only || cfg.side_info == SideInjection::both;
  const bool to_hidden = cfg.side_info == SideInjection::hidden_only || cfg.side_info == SideInjection::both;

  TrainState state;
  state.seed = cfg.seed;
  state.params = init_params(input_dim(train_data, cfg.network), cfg.hidden, to_input ? p : 0, to_hidden ? p : 0,
                             cfg.seed);
  resume(state, train_data, side, cfg, prep, eval_hook);
  return state;
}

void resume(TrainState& state, const RatingMatrix& train_data, const SideInfoTable* side, const TrainConfig& cfg,
            const Preprocessing& prep, const EvalHook& eval_hook) {
  cfg.validate();
  if (train_data.empty()) throw DataError("no training ratings");
  const SideInfoTable* used = checked_side(train_data, side, cfg);
  const std::vector<double> side_rows = row_major_copy(used);
  const std::size_t p = used ? used->dim() : 0;
  if (state.params.side_dim() != p) throw DataError("checkpoint and side information widths differ");

  const auto vectors = training_vectors(train_data, prep, cfg.network);
  std::vector<Index> active;
  for (std::size_t e = 0; e < vectors.size(); ++e)
    if (!vectors[e].known.empty()) active.push_back(static_cast<Index>(e));

  const std::size_t n = state.params.input_dim();
  const LossWeights weights = cfg.loss_weights(n);
  GradientAccumulator acc(state.params);
  auto side_of = [&](Index e) {
    return p == 0 ? std::span<const double>{} : std::span<const double>(side_rows).subspan(e * p, p);
  };

  while (state.epoch < cfg.epochs) {
    const std::size_t epoch = state.epoch;
    Rng rng(state.seed, epoch);
    std::vector<Index> order = active;
    rng.shuffle(std::span<Index>(order));
    const double rate = cfg.learning_rate(epoch);

    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double reg = weights.lambda * state.params.weight_norm_squared();
      double batch_loss = 0.0;
      for (std::size_t t = start; t < stop; ++t) {
        const Index e = order[t];
        const Corrupted c = corrupt(vectors[e], cfg.mask_ratio, rng);
        batch_loss += acc.add_sample(state.params, vectors[e], c.input, c.mask, weights, side_of(e)) + reg;
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch + 1 << ", batch " << batch_no + 1
            << " (gradient norm " << std::sqrt(acc.squared_norm()) << ")";
        throw NumericError(msg.str());
      }
      total += batch_loss;
      acc.apply(state.params, rate, weights.lambda, stop - start);
    }
    if (!state.params.all_finite()) {
      throw NumericError("non-finite parameters after epoch " + std::to_string(epoch + 1));
    }

    ++state.epoch;
    EpochRecord record;
    record.epoch = state.epoch;
    record.mean_loss = active.empty() ? 0.0 : total / static_cast<double>(active.size());
    state.loss_curve.push_back(record);
    if (eval_hook) state.loss_curve.back().rmse = eval_hook(state);
  }
}

std::vector<double> Predictor::predict_many(std::span<const Rating> queries) const {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(predict(q.user, q.item));
  return out;
}

CompletedMatrix::CompletedMatrix(AutoencoderParams params, Network network, const RatingMatrix& train_data,
                                 const SideInfoTable* side, Preprocessing prep)
    : params_(std::move(params)),
      network_(network),
      n_users_(train_data.n_users()),
      n_items_(train_data.n_items()),
      prep_(std::move(prep)) {
  if (params_.input_dim() != input_dim(train_data, network_)) {
    throw DataError("network input width does not match the rating matrix");
  }
  side_dim_ = params_.side_dim();
  if (side_dim_ > 0) {
    if (side == nullptr || side->dim() != side_dim_ || side->n_entities() != entity_count(train_data, network_)) {
      throw DataError("network expects side information of width " + std::to_string(side_dim_));
    }
    side_ = row_major_copy(side);
  }
  inputs_ = training_vectors(train_data, prep_, network_);
}

std::span<const double> CompletedMatrix::side_row(Index entity) const {
  if (side_dim_ == 0) return {};
  return std::span<const double>(side_).subspan(entity * side_dim_, side_dim_);
}

double CompletedMatrix::predict(Index user, Index item) const {
  if (user >= n_users_ || item >= n_items_) throw DataError("prediction index out of range");
  const bool by_user = network_ == Network::u_cfn;
  const Index entity = by_user ? user : item;
  const Index unit = by_user ? item : user;
  const auto& x = inputs_[entity];
  if (x.known.empty()) return prep_.scaler.scale().clamp(prep_.bias.mean(entity));
  const Eigen::VectorXd h = hidden_activation(params_, x, side_row(entity));
  return prep_.scaler.inverse_transform(output_unit(params_, h, unit, side_row(entity)), entity, prep_.bias);
}

std::vector<double> CompletedMatrix::predict_many(std::span<const Rating> queries) const {
  const bool by_user = network_ == Network::u_cfn;
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto entity_of = [&](std::size_t q) { return by_user ? queries[q].user : queries[q].item; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entity_of(a) < entity_of(b); });

  std::vector<double> out(queries.size());
  std::size_t t = 0;
  while (t < order.size()) {
    const Index entity = entity_of(order[t]);
    std::size_t end = t;
    while (end < order.size() && entity_of(order[end]) == entity) ++end;
    for (std::size_t s = t; s < end; ++s) {
      const auto& q = queries[order[s]];
      if (q.user >= n_users_ || q.item >= n_items_) throw DataError("prediction index out of range");
    }
    const auto& x = inputs_[entity];
    if (x.known.empty()) {
      const double fallback = prep_.scaler.scale().clamp(prep_.bias.mean(entity));
      for (std::size_t s = t; s < end; ++s) out[order[s]] = fallback;
    } else {
      const Eigen::VectorXd h = hidden_activation(params_, x, side_row(entity));
      for (std::size_t s = t; s < end; ++s) {
        const auto& q = queries[order[s]];
        const Index unit = by_user ? q.item : q.user;
        out[order[s]] =
            prep_.scaler.inverse_transform(output_unit(params_, h, unit, side_row(entity)), entity, prep_.bias);
      }
    }
    t = end;
  }
  return out;
}

CompletedMatrix complete_matrix(const TrainState& state, Network network, const RatingMatrix& train_data,
                                const SideInfoTable* side, const Preprocessing& prep) {
  return CompletedMatrix(state.params, network, train_data, side, prep);
}

}  // namespace cfn
