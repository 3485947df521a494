#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfn/data.hpp"
#include "cfn/model.hpp"
#include "cfn/preprocess.hpp"

namespace cfn {

/// u_cfn feeds user rows (one vector per user, one unit per item); i_cfn feeds
/// item columns.
enum class Network { u_cfn, i_cfn };
enum class SideInjection { none, input_only, hidden_only, both };

Orientation bias_orientation(Network network);

/// Hyperparameters of the masked denoising loss and the SGD schedule.
struct TrainConfig {
  Network network = Network::i_cfn;
  std::size_t hidden = 600;
  double alpha = 1.0;
  double beta = 0.5;
  double mask_ratio = 0.25;
  /// Weight decay. The loss coefficient is lambda = weight_decay / n with n
  /// the input dimension, see effective_lambda().
  double weight_decay = 0.5;
  double lr0 = 0.7;
  double lr_decay = 0.3;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  SideInjection side_info = SideInjection::none;

  /// Throws DataError on an invalid combination.
  void validate() const;

  double effective_lambda(std::size_t input_dim) const { return weight_decay / static_cast<double>(input_dim); }
  /// lr0 / (1 + lr_decay * epoch), epoch counted from 0.
  double learning_rate(std::size_t epoch) const { return lr0 / (1.0 + lr_decay * static_cast<double>(epoch)); }
  LossWeights loss_weights(std::size_t input_dim) const { return {alpha, beta, effective_lambda(input_dim)}; }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double mean_loss = 0.0;
  std::optional<double> rmse;
};

struct TrainState {
  AutoencoderParams params;
  std::size_t epoch = 0;
  /// Each epoch draws from Rng(seed, epoch), so (seed, epoch) is the full
  /// generator state.
  std::uint64_t seed = 0;
  std::vector<EpochRecord> loss_curve;
};

/// Centering and rescaling fitted on the training split.
struct Preprocessing {
  BiasTable bias;
  Scaler scaler;

  static Preprocessing fit(const RatingMatrix& train, const RatingScale& scale, Network network);
};

/// Transformed training vectors, one per entity of the network's orientation
/// (users for u_cfn, items for i_cfn).
std::vector<SparseVector> training_vectors(const RatingMatrix& train, const Preprocessing& prep, Network network);

/// Called after each epoch; may return a validation RMSE for the curve.
using EvalHook = std::function<std::optional<double>(const TrainState&)>;

/// Minibatch SGD over the entity vectors with a fresh corruption mask per
/// vector per epoch. Throws NumericError (epoch, batch, gradient norm) if the
/// loss becomes non-finite.
TrainState train(const RatingMatrix& train_data, const SideInfoTable* side, const TrainConfig& cfg,
                 const Preprocessing& prep, const EvalHook& eval_hook = {});

/// Continues from `state` until cfg.epochs epochs are complete.
void resume(TrainState& state, const RatingMatrix& train_data, const SideInfoTable* side, const TrainConfig& cfg,
            const Preprocessing& prep, const EvalHook& eval_hook = {});

/// Rating prediction interface shared by trained networks and baselines.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual double predict(Index user, Index item) const = 0;
  /// Batch prediction; the default loops over predict().
  virtual std::vector<double> predict_many(std::span<const Rating> queries) const;
};

/// Completed rating matrix: r_hat(u, i) = inverse_transform of the network fed
/// with the training vector of the entity. Entities without training ratings
/// get the bias-only prediction.
class CompletedMatrix final : public Predictor {
 public:
  CompletedMatrix(AutoencoderParams params, Network network, const RatingMatrix& train_data,
                  const SideInfoTable* side, Preprocessing prep);

  double predict(Index user, Index item) const override;
  std::vector<double> predict_many(std::span<const Rating> queries) const override;

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  const Preprocessing& preprocessing() const { return prep_; }
  const AutoencoderParams& params() const { return params_; }

 private:
  std::span<const double> side_row(Index entity) const;

  AutoencoderParams params_;
  Network network_;
  std::size_t n_users_;
  std::size_t n_items_;
  std::vector<SparseVector> inputs_;
  std::vector<double> side_;  // row-major copy, entity * side_dim
  std::size_t side_dim_ = 0;
  Preprocessing prep_;
};

CompletedMatrix complete_matrix(const TrainState& state, Network network, const RatingMatrix& train_data,
                                const SideInfoTable* side, const Preprocessing& prep);

}  // namespace cfn
