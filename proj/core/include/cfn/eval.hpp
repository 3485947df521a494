#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfn/config.hpp"
#include "cfn/data.hpp"
#include "cfn/preprocess.hpp"
#include "cfn/train.hpp"

namespace cfn {

/// sqrt(mean squared error) over exactly the entries of `test`. Throws
/// DataError on an empty test set.
double rmse(const Predictor& predictor, const RatingMatrix& test);
/// Same, for precomputed predictions aligned with test.entries().
double rmse(std::span<const double> predictions, const RatingMatrix& test);

enum class ClusterBy { item, user };

struct ClusterResult {
  std::string label;  // fraction interval of the entity ranking, e.g. "0.0-0.2"
  std::size_t n_entities = 0;
  std::size_t n_entries = 0;  // test entries falling in the cluster
  std::size_t min_train_count = 0;
  std::size_t max_train_count = 0;
  std::optional<double> rmse;  // empty when n_entries == 0
};

/// Entities sorted ascending by training-rating count (ties by index), cut
/// into n_clusters groups of equal size, RMSE over each group's test entries.
std::vector<ClusterResult> cluster_rmse(const Predictor& predictor, const RatingMatrix& test,
                                        const RatingMatrix& train, ClusterBy by, std::size_t n_clusters = 5);
std::vector<ClusterResult> cluster_rmse(std::span<const double> predictions, const RatingMatrix& test,
                                        const RatingMatrix& train, ClusterBy by, std::size_t n_clusters = 5);

/// 100 * (base - side) / base.
double percent_improvement(double rmse_base, double rmse_side);

/// Predicts the centering mean of the user (by_user) or item (by_item).
class BiasPredictor final : public Predictor {
 public:
  BiasPredictor(BiasTable bias, RatingScale scale) : bias_(std::move(bias)), scale_(scale) {}
  double predict(Index user, Index item) const override;
  const BiasTable& bias() const { return bias_; }

 private:
  BiasTable bias_;
  RatingScale scale_;
};

BiasPredictor bias_baseline(const RatingMatrix& train, Orientation orientation, const RatingScale& scale);

struct EvalReport {
  double rmse = 0.0;
  std::size_t n_test = 0;
  std::vector<ClusterResult> per_cluster;
  std::string config_digest;
  std::uint64_t seed = 0;
};

std::string to_json(const EvalReport& report);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);
/// `cluster,n_entities,n_entries,min_train_count,max_train_count,rmse`
void write_clusters_csv(const std::filesystem::path& path, std::span<const ClusterResult> clusters);

/// Raw side-information sources, each keyed by the entity it describes.
/// Empty matrices (n_entities() == 0) are absent sources.
struct SideSources {
  TagMatrix item_tags;   // reduced by SVD
  TagMatrix item_flags;  // used as binary columns
  TagMatrix user_tags;   // e.g. friendships, reduced by SVD
  TagMatrix user_flags;
};

/// Side-information table for the network's entities (items for i_cfn, users
/// for u_cfn), or nullopt when no source covers them.
std::optional<SideInfoTable> side_info_for(Network network, const SideSources& sources, std::size_t svd_dim);

struct ExperimentResult {
  double rmse = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<ClusterResult> clusters;
  TrainState state;
};

/// split -> preprocess -> train -> complete -> evaluate on the held-out part.
/// Clusters are by the network's entity.
ExperimentResult run_experiment(const RatingMatrix& ratings, const RatingScale& scale, const SideSources* sources,
                                const ExperimentSpec& spec, const EvalHook& hook = {});

/// Runs task(0..n-1) on up to `jobs` threads. Exceptions are rethrown (first
/// failing task by index) after all workers finish.
void run_parallel(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)>& task);

struct RatioRow {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double rmse = 0.0;
};

/// Same hyperparameters for every ratio; each (ratio, seed) gets a fresh split
/// seeded by `seed` and a network seeded by `seed`.
std::vector<RatioRow> sweep_training_ratio(const RatingMatrix& ratings, const RatingScale& scale,
                                           const SideSources* sources, const ExperimentSpec& spec,
                                           std::span<const double> ratios, std::span<const std::uint64_t> seeds,
                                           std::size_t jobs = 1);
/// `ratio,seed,n_train,n_test,rmse`
void write_ratio_csv(const std::filesystem::path& path, std::span<const RatioRow> rows);

struct DaeCell {
  double beta = 0.0;
  double mask_ratio = 0.0;
  /// beta == 0 with mask_ratio == 0 leaves no loss term; such cells are not run.
  bool valid = true;
  std::optional<double> rmse;
};

/// Grid over beta x mask_ratio with alpha fixed at 1 and one shared split.
std::vector<DaeCell> sweep_dae(const RatingMatrix& ratings, const RatingScale& scale, const SideSources* sources,
                               const ExperimentSpec& spec, std::span<const double> betas,
                               std::span<const double> mask_ratios, std::size_t jobs = 1);
/// `beta,mask_ratio,valid,rmse`
void write_dae_csv(const std::filesystem::path& path, std::span<const DaeCell> cells);

struct SeedSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  /// Reported range half-width: 2 * stddev.
  double spread = 0.0;
  std::size_t n = 0;
};

SeedSummary summarize(std::span<const double> values);

}  // namespace cfn
