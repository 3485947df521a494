// End-to-end accuracy checks on MovieLens-1M.
//
// CFN_ML1M_DIR must name a directory holding ratings.dat and movies.dat from
// the public ml-1m archive; without it every criterion is reported as skipped
// and the process exits with 77. CFN_ACCEPTANCE_CONFIG may point to a
// `key = value` file overriding the hyperparameters below, and
// CFN_ACCEPTANCE_JOBS caps the number of concurrent trainings.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "cfn/config.hpp"
#include "cfn/error.hpp"
#include "cfn/eval.hpp"
#include "report.hpp"

using namespace cfn;
using acceptance::fmt;
namespace fs = std::filesystem;

namespace {

constexpr int kSkip = 77;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

/// Tool defaults except lr0 and weight decay, which train more smoothly at
/// these values with averaged minibatch gradients.
ExperimentSpec base_spec() {
  ExperimentSpec spec;
  spec.train.hidden = 600;
  spec.train.alpha = 1.0;
  spec.train.beta = 0.5;
  spec.train.mask_ratio = 0.25;
  spec.train.epochs = 20;
  spec.train.batch_size = 32;
  spec.train.lr0 = 0.2;
  spec.train.lr_decay = 0.3;
  spec.train.weight_decay = 5.0;
  spec.split = {0.9, 1};
  return spec;
}

ExperimentSpec with_seed(ExperimentSpec spec, std::uint64_t seed) {
  spec.train.seed = seed;
  spec.split.seed = seed;
  return spec;
}

struct Job {
  std::string name;
  ExperimentSpec spec;
  const RatingMatrix* ratings;
  const SideSources* sides;
  ExperimentResult result;
};

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.4f", x);
  return s;
}

}  // namespace

int main() {
  acceptance::Report report;
  const char* dir_env = std::getenv("CFN_ML1M_DIR");
  if (!dir_env || !*dir_env || !fs::exists(fs::path(dir_env) / "ratings.dat")) {
    const std::string why = "CFN_ML1M_DIR is not set to a directory containing ratings.dat";
    report.skip(6, "I-CFN / U-CFN test RMSE", why);
    report.skip(7, "ordering and bias baseline", why);
    report.skip(8, "cold-start quintiles", why);
    report.skip(9, "reconstruction term ablation", why);
    report.skip(10, "training ratio trend", why);
    return kSkip;
  }
  const fs::path dir(dir_env);

  try {
    const auto dataset = load_ratings(dir / "ratings.dat", RatingFormat::movielens_dat);
    SideSources sides;
    if (fs::exists(dir / "movies.dat"))
      sides.item_flags = load_tags(dir / "movies.dat", TagFormat::genre_flags, dataset.items).tags;
    std::printf("# %zu users, %zu items, %zu ratings, %zu genres\n", dataset.ratings.n_users(),
                dataset.ratings.n_items(), dataset.ratings.size(), sides.item_flags.n_tags());
    if (dataset.ratings.size() != 1000209)
      std::printf("# warning: not the ml-1m ratings file; thresholds are calibrated for ml-1m\n");

    ExperimentSpec base = base_spec();
    if (const char* cfg = std::getenv("CFN_ACCEPTANCE_CONFIG"); cfg && *cfg)
      apply_overrides(base, read_key_values(cfg));
    std::printf("# config: %s\n", config_digest(base).c_str());
    std::cout << to_key_values(base);

    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    if (const char* j = std::getenv("CFN_ACCEPTANCE_JOBS"); j && *j) jobs = std::max(1, std::atoi(j));

    const auto small = subsample(dataset.ratings, 0.2, 1);

    std::vector<Job> plan;
    for (auto seed : kSeeds) {
      auto spec = with_seed(base, seed);
      spec.train.network = Network::i_cfn;
      plan.push_back({"i_cfn/" + std::to_string(seed), spec, &dataset.ratings, &sides, {}});
    }
    {
      auto spec = with_seed(base, 1);
      spec.train.network = Network::u_cfn;
      plan.push_back({"u_cfn/1", spec, &dataset.ratings, &sides, {}});
    }
    const bool has_genres = sides.item_flags.n_tags() > 0;
    if (has_genres) {
      for (auto seed : kSeeds) {
        auto spec = with_seed(base, seed);
        spec.train.network = Network::i_cfn;
        spec.train.side_info = SideInjection::both;
        plan.push_back({"i_cfn++/" + std::to_string(seed), spec, &dataset.ratings, &sides, {}});
      }
    }
    {
      auto spec = with_seed(base, 1);
      spec.train.network = Network::i_cfn;
      spec.train.beta = 0.0;
      plan.push_back({"i_cfn/beta0", spec, &dataset.ratings, &sides, {}});
    }
    for (double ratio : {0.1, 0.5, 0.9}) {
      auto spec = with_seed(base, 1);
      spec.train.network = Network::i_cfn;
      spec.split.train_fraction = ratio;
      plan.push_back({"ratio/" + fmt("%.1f", ratio), spec, &small, &sides, {}});
    }

    const auto start = std::chrono::steady_clock::now();
    run_parallel(plan.size(), jobs, [&](std::size_t t) {
      auto& job = plan[t];
      const auto t0 = std::chrono::steady_clock::now();
      job.result = run_experiment(*job.ratings, dataset.scale, job.sides, job.spec);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("# %-12s rmse %.4f (%zu train / %zu test, %.0f s)\n", job.name.c_str(), job.result.rmse,
                  job.result.n_train, job.result.n_test, secs);
      std::fflush(stdout);
    });
    std::printf("# total %.0f s\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

    auto find = [&](const std::string& name) -> const ExperimentResult& {
      for (const auto& j : plan)
        if (j.name == name) return j.result;
      throw std::logic_error("no job " + name);
    };

    // 6
    const double i_rmse = find("i_cfn/1").rmse, u_rmse = find("u_cfn/1").rmse;
    report.check(6, "I-CFN / U-CFN test RMSE", i_rmse <= 0.85 && u_rmse <= 0.88,
                 fmt("I-CFN %.4f (<= 0.85), U-CFN %.4f (<= 0.88)", i_rmse, u_rmse));

    // 7: against the better of the two mean predictors on the same split.
    const auto parts = split(dataset.ratings, with_seed(base, 1).split);
    const double item_bias = rmse(bias_baseline(parts.train, Orientation::by_item, dataset.scale), parts.test);
    const double user_bias = rmse(bias_baseline(parts.train, Orientation::by_user, dataset.scale), parts.test);
    const double best_bias = std::min(item_bias, user_bias);
    report.check(7, "ordering and bias baseline",
                 i_rmse < u_rmse && i_rmse <= best_bias - 0.05 && u_rmse <= best_bias - 0.05,
                 fmt("I-CFN %.4f < U-CFN %.4f; bias baseline %.4f (item %.4f, user %.4f), margins %.4f / %.4f "
                     "(>= 0.05)",
                     i_rmse, u_rmse, best_bias, item_bias, user_bias, best_bias - i_rmse, best_bias - u_rmse));

    // 8
    bool decreasing = true;
    std::string quintiles;
    std::vector<double> improvements;
    for (auto seed : kSeeds) {
      const auto& plain = find("i_cfn/" + std::to_string(seed)).clusters;
      std::vector<double> curve;
      for (const auto& c : plain) curve.push_back(c.rmse.value_or(std::nan("")));
      for (std::size_t c = 1; c < curve.size(); ++c) decreasing = decreasing && curve[c] < curve[c - 1];
      quintiles += (quintiles.empty() ? "" : " | ") + join(curve);
      if (has_genres) {
        const auto& side = find("i_cfn++/" + std::to_string(seed)).clusters;
        improvements.push_back(percent_improvement(*plain.front().rmse, *side.front().rmse));
      }
    }
    if (!has_genres) {
      report.fail(8, "cold-start quintiles", "movies.dat missing, genre side information unavailable; quintiles " +
                                                 quintiles);
    } else {
      const auto s = summarize(improvements);
      report.check(8, "cold-start quintiles", decreasing && s.mean > 0.0,
                   fmt("quintile RMSE strictly decreasing on all seeds: %s [%s]; lowest-quintile improvement with "
                       "genres %.3f%% +/- %.3f%% (> 0)",
                       decreasing ? "yes" : "no", quintiles.c_str(), s.mean, s.spread));
    }

    // 9
    const double beta0 = find("i_cfn/beta0").rmse;
    report.check(9, "reconstruction term ablation", beta0 > i_rmse,
                 fmt("beta=0 %.4f vs beta=0.5 %.4f (mask 0.25, seed 1)", beta0, i_rmse));

    // 10
    const double r1 = find("ratio/0.1").rmse, r5 = find("ratio/0.5").rmse, r9 = find("ratio/0.9").rmse;
    report.check(10, "training ratio trend", r9 <= r5 && r5 <= r1,
                 fmt("20%% subsample: ratio 0.9 %.4f <= ratio 0.5 %.4f <= ratio 0.1 %.4f", r9, r5, r1));

    std::vector<double> i_runs;
    for (auto seed : kSeeds) i_runs.push_back(find("i_cfn/" + std::to_string(seed)).rmse);
    const auto s = summarize(i_runs);
    std::printf("# I-CFN over %zu seeds: %.4f +/- %.4f (mean +/- 2 sd)\n", s.n, s.mean, s.spread);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance run failed: %s\n", e.what());
    return 2;
  }
  return report.failed() ? 1 : 0;
}
