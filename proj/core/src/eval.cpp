#include "cfn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "cfn/error.hpp"

namespace cfn {

double rmse(std::span<const double> predictions, const RatingMatrix& test) {
  if (test.empty()) throw DataError("empty test set");
  const auto entries = test.entries();
  if (predictions.size() != entries.size()) throw DataError("prediction count does not match the test set");
  double sum = 0.0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const double err = entries[k].value - predictions[k];
    sum += err * err;
  }
  return std::sqrt(sum / static_cast<double>(entries.size()));
}

double rmse(const Predictor& predictor, const RatingMatrix& test) {
  if (test.empty()) throw DataError("empty test set");
  return rmse(predictor.predict_many(test.entries()), test);
}

namespace {

std::string interval_label(std::size_t c, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f-%.1f", static_cast<double>(c) / static_cast<double>(n),
                static_cast<double>(c + 1) / static_cast<double>(n));
  return buf;
}

}  // namespace

std::vector<ClusterResult> cluster_rmse(std::span<const double> predictions, const RatingMatrix& test,
                                        const RatingMatrix& train, ClusterBy by, std::size_t n_clusters) {
  if (n_clusters == 0) throw DataError("cluster count must be positive");
  const auto entries = test.entries();
  if (predictions.size() != entries.size()) throw DataError("prediction count does not match the test set");
  const bool by_item = by == ClusterBy::item;
  const std::size_t n = by_item ? train.n_items() : train.n_users();

  std::vector<std::size_t> counts(n);
  for (std::size_t e = 0; e < n; ++e) {
    counts[e] = by_item ? train.col_count(static_cast<Index>(e)) : train.row_count(static_cast<Index>(e));
  }
  std::vector<Index> ranking(n);
  std::iota(ranking.begin(), ranking.end(), Index{0});
  std::stable_sort(ranking.begin(), ranking.end(), [&](Index a, Index b) { return counts[a] < counts[b]; });

  std::vector<std::size_t> cluster_of(n);
  std::vector<ClusterResult> out(n_clusters);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    const std::size_t lo = c * n / n_clusters;
    const std::size_t hi = (c + 1) * n / n_clusters;
    out[c].label = interval_label(c, n_clusters);
    out[c].n_entities = hi - lo;
    for (std::size_t pos = lo; pos < hi; ++pos) cluster_of[ranking[pos]] = c;
    if (hi > lo) {
      out[c].min_train_count = counts[ranking[lo]];
      out[c].max_train_count = counts[ranking[hi - 1]];
    }
  }

  std::vector<double> sums(n_clusters, 0.0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const std::size_t c = cluster_of[by_item ? entries[k].item : entries[k].user];
    const double err = entries[k].value - predictions[k];
    sums[c] += err * err;
    ++out[c].n_entries;
  }
  for (std::size_t c = 0; c < n_clusters; ++c) {
    if (out[c].n_entries > 0) out[c].rmse = std::sqrt(sums[c] / static_cast<double>(out[c].n_entries));
  }
  return out;
}

std::vector<ClusterResult> cluster_rmse(const Predictor& predictor, const RatingMatrix& test,
                                        const RatingMatrix& train, ClusterBy by, std::size_t n_clusters) {
  return cluster_rmse(predictor.predict_many(test.entries()), test, train, by, n_clusters);
}

double percent_improvement(double rmse_base, double rmse_side) { return 100.0 * (rmse_base - rmse_side) / rmse_base; }

double BiasPredictor::predict(Index user, Index item) const {
  const Index entity = bias_.orientation == Orientation::by_user ? user : item;
  if (entity >= bias_.means.size()) throw DataError("prediction index out of range");
  return scale_.clamp(bias_.mean(entity));
}

BiasPredictor bias_baseline(const RatingMatrix& train, Orientation orientation, const RatingScale& scale) {
  return BiasPredictor(fit_bias(train, orientation), scale);
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["rmse"] = report.rmse;
  j["n_test"] = report.n_test;
  j["per_cluster"] = nlohmann::ordered_json::array();
  for (const auto& c : report.per_cluster) {
    nlohmann::ordered_json cj;
    cj["label"] = c.label;
    cj["n_entities"] = c.n_entities;
    cj["n_entries"] = c.n_entries;
    cj["min_train_count"] = c.min_train_count;
    cj["max_train_count"] = c.max_train_count;
    cj["rmse"] = c.rmse ? nlohmann::ordered_json(*c.rmse) : nlohmann::ordered_json(nullptr);
    j["per_cluster"].push_back(std::move(cj));
  }
  j["config_digest"] = report.config_digest;
  j["seed"] = report.seed;
  return j.dump(2);
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(report) << '\n';
}

void write_clusters_csv(const std::filesystem::path& path, std::span<const ClusterResult> clusters) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "cluster,n_entities,n_entries,min_train_count,max_train_count,rmse\n";
  char buf[64];
  for (const auto& c : clusters) {
    out << c.label << ',' << c.n_entities << ',' << c.n_entries << ',' << c.min_train_count << ','
        << c.max_train_count << ',';
    if (c.rmse) {
      std::snprintf(buf, sizeof buf, "%.10g", *c.rmse);
      out << buf;
    }
    out << '\n';
  }
}

std::optional<SideInfoTable> side_info_for(Network network, const SideSources& sources, std::size_t svd_dim) {
  const bool items = network == Network::i_cfn;
  const TagMatrix& tags = items ? sources.item_tags : sources.user_tags;
  const TagMatrix& flags = items ? sources.item_flags : sources.user_flags;
  const bool has_tags = tags.n_entities() > 0 && svd_dim > 0;
  const bool has_flags = flags.n_entities() > 0 && flags.n_tags() > 0;
  if (!has_tags && !has_flags) return std::nullopt;

  const std::size_t n = has_tags ? tags.n_entities() : flags.n_entities();
  SideInfoTable svd_part = has_tags ? svd_embed(tags, svd_dim).table : SideInfoTable::empty(n);
  if (!has_flags) return svd_part;
  return build_side_info(svd_part, flags);
}

ExperimentResult run_experiment(const RatingMatrix& ratings, const RatingScale& scale, const SideSources* sources,
                                const ExperimentSpec& spec, const EvalHook& hook) {
  const auto parts = split(ratings, spec.split);
  const auto prep = Preprocessing::fit(parts.train, scale, spec.train.network);

  std::optional<SideInfoTable> side;
  if (spec.train.side_info != SideInjection::none) {
    if (sources) side = side_info_for(spec.train.network, *sources, spec.side_svd_dim);
    if (!side) throw DataError("side information requested but no source covers the network's entities");
  }
  const SideInfoTable* side_ptr = side ? &*side : nullptr;

  ExperimentResult out;
  out.n_train = parts.train.size();
  out.n_test = parts.test.size();
  out.state = train(parts.train, side_ptr, spec.train, prep, hook);
  const auto completed = complete_matrix(out.state, spec.train.network, parts.train, side_ptr, prep);
  const auto predictions = completed.predict_many(parts.test.entries());
  out.rmse = rmse(predictions, parts.test);
  out.clusters = cluster_rmse(predictions, parts.test, parts.train,
                              spec.train.network == Network::i_cfn ? ClusterBy::item : ClusterBy::user);
  return out;
}

void run_parallel(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n_tasks));
  std::vector<std::exception_ptr> errors(n_tasks);
  if (jobs == 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) {
      try {
        task(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        while (true) {
          std::size_t t;
          {
            std::lock_guard lock(m);
            if (next >= n_tasks) return;
            t = next++;
          }
          try {
            task(t);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<RatioRow> sweep_training_ratio(const RatingMatrix& ratings, const RatingScale& scale,
                                           const SideSources* sources, const ExperimentSpec& spec,
                                           std::span<const double> ratios, std::span<const std::uint64_t> seeds,
                                           std::size_t jobs) {
  for (double r : ratios)
    if (!(r > 0.0 && r < 1.0)) throw DataError("training ratios must lie in (0, 1)");
  std::vector<RatioRow> rows(ratios.size() * seeds.size());
  run_parallel(rows.size(), jobs, [&](std::size_t t) {
    ExperimentSpec run = spec;
    run.split.train_fraction = ratios[t / seeds.size()];
    run.split.seed = seeds[t % seeds.size()];
    run.train.seed = seeds[t % seeds.size()];
    const auto result = run_experiment(ratings, scale, sources, run);
    rows[t] = RatioRow{run.split.train_fraction, run.split.seed, result.n_train, result.n_test, result.rmse};
  });
  return rows;
}

void write_ratio_csv(const std::filesystem::path& path, std::span<const RatioRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "ratio,seed,n_train,n_test,rmse\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g,%llu,%zu,%zu,%.10g", r.ratio, static_cast<unsigned long long>(r.seed),
                  r.n_train, r.n_test, r.rmse);
    out << buf << '\n';
  }
}

std::vector<DaeCell> sweep_dae(const RatingMatrix& ratings, const RatingScale& scale, const SideSources* sources,
                               const ExperimentSpec& spec, std::span<const double> betas,
                               std::span<const double> mask_ratios, std::size_t jobs) {
  std::vector<DaeCell> cells;
  for (double b : betas)
    for (double m : mask_ratios) cells.push_back(DaeCell{b, m, !(b == 0.0 && m == 0.0), std::nullopt});
  run_parallel(cells.size(), jobs, [&](std::size_t t) {
    if (!cells[t].valid) return;
    ExperimentSpec run = spec;
    run.train.alpha = 1.0;
    run.train.beta = cells[t].beta;
    run.train.mask_ratio = cells[t].mask_ratio;
    cells[t].rmse = run_experiment(ratings, scale, sources, run).rmse;
  });
  return cells;
}

void write_dae_csv(const std::filesystem::path& path, std::span<const DaeCell> cells) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "beta,mask_ratio,valid,rmse\n";
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%g,%g,%d,", c.beta, c.mask_ratio, c.valid ? 1 : 0);
    out << buf;
    if (c.rmse) {
      std::snprintf(buf, sizeof buf, "%.10g", *c.rmse);
      out << buf;
    }
    out << '\n';
  }
}

SeedSummary summarize(std::span<const double> values) {
  SeedSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  s.spread = 2.0 * s.stddev;
  return s;
}

}  // namespace cfn
