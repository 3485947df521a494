#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cfn/error.hpp"
#include "cfn/eval.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace cfn;

namespace {

const RatingScale kStars{1.0, 5.0, true, 1.0};

class ConstantPredictor final : public Predictor {
 public:
  explicit ConstantPredictor(double v) : v_(v) {}
  double predict(Index, Index) const override { return v_; }

 private:
  double v_;
};

class TablePredictor final : public Predictor {
 public:
  explicit TablePredictor(oracle::Dense table) : table_(std::move(table)) {}
  double predict(Index u, Index i) const override { return table_[u][i]; }

 private:
  oracle::Dense table_;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("constant 4 against {3, 5} has RMSE 1") {
  const RatingMatrix test(1, 2, {{0, 0, 3.0}, {0, 1, 5.0}});
  CHECK(rmse(ConstantPredictor(4.0), test) == 1.0);
  CHECK_THROWS_AS(rmse(ConstantPredictor(4.0), RatingMatrix(1, 1, {})), DataError);
}

TEST_CASE("rmse and bias baseline match loop oracles on 5x5 instances") {
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = oracle::random_ratings(5, 5, 0.7, seed);
    if (m.size() < 4) continue;
    const auto parts = split(m, {0.7, seed});
    if (parts.test.empty()) continue;

    oracle::Dense table(5, std::vector<double>(5));
    for (auto& row : table)
      for (double& v : row) v = rng.uniform(1.0, 5.0);
    std::vector<double> truth, predicted;
    for (const auto& r : parts.test.entries()) {
      truth.push_back(r.value);
      predicted.push_back(table[r.user][r.item]);
    }
    CHECK(std::abs(rmse(TablePredictor(table), parts.test) - oracle::rmse(truth, predicted)) <= 1e-12);

    double total = 0.0;
    for (const auto& r : parts.train.entries()) total += r.value;
    const double global = total / static_cast<double>(parts.train.size());
    const auto dense = oracle::to_dense(parts.train);
    for (bool by_user : {true, false}) {
      const auto means = oracle::means(dense, by_user, global);
      const auto baseline = bias_baseline(parts.train, by_user ? Orientation::by_user : Orientation::by_item, kStars);
      std::vector<double> bias_pred;
      for (const auto& r : parts.test.entries()) bias_pred.push_back(means[by_user ? r.user : r.item]);
      CHECK(std::abs(rmse(baseline, parts.test) - oracle::rmse(truth, bias_pred)) <= 1e-12);
    }
  }
}

TEST_CASE("ten entities in five clusters hold two each") {
  std::vector<Rating> train_r, test_r;
  for (Index i = 0; i < 10; ++i) {
    for (Index u = 0; u <= i; ++u) train_r.push_back({u, i, 3.0});
    test_r.push_back({10, i, 4.0});
  }
  const RatingMatrix train(11, 10, train_r), test(11, 10, test_r);
  const auto clusters = cluster_rmse(ConstantPredictor(3.0), test, train, ClusterBy::item, 5);
  REQUIRE(clusters.size() == 5);
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(clusters[c].n_entities == 2);
    CHECK(clusters[c].n_entries == 2);
    CHECK(clusters[c].min_train_count == 2 * c + 1);
    CHECK(clusters[c].max_train_count == 2 * c + 2);
    CHECK(*clusters[c].rmse == 1.0);
  }
  CHECK(clusters[0].label == "0.0-0.2");
  CHECK(clusters[4].label == "0.8-1.0");
}

TEST_CASE("cluster errors recombine into the global RMSE") {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = oracle::random_ratings(25, 30, 0.3, seed);
    const auto parts = split(m, {0.8, seed});
    oracle::Dense table(25, std::vector<double>(30));
    for (auto& row : table)
      for (double& v : row) v = rng.uniform(1.0, 5.0);
    const TablePredictor p(table);
    const double global = rmse(p, parts.test);
    for (auto by : {ClusterBy::item, ClusterBy::user}) {
      const auto clusters = cluster_rmse(p, parts.test, parts.train, by, 5);
      double sum = 0.0;
      std::size_t entries = 0, entities = 0;
      for (const auto& c : clusters) {
        entries += c.n_entries;
        entities += c.n_entities;
        if (c.rmse) sum += static_cast<double>(c.n_entries) * *c.rmse * *c.rmse;
      }
      CHECK(entries == parts.test.size());
      CHECK(entities == (by == ClusterBy::item ? 30u : 25u));
      CHECK(std::abs(sum / static_cast<double>(entries) - global * global) <= 1e-12);
    }
  }
}

TEST_CASE("percent improvement and seed summaries") {
  CHECK(percent_improvement(1.0, 0.99) == doctest::Approx(1.0));
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto s = summarize(v);
  CHECK(s.mean == 2.0);
  CHECK(s.stddev == doctest::Approx(1.0));
  CHECK(s.spread == doctest::Approx(2.0));
  CHECK(s.n == 3);
}

TEST_CASE("run_parallel visits every task and surfaces the first failure") {
  std::vector<std::atomic<int>> hits(20);
  run_parallel(20, 3, [&](std::size_t t) { ++hits[t]; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_WITH(run_parallel(10, 2,
                                 [](std::size_t t) {
                                   if (t == 4 || t == 7) throw DataError("task " + std::to_string(t));
                                 }),
                    "task 4");
}

TEST_CASE("dae grid marks the empty-loss cell invalid") {
  const auto m = oracle::random_ratings(20, 15, 0.4, 2);
  ExperimentSpec spec;
  spec.train.hidden = 4;
  spec.train.epochs = 1;
  spec.train.lr0 = 0.1;
  const std::vector<double> betas{0.0, 0.25, 0.5, 1.0}, masks{0.0, 0.25, 0.5};
  const auto cells = sweep_dae(m, kStars, nullptr, spec, betas, masks, 2);
  CHECK(cells.size() == 12);
  for (const auto& c : cells) {
    const bool empty = c.beta == 0.0 && c.mask_ratio == 0.0;
    CHECK(c.valid == !empty);
    CHECK(c.rmse.has_value() == !empty);
  }
}

TEST_CASE("ratio sweep keeps sizes and is reproducible across job counts") {
  const auto m = oracle::random_ratings(20, 15, 0.4, 2);
  ExperimentSpec spec;
  spec.train.hidden = 4;
  spec.train.epochs = 1;
  spec.train.lr0 = 0.1;
  std::vector<double> ratios;
  for (int r = 1; r <= 9; ++r) ratios.push_back(r / 10.0);
  const std::vector<std::uint64_t> seeds{1};
  const auto serial = sweep_training_ratio(m, kStars, nullptr, spec, ratios, seeds, 1);
  const auto parallel = sweep_training_ratio(m, kStars, nullptr, spec, ratios, seeds, 3);
  REQUIRE(serial.size() == 9);
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(serial[k].n_train == static_cast<std::size_t>(std::llround(ratios[k] * static_cast<double>(m.size()))));
    CHECK(serial[k].n_train + serial[k].n_test == m.size());
    CHECK(serial[k].rmse == parallel[k].rmse);
  }
  test::TempDir dir;
  write_ratio_csv(dir.path() / "r.csv", serial);
  const auto text = slurp(dir.path() / "r.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 10);
  CHECK(text.rfind("ratio,seed,n_train,n_test,rmse\n", 0) == 0);
}

TEST_CASE("report json carries the global and per-cluster figures") {
  EvalReport report;
  report.rmse = 0.9;
  report.n_test = 10;
  report.config_digest = "abc";
  report.seed = 3;
  report.per_cluster.push_back({"0.0-0.2", 2, 4, 1, 3, 1.25});
  report.per_cluster.push_back({"0.2-0.4", 2, 0, 3, 5, std::nullopt});
  const auto j = nlohmann::json::parse(to_json(report));
  CHECK(j["rmse"] == 0.9);
  CHECK(j["n_test"] == 10);
  CHECK(j["config_digest"] == "abc");
  CHECK(j["per_cluster"].size() == 2);
  CHECK(j["per_cluster"][0]["rmse"] == 1.25);
  CHECK(j["per_cluster"][1]["rmse"].is_null());
}

TEST_CASE("side info assembly picks the network's entities") {
  SideSources sources;
  sources.item_flags = TagMatrix(3, {"a", "b"}, {{0, 0, 1.0}, {2, 1, 1.0}});
  const auto items = side_info_for(Network::i_cfn, sources, 50);
  REQUIRE(items.has_value());
  CHECK(items->dim() == 2);
  CHECK_FALSE(side_info_for(Network::u_cfn, sources, 50).has_value());
}
