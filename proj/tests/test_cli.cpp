#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cfn/checkpoint.hpp"
#include "cfn/config.hpp"
#include "commands.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cfn_run(std::vector<std::string> args) {
  args.insert(args.begin(), "cfn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cfn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// 12 users x 10 items with a few genres.
void write_toy(const test::TempDir& dir) {
  std::ostringstream ratings;
  for (int u = 1; u <= 12; ++u)
    for (int i = 1; i <= 10; ++i)
      if ((u * 7 + i * 3) % 4 != 0) ratings << u << "::" << i << "::" << 1 + (u + 2 * i) % 5 << "::0\n";
  dir.write("ratings.dat", ratings.str());
  std::ostringstream movies;
  for (int i = 1; i <= 10; ++i) movies << i << "::Movie " << i << "::" << (i % 2 ? "Drama" : "Comedy|Drama") << '\n';
  dir.write("movies.dat", movies.str());
}

const std::vector<std::string> kFast{"--hidden", "4", "--epochs", "2", "--lr", "0.1"};

std::vector<std::string> with_fast(std::vector<std::string> args) {
  args.insert(args.end(), kFast.begin(), kFast.end());
  return args;
}

}  // namespace

TEST_CASE("ingest writes a snapshot with stats and a manifest") {
  test::TempDir dir;
  write_toy(dir);
  const auto data = dir.path() / "data";
  const auto r = cfn_run({"ingest", "--ratings", (dir.path() / "ratings.dat").string(), "--format", "movielens_dat",
                          "--tags", (dir.path() / "movies.dat").string(), "--tag-format", "genre_flags", "--out",
                          data.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(data / "ratings.csv"));
  CHECK(fs::exists(data / "item_flags.csv"));
  const auto stats = nlohmann::json::parse(slurp(data / "stats.json"));
  CHECK(stats["n_users"] == 12);
  CHECK(stats["n_items"] == 10);
  const double n = stats["n_ratings"];
  CHECK(stats["density"].get<double>() == doctest::Approx(n / 120.0));
  const auto manifest = nlohmann::json::parse(slurp(data / "manifest.json"));
  CHECK(manifest["command"] == "ingest");
  CHECK(manifest["outputs"].size() >= 3);

  SUBCASE("re-ingesting is idempotent") {
    const auto first = slurp(data / "ratings.csv");
    REQUIRE(cfn_run({"ingest", "--ratings", (dir.path() / "ratings.dat").string(), "--out", data.string()}).code == 0);
    CHECK(slurp(data / "ratings.csv") == first);
  }
}

TEST_CASE("ingest failures") {
  test::TempDir dir;
  dir.write("empty.dat", "");
  CHECK(cfn_run({"ingest", "--ratings", (dir.path() / "empty.dat").string(), "--out", (dir.path() / "o").string()})
            .code == cfn::cli::kDataError);
  CHECK(cfn_run({"ingest", "--ratings", dir.path().string(), "--out", (dir.path() / "o").string()}).code ==
        cfn::cli::kDataError);
  CHECK(cfn_run({"ingest"}).code == cfn::cli::kUsage);
  CHECK(cfn_run({"bogus"}).code == cfn::cli::kUsage);
}

TEST_CASE("train, evaluate, predict and sweep") {
  test::TempDir dir;
  write_toy(dir);
  const auto data = (dir.path() / "data").string();
  REQUIRE(cfn_run({"ingest", "--ratings", (dir.path() / "ratings.dat").string(), "--tags",
                   (dir.path() / "movies.dat").string(), "--tag-format", "genre_flags", "--out", data})
              .code == 0);

  const auto model = (dir.path() / "model").string();
  const auto t = cfn_run(with_fast({"train", "--data", data, "--orientation", "i", "--out", model}));
  REQUIRE_MESSAGE(t.code == 0, t.err);
  for (auto f : {"model.bin", "config.txt", "loss_curve.csv", "manifest.json"}) CHECK(fs::exists(fs::path(model) / f));
  const auto manifest = nlohmann::json::parse(slurp(fs::path(model) / "manifest.json"));
  CHECK(manifest["outputs"].size() == 4);
  CHECK(manifest["config_digest"] == cfn::config_digest(cfn::load_checkpoint(fs::path(model) / "model.bin").spec));

  SUBCASE("same seed reproduces the checkpoint byte for byte") {
    const auto again = (dir.path() / "again").string();
    REQUIRE(cfn_run(with_fast({"train", "--data", data, "--orientation", "i", "--out", again})).code == 0);
    CHECK(slurp(fs::path(model) / "model.bin") == slurp(fs::path(again) / "model.bin"));
  }

  SUBCASE("the saved config alone reproduces the run") {
    const auto again = (dir.path() / "from_config").string();
    REQUIRE(cfn_run({"train", "--data", data, "--config", (fs::path(model) / "config.txt").string(), "--out", again})
                .code == 0);
    CHECK(slurp(fs::path(model) / "model.bin") == slurp(fs::path(again) / "model.bin"));
  }

  SUBCASE("evaluate") {
    const auto e = cfn_run({"evaluate", "--model", model, "--data", data});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    const auto report = nlohmann::json::parse(slurp(fs::path(model) / "report.json"));
    CHECK(report["per_cluster"].size() == 5);
    CHECK(report["rmse"].get<double>() > 0.0);
    CHECK(fs::exists(fs::path(model) / "clusters.csv"));
    CHECK(cfn_run({"evaluate", "--model", (dir.path() / "nothing").string(), "--data", data}).code ==
          cfn::cli::kDataError);
  }

  SUBCASE("predict") {
    const auto p = cfn_run({"predict", "--model", model, "--data", data, "--user", "1", "--item", "2"});
    REQUIRE(p.code == 0);
    const double v = std::stod(p.out);
    CHECK(v >= 1.0);
    CHECK(v <= 5.0);
    const auto unknown = cfn_run({"predict", "--model", model, "--data", data, "--user", "999", "--item", "2"});
    CHECK(unknown.code == 0);
    CHECK(unknown.err.find("warning") != std::string::npos);
  }

  SUBCASE("ratio sweep writes one row per ratio") {
    const auto out = dir.path() / "sweep";
    const auto s = cfn_run(with_fast({"sweep", "--kind", "ratio", "--data", data, "--out", out.string(), "--ratios",
                                      "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", "--seeds", "1"}));
    REQUIRE_MESSAGE(s.code == 0, s.err);
    const auto text = slurp(out / "ratio_sweep.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 10);
  }

  SUBCASE("side information run") {
    const auto out = (dir.path() / "side").string();
    const auto s = cfn_run(with_fast({"train", "--data", data, "--orientation", "i", "--side-info", "both", "--out", out}));
    CHECK_MESSAGE(s.code == 0, s.err);
  }
}

TEST_CASE("usage and numeric exit codes") {
  test::TempDir dir;
  write_toy(dir);
  const auto data = (dir.path() / "data").string();
  REQUIRE(cfn_run({"ingest", "--ratings", (dir.path() / "ratings.dat").string(), "--out", data}).code == 0);
  const auto out = (dir.path() / "m").string();
  CHECK(cfn_run({"train", "--data", data, "--out", out, "--orientation", "i", "--epochs", "0"}).code == cfn::cli::kUsage);
  CHECK(cfn_run({"train", "--data", data, "--out", out, "--orientation", "x"}).code == cfn::cli::kUsage);
  CHECK(cfn_run({"train", "--data", data, "--out", out}).code == cfn::cli::kUsage);
  CHECK(cfn_run({"train", "--data", data, "--out", out, "--orientation", "u", "--hidden", "4", "--epochs", "1", "--lr", "1e300",
                 "--weight-decay", "1e300"})
            .code == cfn::cli::kNumericError);
}

TEST_CASE("help mentions every subcommand") {
  const auto h = cfn_run({"--help"});
  CHECK(h.code == 0);
  for (auto cmd : {"ingest", "train", "evaluate", "sweep", "predict"}) CHECK(h.out.find(cmd) != std::string::npos);
}
