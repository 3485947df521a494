#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfn/checkpoint.hpp"
#include "cfn/config.hpp"
#include "cfn/error.hpp"
#include "cfn/train.hpp"

namespace cfn::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Side-information files written by ingest, keyed by what they describe.
struct SideFile {
  const char* name;
  bool items;
  bool flags;
};
constexpr SideFile kSideFiles[] = {
    {"item_tags.csv", true, false},
    {"item_flags.csv", true, true},
    {"user_tags.csv", false, false},
    {"user_flags.csv", false, true},
};

const SideFile& side_file_for(TagFormat format) {
  switch (format) {
    case TagFormat::movielens_tags: return kSideFiles[0];
    case TagFormat::genre_flags: return kSideFiles[1];
    case TagFormat::adjacency_csv: return kSideFiles[2];
  }
  return kSideFiles[0];
}

TagMatrix& slot(SideSources& s, const SideFile& f) {
  if (f.items) return f.flags ? s.item_flags : s.item_tags;
  return f.flags ? s.user_flags : s.user_tags;
}

/// Run record written next to every artifact.
class Manifest {
 public:
  explicit Manifest(std::string command) {
    doc_["command"] = std::move(command);
    doc_["started_at"] = utc_now();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }
  void argv(int argc, const char* const* argv) {
    json a = json::array();
    for (int i = 0; i < argc; ++i) a.push_back(argv[i]);
    doc_["argv"] = std::move(a);
  }
  void input(const fs::path& path) {
    doc_["inputs"].push_back({{"path", path.string()}, {"digest", git_blob_digest(path)}});
  }
  void output(const fs::path& path) { doc_["outputs"].push_back(path.string()); }
  void config(const ExperimentSpec& spec) {
    json c;
    for (const auto& [k, v] : parse_key_values(to_key_values(spec))) c[k] = v;
    doc_["config"] = std::move(c);
    doc_["config_digest"] = config_digest(spec);
  }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void write(const fs::path& path) {
    doc_["finished_at"] = utc_now();
    output(path);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

/// Hyperparameter flags shared by train and sweep. Only flags given on the
/// command line override the config file.
class ConfigFlags {
 public:
  void add_to(CLI::App& app) {
    app.add_option("--config", config_file_, "Flat key = value config file (flags win)");
    add(app, "--hidden", "hidden", "Hidden units (default 600)");
    add(app, "--alpha", "alpha", "Weight of corrupted known entries (default 1)");
    add(app, "--beta", "beta", "Weight of uncorrupted known entries (default 0.5)");
    add(app, "--mask-ratio", "mask_ratio", "Fraction of known inputs masked per step (default 0.25)");
    add(app, "--weight-decay", "weight_decay", "Weight decay; loss lambda = weight_decay / input width (default 0.5)");
    add(app, "--lr", "lr0", "Initial learning rate (default 0.7)");
    add(app, "--lr-decay", "lr_decay", "lr_e = lr / (1 + lr_decay * e) (default 0.3)");
    add(app, "--epochs", "epochs", "Training epochs, at least 1 (default 20)");
    add(app, "--batch-size", "batch_size", "Vectors per SGD step (default 32)");
    add(app, "--seed", "seed", "Network initialization and corruption seed (default 1)");
    add(app, "--side-info", "side_info", "none|input_only|hidden_only|both (default none)");
    add(app, "--side-svd-dim", "side_svd_dim", "SVD columns kept from tag matrices (default 50)");
    add(app, "--train-fraction", "train_fraction", "Share of ratings used for training (default 0.9)");
    add(app, "--split-seed", "split_seed", "Train/test shuffle seed (default 1)");
  }

  void add_network(CLI::App& app, bool required) {
    add(app, "--orientation", "network", "u (U-CFN, user rows) or i (I-CFN, item columns); required unless --config sets network");
    network_required_ = required;
  }

  ExperimentSpec resolve(Manifest* manifest) const {
    ExperimentSpec spec;
    try {
      KeyValues from_file;
      if (!config_file_.empty()) {
        from_file = read_key_values(config_file_);
        apply_overrides(spec, from_file);
        if (manifest) manifest->input(config_file_);
      }
      KeyValues flags;
      for (const auto& [key, entry] : values_) {
        if (entry.first->count() > 0) flags.emplace(key, entry.second);
      }
      if (network_required_ && !flags.contains("network") && !from_file.contains("network") &&
          !from_file.contains("orientation")) {
        throw DataError("--orientation is required (or set network in the --config file)");
      }
      apply_overrides(spec, flags);
      spec.train.validate();
      if (!(spec.split.train_fraction > 0.0 && spec.split.train_fraction < 1.0)) {
        throw DataError("train_fraction must lie in (0, 1)");
      }
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    return spec;
  }

 private:
  CLI::Option* add(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& entry = values_[key];
    entry.first = app.add_option(flag, entry.second, help);
    return entry.first;
  }

  std::string config_file_;
  bool network_required_ = false;
  std::map<std::string, std::pair<CLI::Option*, std::string>> values_;
};

struct Experiment {
  ExperimentSpec spec;
  Split parts;
  Preprocessing prep;
  std::optional<SideInfoTable> side;

  const SideInfoTable* side_ptr() const { return side ? &*side : nullptr; }
};

std::optional<SideInfoTable> side_for(const ExperimentSpec& spec, const DataDir& data) {
  if (spec.train.side_info == SideInjection::none) return std::nullopt;
  auto side = side_info_for(spec.train.network, data.sides, spec.side_svd_dim);
  if (!side) {
    throw DataError(std::string("side information requested but the data directory has none for ") +
                    (spec.train.network == Network::i_cfn ? "items" : "users"));
  }
  return side;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

int cmd_ingest(const fs::path& ratings_path, const std::string& format_name,
               const std::vector<std::string>& tag_paths, const std::vector<std::string>& tag_formats,
               const fs::path& out_dir, int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto format = parse_rating_format(format_name);
  if (!format) throw UsageError("unknown ratings format '" + format_name + "' (movielens_dat|csv)");
  if (tag_paths.size() != tag_formats.size()) throw UsageError("every --tags needs a matching --tag-format");
  if (fs::is_directory(ratings_path)) throw DataError(ratings_path.string() + " is a directory, not a ratings file");

  Manifest manifest("ingest");
  manifest.argv(argc, argv);
  auto data = load_ratings(ratings_path, *format);
  manifest.input(ratings_path);
  ensure_dir(out_dir);

  json stats;
  stats["n_users"] = data.ratings.n_users();
  stats["n_items"] = data.ratings.n_items();
  stats["n_ratings"] = data.ratings.size();
  stats["density"] = static_cast<double>(data.ratings.size()) /
                     (static_cast<double>(data.ratings.n_users()) * static_cast<double>(data.ratings.n_items()));
  stats["duplicates"] = data.duplicate_count;
  stats["scale"] = {{"min", data.scale.min_rating},
                    {"max", data.scale.max_rating},
                    {"discrete", data.scale.is_discrete},
                    {"step", data.scale.step}};
  if (data.duplicate_count > 0) {
    err << "warning: " << data.duplicate_count << " duplicate ratings, kept the last occurrence\n";
  }

  const auto ratings_out = out_dir / "ratings.csv";
  write_ratings_csv(ratings_out, data);
  manifest.output(ratings_out);

  json side_stats = json::array();
  std::map<std::string, bool> written;
  for (std::size_t t = 0; t < tag_paths.size(); ++t) {
    const auto tag_format = parse_tag_format(tag_formats[t]);
    if (!tag_format) {
      throw UsageError("unknown tag format '" + tag_formats[t] + "' (movielens_tags|genre_flags|adjacency_csv)");
    }
    const SideFile& file = side_file_for(*tag_format);
    if (written[file.name]) throw UsageError(std::string("more than one side file maps to ") + file.name);
    written[file.name] = true;
    const IdMap& entities = file.items ? data.items : data.users;
    const auto tags = load_tags(tag_paths[t], *tag_format, entities);
    manifest.input(tag_paths[t]);
    if (tags.dropped_count > 0) {
      err << "warning: " << tag_paths[t] << ": " << tags.dropped_count << " lines reference unknown entities\n";
    }
    const auto path = out_dir / file.name;
    write_tags_csv(path, tags.tags, entities);
    manifest.output(path);
    side_stats.push_back({{"file", file.name},
                          {"format", std::string(to_string(*tag_format))},
                          {"n_entities", tags.tags.n_entities()},
                          {"n_tags", tags.tags.n_tags()},
                          {"n_entries", tags.tags.entries().size()},
                          {"dropped", tags.dropped_count}});
  }
  stats["side"] = side_stats;

  const auto stats_path = out_dir / "stats.json";
  {
    std::ofstream s(stats_path);
    s << stats.dump(2) << '\n';
  }
  manifest.output(stats_path);
  manifest.write(out_dir / "manifest.json");
  out << stats.dump(2) << '\n';
  return kOk;
}

Experiment prepare(const ExperimentSpec& spec, const DataDir& data) {
  Experiment ex;
  ex.spec = spec;
  ex.parts = split(data.dataset.ratings, spec.split);
  ex.prep = Preprocessing::fit(ex.parts.train, data.dataset.scale, spec.train.network);
  ex.side = side_for(spec, data);
  return ex;
}

void record_data_inputs(Manifest& manifest, const fs::path& data_dir) {
  for (const char* name : {"ratings.csv", "item_tags.csv", "item_flags.csv", "user_tags.csv", "user_flags.csv"}) {
    if (fs::exists(data_dir / name)) manifest.input(data_dir / name);
  }
}

int cmd_train(const fs::path& data_dir, const ConfigFlags& flags, const fs::path& out_dir, bool eval_each_epoch,
              int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Manifest manifest("train");
  manifest.argv(argc, argv);
  const auto spec = flags.resolve(&manifest);
  manifest.config(spec);
  const auto data = load_data_dir(data_dir);
  record_data_inputs(manifest, data_dir);
  const auto ex = prepare(spec, data);
  ensure_dir(out_dir);

  EvalHook hook;
  if (eval_each_epoch) {
    hook = [&](const TrainState& state) -> std::optional<double> {
      const auto m = complete_matrix(state, spec.train.network, ex.parts.train, ex.side_ptr(), ex.prep);
      return rmse(m, ex.parts.test);
    };
  }
  auto progress = [&](const TrainState& state) -> std::optional<double> {
    std::optional<double> r = hook ? hook(state) : std::nullopt;
    err << "epoch " << state.epoch << "/" << spec.train.epochs << " loss " << state.loss_curve.back().mean_loss;
    if (r) err << " test_rmse " << *r;
    err << '\n';
    return r;
  };

  Checkpoint ckpt{spec, train(ex.parts.train, ex.side_ptr(), spec.train, ex.prep, progress), ex.prep};

  const auto model_path = out_dir / "model.bin";
  save_checkpoint(model_path, ckpt);
  manifest.output(model_path);
  const auto config_path = out_dir / "config.txt";
  {
    std::ofstream c(config_path);
    c << to_key_values(spec);
  }
  manifest.output(config_path);
  const auto curve_path = out_dir / "loss_curve.csv";
  write_loss_curve_csv(curve_path, ckpt.state.loss_curve);
  manifest.output(curve_path);
  manifest.set("n_train", ex.parts.train.size());
  manifest.set("n_test", ex.parts.test.size());
  manifest.write(out_dir / "manifest.json");
  out << "trained " << to_string(spec.train.network) << " for " << ckpt.state.epoch << " epochs on "
      << ex.parts.train.size() << " ratings; model written to " << model_path.string() << '\n';
  return kOk;
}

int cmd_evaluate(const fs::path& model_dir, const fs::path& data_dir, const std::string& clusters,
                 std::size_t n_clusters, fs::path out_dir, int argc, const char* const* argv, std::ostream& out,
                 std::ostream& err) {
  Manifest manifest("evaluate");
  manifest.argv(argc, argv);
  const auto model_path = model_dir / "model.bin";
  if (!fs::exists(model_path)) throw DataError("missing checkpoint " + model_path.string());
  const auto ckpt = load_checkpoint(model_path);
  manifest.input(model_path);
  manifest.config(ckpt.spec);
  const auto data = load_data_dir(data_dir);
  record_data_inputs(manifest, data_dir);

  const auto parts = split(data.dataset.ratings, ckpt.spec.split);
  const auto side = side_for(ckpt.spec, data);
  const CompletedMatrix completed(ckpt.state.params, ckpt.spec.train.network, parts.train, side ? &*side : nullptr,
                                  ckpt.prep);
  const auto predictions = completed.predict_many(parts.test.entries());

  ClusterBy by = ckpt.spec.train.network == Network::i_cfn ? ClusterBy::item : ClusterBy::user;
  if (clusters == "user") by = ClusterBy::user;
  if (clusters == "item") by = ClusterBy::item;

  EvalReport report;
  report.rmse = rmse(predictions, parts.test);
  report.n_test = parts.test.size();
  report.per_cluster = cluster_rmse(predictions, parts.test, parts.train, by, n_clusters);
  report.config_digest = config_digest(ckpt.spec);
  report.seed = ckpt.spec.train.seed;

  if (out_dir.empty()) out_dir = model_dir;
  ensure_dir(out_dir);
  const auto report_path = out_dir / "report.json";
  write_report_json(report_path, report);
  manifest.output(report_path);
  const auto clusters_path = out_dir / "clusters.csv";
  write_clusters_csv(clusters_path, report.per_cluster);
  manifest.output(clusters_path);
  manifest.write(out_dir / "evaluate_manifest.json");
  (void)err;
  out << to_json(report) << '\n';
  return kOk;
}

int cmd_predict(const fs::path& model_dir, const fs::path& data_dir, const std::string& user, const std::string& item,
                std::ostream& out, std::ostream& err) {
  const auto model_path = model_dir / "model.bin";
  if (!fs::exists(model_path)) throw DataError("missing checkpoint " + model_path.string());
  const auto ckpt = load_checkpoint(model_path);
  const auto data = load_data_dir(data_dir);
  const auto u = data.dataset.users.find(user);
  const auto i = data.dataset.items.find(item);

  double value = 0.0;
  if (!u || !i) {
    err << "warning: unknown " << (!u ? "user '" + user + "'" : "item '" + item + "'")
        << ", falling back to the bias prediction\n";
    const bool entity_known = ckpt.prep.bias.orientation == Orientation::by_user ? u.has_value() : i.has_value();
    const double mean = entity_known
                            ? ckpt.prep.bias.mean(ckpt.prep.bias.orientation == Orientation::by_user ? *u : *i)
                            : ckpt.prep.bias.global_mean;
    value = ckpt.prep.scaler.scale().clamp(mean);
  } else {
    const auto parts = split(data.dataset.ratings, ckpt.spec.split);
    const auto side = side_for(ckpt.spec, data);
    const CompletedMatrix completed(ckpt.state.params, ckpt.spec.train.network, parts.train,
                                    side ? &*side : nullptr, ckpt.prep);
    value = completed.predict(*u, *i);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  out << buf << '\n';
  return kOk;
}

int cmd_sweep(const std::string& kind, const fs::path& data_dir, const ConfigFlags& flags,
              const std::vector<double>& ratios, const std::vector<std::uint64_t>& seeds,
              const std::vector<double>& betas, const std::vector<double>& masks, double subsample_fraction,
              std::size_t jobs, const fs::path& out_dir, int argc, const char* const* argv, std::ostream& out,
              std::ostream& err) {
  Manifest manifest("sweep");
  manifest.argv(argc, argv);
  const auto spec = flags.resolve(&manifest);
  manifest.config(spec);
  const auto data = load_data_dir(data_dir);
  record_data_inputs(manifest, data_dir);
  RatingMatrix ratings = data.dataset.ratings;
  if (subsample_fraction < 1.0) ratings = subsample(ratings, subsample_fraction, spec.split.seed);
  ensure_dir(out_dir);

  if (kind == "ratio") {
    const auto rows = sweep_training_ratio(ratings, data.dataset.scale, &data.sides, spec, ratios, seeds, jobs);
    const auto path = out_dir / "ratio_sweep.csv";
    write_ratio_csv(path, rows);
    manifest.output(path);
    for (const auto& r : rows) out << r.ratio << ',' << r.seed << ',' << r.rmse << '\n';
  } else if (kind == "dae") {
    const auto cells = sweep_dae(ratings, data.dataset.scale, &data.sides, spec, betas, masks, jobs);
    const auto path = out_dir / "dae_sweep.csv";
    write_dae_csv(path, cells);
    manifest.output(path);
    for (const auto& c : cells) {
      out << c.beta << ',' << c.mask_ratio << ',';
      if (c.rmse) out << *c.rmse;
      else out << "invalid";
      out << '\n';
    }
  } else {
    throw UsageError("unknown sweep kind '" + kind + "' (ratio|dae)");
  }
  (void)err;
  manifest.write(out_dir / "manifest.json");
  return kOk;
}

}  // namespace

DataDir load_data_dir(const fs::path& dir) {
  const auto ratings = dir / "ratings.csv";
  if (!fs::exists(ratings)) throw DataError(dir.string() + " has no ratings.csv (run `cfn ingest` first)");
  DataDir d;
  d.dataset = load_ratings(ratings, RatingFormat::csv);
  for (const auto& f : kSideFiles) {
    const auto path = dir / f.name;
    if (!fs::exists(path)) continue;
    slot(d.sides, f) = read_tags_csv(path, f.items ? d.dataset.items : d.dataset.users).tags;
  }
  return d;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cfn: collaborative filtering with denoising autoencoders on incomplete rating vectors"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse ratings (and side information) into a data directory");
  std::string ratings_path, ratings_format = "movielens_dat";
  std::vector<std::string> tag_paths, tag_formats;
  std::string ingest_out;
  ingest->add_option("--ratings", ratings_path, "Ratings file")->required();
  ingest->add_option("--format", ratings_format, "movielens_dat|csv")->capture_default_str();
  ingest->add_option("--tags", tag_paths, "Side-information file (repeatable)");
  ingest->add_option("--tag-format", tag_formats, "movielens_tags|genre_flags|adjacency_csv, one per --tags");
  ingest->add_option("--out", ingest_out, "Output data directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a U-CFN or I-CFN and write a model directory");
  std::string train_data, train_out;
  bool eval_each_epoch = false;
  ConfigFlags train_flags;
  train_cmd->add_option("--data", train_data, "Data directory from ingest")->required();
  train_cmd->add_option("--out", train_out, "Model directory")->required();
  train_cmd->add_flag("--eval-each-epoch", eval_each_epoch, "Record held-out RMSE after every epoch");
  train_flags.add_network(*train_cmd, true);
  train_flags.add_to(*train_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Held-out RMSE and per-quintile RMSE of a trained model");
  std::string eval_model, eval_data, eval_clusters, eval_out;
  std::size_t n_clusters = 5;
  eval_cmd->add_option("--model", eval_model, "Model directory from train")->required();
  eval_cmd->add_option("--data", eval_data, "Data directory from ingest")->required();
  eval_cmd->add_option("--clusters", eval_clusters, "item|user (default: the model's entity)")
      ->check(CLI::IsMember({"item", "user"}));
  eval_cmd->add_option("--n-clusters", n_clusters, "Number of rating-count clusters")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval_out, "Report directory (default: the model directory)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Training-ratio or denoising-loss sweeps");
  std::string sweep_kind, sweep_data, sweep_out;
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> betas{0.0, 0.25, 0.5, 1.0};
  std::vector<double> masks{0.0, 0.25, 0.5};
  double subsample_fraction = 1.0;
  std::size_t jobs = 1;
  ConfigFlags sweep_flags;
  sweep_cmd->add_option("--kind", sweep_kind, "ratio|dae")->required()->check(CLI::IsMember({"ratio", "dae"}));
  sweep_cmd->add_option("--data", sweep_data, "Data directory from ingest")->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();
  sweep_cmd->add_option("--ratios", ratios, "Training ratios")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Seeds, one run per seed and ratio")->delimiter(',');
  sweep_cmd->add_option("--betas", betas, "Beta grid (alpha fixed at 1)")->delimiter(',');
  sweep_cmd->add_option("--masks", masks, "Mask-ratio grid")->delimiter(',');
  sweep_cmd->add_option("--subsample", subsample_fraction, "Keep this share of the ratings first")
      ->check(CLI::Range(0.0, 1.0));
  sweep_cmd->add_option("--jobs", jobs, "Configurations trained in parallel")->check(CLI::PositiveNumber);
  sweep_flags.add_network(*sweep_cmd, false);
  sweep_flags.add_to(*sweep_cmd);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict one rating with a trained model");
  std::string pred_model, pred_data, pred_user, pred_item;
  predict_cmd->add_option("--model", pred_model, "Model directory from train")->required();
  predict_cmd->add_option("--data", pred_data, "Data directory the model was trained on")->required();
  predict_cmd->add_option("--user", pred_user, "Raw user id")->required();
  predict_cmd->add_option("--item", pred_item, "Raw item id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (ingest->parsed()) {
      return cmd_ingest(ratings_path, ratings_format, tag_paths, tag_formats, ingest_out, argc, argv, out, err);
    }
    if (train_cmd->parsed()) return cmd_train(train_data, train_flags, train_out, eval_each_epoch, argc, argv, out, err);
    if (eval_cmd->parsed()) {
      return cmd_evaluate(eval_model, eval_data, eval_clusters, n_clusters, eval_out, argc, argv, out, err);
    }
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_kind, sweep_data, sweep_flags, ratios, seeds, betas, masks, subsample_fraction, jobs,
                       sweep_out, argc, argv, out, err);
    }
    if (predict_cmd->parsed()) return cmd_predict(pred_model, pred_data, pred_user, pred_item, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  }
  return kUsage;
}

}  // namespace cfn::cli
