#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cfn {

using Index = std::uint32_t;

/// One known rating in internal (zero-based) coordinates.
struct Rating {
  Index user = 0;
  Index item = 0;
  double value = 0.0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

/// A known entry of a row or column: the counterpart index and its value.
struct SparseEntry {
  Index index = 0;
  double value = 0.0;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Counts every read of a RatingMatrix's entries, rows or columns.
using ReadCounter = std::atomic<std::size_t>;

/// Sparse user x item rating store with per-user and per-item indexes.
///
/// Immutable after construction. Rows are sorted by item index and columns by
/// user index; both hold exactly the entries of entries().
class RatingMatrix {
 public:
  RatingMatrix() = default;

  /// Throws DataError on out-of-range indices or duplicate (user, item) pairs.
  RatingMatrix(std::size_t n_users, std::size_t n_items, std::vector<Rating> entries);

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::span<const Rating> entries() const;
  std::span<const SparseEntry> row(Index user) const;
  std::span<const SparseEntry> col(Index item) const;

  std::size_t row_count(Index user) const { return row_offsets_[user + 1] - row_offsets_[user]; }
  std::size_t col_count(Index item) const { return col_offsets_[item + 1] - col_offsets_[item]; }

  /// Installs an instrumentation counter bumped on every entries()/row()/col()
  /// call. Passing nullptr detaches it.
  void attach_read_counter(std::shared_ptr<ReadCounter> counter) const { reads_ = std::move(counter); }

 private:
  void touch() const {
    if (reads_) reads_->fetch_add(1, std::memory_order_relaxed);
  }

  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<Rating> entries_;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<SparseEntry> row_entries_;
  std::vector<std::size_t> col_offsets_{0};
  std::vector<SparseEntry> col_entries_;
  mutable std::shared_ptr<ReadCounter> reads_;
};

/// Range and granularity of the rating values.
struct RatingScale {
  double min_rating = 1.0;
  double max_rating = 5.0;
  bool is_discrete = true;
  double step = 1.0;

  /// Throws DataError unless min < max and, when discrete, (max-min)/step is a
  /// positive integer.
  void validate() const;

  /// Infers the scale from observed values. Values sharing a common step from
  /// the minimum yield a discrete scale.
  static RatingScale infer(std::span<const Rating> ratings);

  double clamp(double r) const { return r < min_rating ? min_rating : (r > max_rating ? max_rating : r); }
};

/// Bidirectional mapping between raw ids and contiguous internal indices.
/// Indices are assigned in order of first appearance.
class IdMap {
 public:
  Index intern(std::string_view raw);
  std::optional<Index> find(std::string_view raw) const;
  const std::string& raw(Index index) const { return raw_[index]; }
  std::size_t size() const { return raw_.size(); }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, Index> index_;
};

enum class RatingFormat { movielens_dat, csv };
enum class TagFormat { movielens_tags, genre_flags, adjacency_csv };

std::optional<RatingFormat> parse_rating_format(std::string_view name);
std::optional<TagFormat> parse_tag_format(std::string_view name);
std::string_view to_string(RatingFormat format);
std::string_view to_string(TagFormat format);

struct RatingDataset {
  RatingMatrix ratings;
  RatingScale scale;
  IdMap users;
  IdMap items;
  /// Number of (user, item) pairs seen more than once; the last value is kept.
  std::size_t duplicate_count = 0;
};

/// Parses `UserID::MovieID::Rating::Timestamp` lines or a `user,item,rating`
/// CSV. Throws DataError("<path>:<line>: ...") on malformed input and
/// DataError("no ratings") on an empty file.
RatingDataset load_ratings(const std::filesystem::path& path, RatingFormat format);

/// Writes a `user,item,rating` CSV (raw ids, exact values) that reloads to an
/// identical dataset.
void write_ratings_csv(const std::filesystem::path& path, const RatingDataset& dataset);

/// Sparse entity x tag occurrence counts. Entries are sorted by (entity, tag)
/// and unique.
struct TagEntry {
  Index entity = 0;
  Index tag = 0;
  double count = 0.0;

  friend bool operator==(const TagEntry&, const TagEntry&) = default;
};

class TagMatrix {
 public:
  TagMatrix() = default;

  /// Duplicate (entity, tag) pairs are summed. Throws DataError on negative
  /// counts or out-of-range indices.
  TagMatrix(std::size_t n_entities, std::vector<std::string> tag_names, std::vector<TagEntry> entries);

  std::size_t n_entities() const { return n_entities_; }
  std::size_t n_tags() const { return tag_names_.size(); }
  std::span<const TagEntry> entries() const { return entries_; }
  const std::vector<std::string>& tag_names() const { return tag_names_; }
  bool empty() const { return entries_.empty(); }

  /// Occurrence count at (entity, tag), 0 when absent.
  double at(Index entity, Index tag) const;

 private:
  std::size_t n_entities_ = 0;
  std::vector<std::string> tag_names_;
  std::vector<TagEntry> entries_;
};

struct TagDataset {
  TagMatrix tags;
  /// Lines naming an entity absent from the id map.
  std::size_t dropped_count = 0;
};

/// Loads side information keyed by `entities`.
///
///   movielens_tags  `UserID::MovieID::Tag::Timestamp`; counts per (movie, tag)
///   genre_flags     `MovieID::Title::Genre|Genre|...`; 0/1 per genre
///   adjacency_csv   header line then `a,b` pairs; symmetric 0/1
TagDataset load_tags(const std::filesystem::path& path, TagFormat format, const IdMap& entities);

/// `entity,tag,count` CSV of raw entity ids, readable back with read_tags_csv.
void write_tags_csv(const std::filesystem::path& path, const TagMatrix& tags, const IdMap& entities);
TagDataset read_tags_csv(const std::filesystem::path& path, const IdMap& entities);

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

struct Split {
  RatingMatrix train;
  RatingMatrix test;
};

/// Per-rating split: a seeded shuffle picks round(train_fraction * n) training
/// entries. Both halves keep the original entry order and the full index space.
Split split(const RatingMatrix& ratings, const SplitSpec& spec);

/// Keeps round(fraction * n) entries chosen by a seeded shuffle.
RatingMatrix subsample(const RatingMatrix& ratings, double fraction, std::uint64_t seed);

}  // namespace cfn
