#include "cfn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cfn/error.hpp"
#include "cfn/rng.hpp"
#include "csv.hpp"

namespace cfn {

namespace {

std::vector<std::size_t> build_index(std::size_t n, const std::vector<Rating>& entries, bool by_user,
                                     std::vector<SparseEntry>& out) {
  std::vector<std::size_t> offsets(n + 1, 0);
  for (const auto& r : entries) ++offsets[(by_user ? r.user : r.item) + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  out.assign(entries.size(), SparseEntry{});
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& r : entries) {
    const Index key = by_user ? r.user : r.item;
    out[cursor[key]++] = SparseEntry{by_user ? r.item : r.user, r.value};
  }
  for (std::size_t e = 0; e < n; ++e) {
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(offsets[e]),
              out.begin() + static_cast<std::ptrdiff_t>(offsets[e + 1]),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
  }
  return offsets;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line) + ": ";
}

bool parse_double(std::string_view text, double& out) {
  text = detail::trim(text);
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

RatingMatrix::RatingMatrix(std::size_t n_users, std::size_t n_items, std::vector<Rating> entries)
    : n_users_(n_users), n_items_(n_items), entries_(std::move(entries)) {
  for (const auto& r : entries_) {
    if (r.user >= n_users_ || r.item >= n_items_) {
      throw DataError("rating (" + std::to_string(r.user) + ", " + std::to_string(r.item) +
                      ") outside a " + std::to_string(n_users_) + "x" + std::to_string(n_items_) + " matrix");
    }
  }
  row_offsets_ = build_index(n_users_, entries_, true, row_entries_);
  col_offsets_ = build_index(n_items_, entries_, false, col_entries_);
  for (std::size_t u = 0; u < n_users_; ++u) {
    for (std::size_t k = row_offsets_[u] + 1; k < row_offsets_[u + 1]; ++k) {
      if (row_entries_[k].index == row_entries_[k - 1].index) {
        throw DataError("duplicate rating for (" + std::to_string(u) + ", " +
                        std::to_string(row_entries_[k].index) + ")");
      }
    }
  }
}

std::span<const Rating> RatingMatrix::entries() const {
  touch();
  return entries_;
}

std::span<const SparseEntry> RatingMatrix::row(Index user) const {
  touch();
  return std::span<const SparseEntry>(row_entries_).subspan(row_offsets_[user], row_count(user));
}

std::span<const SparseEntry> RatingMatrix::col(Index item) const {
  touch();
  return std::span<const SparseEntry>(col_entries_).subspan(col_offsets_[item], col_count(item));
}

void RatingScale::validate() const {
  if (!(min_rating < max_rating)) throw DataError("rating scale requires min < max");
  if (is_discrete) {
    if (!(step > 0.0)) throw DataError("discrete rating scale requires a positive step");
    const double levels = (max_rating - min_rating) / step;
    if (std::abs(levels - std::round(levels)) > 1e-9 * std::max(1.0, levels) || std::round(levels) < 1.0) {
      throw DataError("rating scale step does not divide its range");
    }
  }
}

RatingScale RatingScale::infer(std::span<const Rating> ratings) {
  if (ratings.empty()) throw DataError("no ratings");
  std::vector<double> values;
  values.reserve(ratings.size());
  for (const auto& r : ratings) values.push_back(r.value);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  RatingScale scale;
  scale.min_rating = values.front();
  scale.max_rating = values.back();
  if (values.size() < 2) throw DataError("rating scale is degenerate: every rating equals " + std::to_string(values.front()));

  // Approximate gcd of the gaps between distinct values.
  const double tol = 1e-6 * (scale.max_rating - scale.min_rating);
  auto gcd = [tol](double a, double b) {
    while (b > tol) {
      const double r = std::fmod(a, b);
      a = b;
      b = (b - r <= tol) ? 0.0 : r;
    }
    return a;
  };
  double step = values[1] - values[0];
  for (std::size_t k = 2; k < values.size() && step > tol; ++k) step = gcd(values[k] - values[k - 1], step);
  bool discrete = step > tol;
  for (double v : values) {
    const double q = (v - scale.min_rating) / step;
    if (std::abs(q - std::round(q)) > 1e-6) {
      discrete = false;
      break;
    }
  }
  scale.is_discrete = discrete;
  scale.step = discrete ? step : 0.0;
  return scale;
}

Index IdMap::intern(std::string_view raw) {
  if (auto it = index_.find(std::string(raw)); it != index_.end()) return it->second;
  const auto id = static_cast<Index>(raw_.size());
  raw_.emplace_back(raw);
  index_.emplace(raw_.back(), id);
  return id;
}

std::optional<Index> IdMap::find(std::string_view raw) const {
  if (auto it = index_.find(std::string(raw)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::optional<RatingFormat> parse_rating_format(std::string_view name) {
  if (name == "movielens_dat") return RatingFormat::movielens_dat;
  if (name == "csv") return RatingFormat::csv;
  return std::nullopt;
}

std::optional<TagFormat> parse_tag_format(std::string_view name) {
  if (name == "movielens_tags") return TagFormat::movielens_tags;
  if (name == "genre_flags") return TagFormat::genre_flags;
  if (name == "adjacency_csv") return TagFormat::adjacency_csv;
  return std::nullopt;
}

std::string_view to_string(RatingFormat format) {
  return format == RatingFormat::csv ? "csv" : "movielens_dat";
}

std::string_view to_string(TagFormat format) {
  switch (format) {
    case TagFormat::movielens_tags: return "movielens_tags";
    case TagFormat::genre_flags: return "genre_flags";
    case TagFormat::adjacency_csv: return "adjacency_csv";
  }
  return "";
}

RatingDataset load_ratings(const std::filesystem::path& path, RatingFormat format) {
  auto in = open_input(path);
  RatingDataset out;
  std::vector<Rating> entries;
  std::map<std::pair<Index, Index>, std::size_t> position;

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;

    std::vector<std::string> fields;
    if (format == RatingFormat::csv) {
      fields = detail::split_csv(line);
      if (!header_seen) {
        header_seen = true;
        if (fields.size() < 3 || detail::trim(fields[0]) != "user" || detail::trim(fields[1]) != "item" ||
            detail::trim(fields[2]) != "rating") {
          throw DataError(where(path, line_no) + "expected header 'user,item,rating'");
        }
        continue;
      }
    } else {
      fields = detail::split_on(line, "::");
    }
    if (fields.size() < 3 || (format == RatingFormat::movielens_dat && fields.size() > 4)) {
      throw DataError(where(path, line_no) + "expected " +
                      (format == RatingFormat::csv ? std::string("user,item,rating")
                                                   : std::string("UserID::MovieID::Rating::Timestamp")));
    }
    const auto user_raw = detail::trim(fields[0]);
    const auto item_raw = detail::trim(fields[1]);
    if (user_raw.empty() || item_raw.empty()) throw DataError(where(path, line_no) + "empty id");
    double value = 0.0;
    if (!parse_double(fields[2], value)) {
      throw DataError(where(path, line_no) + "bad rating value '" + fields[2] + "'");
    }

    const Index user = out.users.intern(user_raw);
    const Index item = out.items.intern(item_raw);
    auto [it, inserted] = position.try_emplace({user, item}, entries.size());
    if (inserted) {
      entries.push_back(Rating{user, item, value});
    } else {
      entries[it->second].value = value;
      ++out.duplicate_count;
    }
  }
  if (entries.empty()) throw DataError("no ratings");

  out.scale = RatingScale::infer(entries);
  out.ratings = RatingMatrix(out.users.size(), out.items.size(), std::move(entries));
  return out;
}

void write_ratings_csv(const std::filesystem::path& path, const RatingDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user,item,rating\n";
  char buf[64];
  for (const auto& r : dataset.ratings.entries()) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << detail::quote_csv(dataset.users.raw(r.user)) << ',' << detail::quote_csv(dataset.items.raw(r.item)) << ','
        << buf << '\n';
  }
}

TagMatrix::TagMatrix(std::size_t n_entities, std::vector<std::string> tag_names, std::vector<TagEntry> entries)
    : n_entities_(n_entities), tag_names_(std::move(tag_names)) {
  for (const auto& e : entries) {
    if (e.entity >= n_entities_ || e.tag >= tag_names_.size()) throw DataError("tag entry out of range");
    if (!(e.count >= 0.0) || !std::isfinite(e.count)) throw DataError("tag occurrence counts must be nonnegative");
  }
  std::sort(entries.begin(), entries.end(), [](const TagEntry& a, const TagEntry& b) {
    return a.entity != b.entity ? a.entity < b.entity : a.tag < b.tag;
  });
  for (const auto& e : entries) {
    if (!entries_.empty() && entries_.back().entity == e.entity && entries_.back().tag == e.tag) {
      entries_.back().count += e.count;
    } else {
      entries_.push_back(e);
    }
  }
}

double TagMatrix::at(Index entity, Index tag) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{entity, tag},
                             [](const TagEntry& e, const std::pair<Index, Index>& key) {
                               return e.entity != key.first ? e.entity < key.first : e.tag < key.second;
                             });
  return (it != entries_.end() && it->entity == entity && it->tag == tag) ? it->count : 0.0;
}

TagDataset load_tags(const std::filesystem::path& path, TagFormat format, const IdMap& entities) {
  auto in = open_input(path);
  TagDataset out;
  IdMap vocabulary;
  std::vector<TagEntry> entries;

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;

    switch (format) {
      case TagFormat::movielens_tags: {
        const auto fields = detail::split_on(line, "::");
        if (fields.size() < 3) throw DataError(where(path, line_no) + "expected UserID::MovieID::Tag::Timestamp");
        const auto entity = entities.find(detail::trim(fields[1]));
        if (!entity) {
          ++out.dropped_count;
          continue;
        }
        entries.push_back(TagEntry{*entity, vocabulary.intern(detail::trim(fields[2])), 1.0});
        break;
      }
      case TagFormat::genre_flags: {
        const auto fields = detail::split_on(line, "::");
        if (fields.size() < 3) throw DataError(where(path, line_no) + "expected MovieID::Title::Genres");
        const auto entity = entities.find(detail::trim(fields[0]));
        // the genre vocabulary is built from every line, known entity or not
        std::vector<Index> genres;
        for (const auto& g : detail::split_on(fields.back(), "|")) {
          const auto name = detail::trim(g);
          if (!name.empty()) genres.push_back(vocabulary.intern(name));
        }
        if (!entity) {
          ++out.dropped_count;
          continue;
        }
        for (Index g : genres) entries.push_back(TagEntry{*entity, g, 1.0});
        break;
      }
      case TagFormat::adjacency_csv: {
        const auto fields = detail::split_csv(line);
        if (!header_seen) {
          header_seen = true;
          if (fields.size() != 2) throw DataError(where(path, line_no) + "expected a two-column header");
          continue;
        }
        if (fields.size() != 2) throw DataError(where(path, line_no) + "expected 'a,b'");
        const auto a = entities.find(detail::trim(fields[0]));
        const auto b = entities.find(detail::trim(fields[1]));
        if (!a || !b) {
          ++out.dropped_count;
          continue;
        }
        entries.push_back(TagEntry{*a, *b, 1.0});
        entries.push_back(TagEntry{*b, *a, 1.0});
        break;
      }
    }
  }

  std::vector<std::string> names;
  if (format == TagFormat::adjacency_csv) {
    names.reserve(entities.size());
    for (Index e = 0; e < entities.size(); ++e) names.push_back(entities.raw(e));
  } else {
    names.reserve(vocabulary.size());
    for (Index t = 0; t < vocabulary.size(); ++t) names.push_back(vocabulary.raw(t));
  }
  TagMatrix summed(entities.size(), std::move(names), std::move(entries));
  if (format == TagFormat::movielens_tags) {
    out.tags = std::move(summed);
  } else {
    // flags and friendships are binary whatever the multiplicity
    std::vector<TagEntry> binary(summed.entries().begin(), summed.entries().end());
    for (auto& e : binary) e.count = 1.0;
    out.tags = TagMatrix(summed.n_entities(), summed.tag_names(), std::move(binary));
  }
  return out;
}

void write_tags_csv(const std::filesystem::path& path, const TagMatrix& tags, const IdMap& entities) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "entity,tag,count\n";
  // vocabulary rows (empty entity) fix the tag order on reload
  for (const auto& name : tags.tag_names()) out << "," << detail::quote_csv(name) << ",0\n";
  char buf[64];
  for (const auto& e : tags.entries()) {
    std::snprintf(buf, sizeof buf, "%.17g", e.count);
    out << detail::quote_csv(entities.raw(e.entity)) << ',' << detail::quote_csv(tags.tag_names()[e.tag]) << ','
        << buf << '\n';
  }
}

TagDataset read_tags_csv(const std::filesystem::path& path, const IdMap& entities) {
  auto in = open_input(path);
  TagDataset out;
  IdMap vocabulary;
  std::vector<TagEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    double count = 0.0;
    if (fields.size() != 3 || !parse_double(fields[2], count)) {
      throw DataError(where(path, line_no) + "expected entity,tag,count");
    }
    const Index tag = vocabulary.intern(fields[1]);
    if (fields[0].empty()) continue;
    const auto entity = entities.find(fields[0]);
    if (!entity) {
      ++out.dropped_count;
      continue;
    }
    entries.push_back(TagEntry{*entity, tag, count});
  }
  std::vector<std::string> names;
  for (Index t = 0; t < vocabulary.size(); ++t) names.push_back(vocabulary.raw(t));
  out.tags = TagMatrix(entities.size(), std::move(names), std::move(entries));
  return out;
}

namespace {

std::vector<std::size_t> seeded_selection(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  order.resize(std::min(keep, n));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

Split split(const RatingMatrix& ratings, const SplitSpec& spec) {
  if (ratings.empty()) throw DataError("cannot split an empty rating matrix");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw DataError("train fraction must lie in (0, 1)");
  }
  const auto all = ratings.entries();
  const auto chosen = seeded_selection(all.size(), spec.train_fraction, spec.seed);
  std::vector<Rating> train, test;
  train.reserve(chosen.size());
  test.reserve(all.size() - chosen.size());
  std::size_t next = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (next < chosen.size() && chosen[next] == k) {
      train.push_back(all[k]);
      ++next;
    } else {
      test.push_back(all[k]);
    }
  }
  return Split{RatingMatrix(ratings.n_users(), ratings.n_items(), std::move(train)),
               RatingMatrix(ratings.n_users(), ratings.n_items(), std::move(test))};
}

RatingMatrix subsample(const RatingMatrix& ratings, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("subsample fraction must lie in (0, 1]");
  const auto all = ratings.entries();
  std::vector<Rating> kept;
  for (std::size_t k : seeded_selection(all.size(), fraction, seed)) kept.push_back(all[k]);
  return RatingMatrix(ratings.n_users(), ratings.n_items(), std::move(kept));
}

}  // namespace cfn
