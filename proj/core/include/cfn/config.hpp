#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "cfn/data.hpp"
#include "cfn/train.hpp"

namespace cfn {

/// Everything needed to rerun one train/evaluate cycle from a dataset.
struct ExperimentSpec {
  TrainConfig train;
  SplitSpec split{0.9, 1};
  /// Number of SVD columns (K') kept from tag/friendship matrices.
  std::size_t side_svd_dim = 50;
};

using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Flat `key = value` text; `#` starts a comment. Throws DataError with the
/// line number on malformed lines or repeated keys.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Overrides the fields named in `values`. Unknown keys and unparsable
/// values throw DataError.
void apply_overrides(ExperimentSpec& spec, const KeyValues& values);

/// Canonical text of every field, one `key = value` per line, in fixed order.
std::string to_key_values(const ExperimentSpec& spec);

std::string_view to_string(Network network);
std::string_view to_string(SideInjection side);
/// Accepts u/i and u_cfn/i_cfn.
std::optional<Network> parse_network(std::string_view text);
std::optional<SideInjection> parse_side_injection(std::string_view text);

/// Lowercase hex SHA-1.
std::string sha1_hex(std::string_view data);
/// SHA-1 of `blob <size>\0<content>`, as git computes object ids.
std::string git_blob_digest(const std::filesystem::path& path);
/// SHA-1 of the canonical key-value text.
std::string config_digest(const ExperimentSpec& spec);

}  // namespace cfn
