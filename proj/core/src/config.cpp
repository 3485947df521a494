#include "cfn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "cfn/error.hpp"
#include "csv.hpp"

namespace cfn {

namespace {

double to_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw DataError("config key '" + std::string(key) + "': expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t to_unsigned(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DataError("config key '" + std::string(key) + "': expected a nonnegative integer, got '" +
                    std::string(text) + "'");
  }
  return v;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (!line.empty() && line.back() == '\r') line = detail::trim(line.substr(0, line.size() - 1));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = std::string(detail::trim(line.substr(0, eq)));
    const auto value = std::string(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw DataError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw DataError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

std::string_view to_string(Network network) { return network == Network::u_cfn ? "u_cfn" : "i_cfn"; }

std::string_view to_string(SideInjection side) {
  switch (side) {
    case SideInjection::none: return "none";
    case SideInjection::input_only: return "input_only";
    case SideInjection::hidden_only: return "hidden_only";
    case SideInjection::both: return "both";
  }
  return "";
}

std::optional<Network> parse_network(std::string_view text) {
  if (text == "u" || text == "u_cfn") return Network::u_cfn;
  if (text == "i" || text == "i_cfn") return Network::i_cfn;
  return std::nullopt;
}

std::optional<SideInjection> parse_side_injection(std::string_view text) {
  if (text == "none") return SideInjection::none;
  if (text == "input_only") return SideInjection::input_only;
  if (text == "hidden_only") return SideInjection::hidden_only;
  if (text == "both") return SideInjection::both;
  return std::nullopt;
}

void apply_overrides(ExperimentSpec& spec, const KeyValues& values) {
  auto& t = spec.train;
  for (const auto& [key, value] : values) {
    if (key == "network" || key == "orientation") {
      const auto n = parse_network(value);
      if (!n) throw DataError("config key '" + key + "': expected u or i, got '" + value + "'");
      t.network = *n;
    } else if (key == "side_info") {
      const auto s = parse_side_injection(value);
      if (!s) throw DataError("config key 'side_info': expected none|input_only|hidden_only|both");
      t.side_info = *s;
    } else if (key == "hidden") {
      t.hidden = to_unsigned(key, value);
    } else if (key == "alpha") {
      t.alpha = to_double(key, value);
    } else if (key == "beta") {
      t.beta = to_double(key, value);
    } else if (key == "mask_ratio") {
      t.mask_ratio = to_double(key, value);
    } else if (key == "weight_decay") {
      t.weight_decay = to_double(key, value);
    } else if (key == "lr0") {
      t.lr0 = to_double(key, value);
    } else if (key == "lr_decay") {
      t.lr_decay = to_double(key, value);
    } else if (key == "epochs") {
      t.epochs = to_unsigned(key, value);
    } else if (key == "batch_size") {
      t.batch_size = to_unsigned(key, value);
    } else if (key == "seed") {
      t.seed = to_unsigned(key, value);
    } else if (key == "train_fraction") {
      spec.split.train_fraction = to_double(key, value);
    } else if (key == "split_seed") {
      spec.split.seed = to_unsigned(key, value);
    } else if (key == "side_svd_dim") {
      spec.side_svd_dim = to_unsigned(key, value);
    } else {
      throw DataError("unknown config key '" + key + "'");
    }
  }
}

std::string to_key_values(const ExperimentSpec& spec) {
  const auto& t = spec.train;
  std::ostringstream out;
  out << "network = " << to_string(t.network) << '\n'
      << "hidden = " << t.hidden << '\n'
      << "alpha = " << exact(t.alpha) << '\n'
      << "beta = " << exact(t.beta) << '\n'
      << "mask_ratio = " << exact(t.mask_ratio) << '\n'
      << "weight_decay = " << exact(t.weight_decay) << '\n'
      << "lr0 = " << exact(t.lr0) << '\n'
      << "lr_decay = " << exact(t.lr_decay) << '\n'
      << "epochs = " << t.epochs << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "seed = " << t.seed << '\n'
      << "side_info = " << to_string(t.side_info) << '\n'
      << "side_svd_dim = " << spec.side_svd_dim << '\n'
      << "train_fraction = " << exact(spec.split.train_fraction) << '\n'
      << "split_seed = " << spec.split.seed << '\n';
  return out.str();
}

std::string sha1_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string git_blob_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob);
}

std::string config_digest(const ExperimentSpec& spec) { return sha1_hex(to_key_values(spec)); }

}  // namespace cfn
