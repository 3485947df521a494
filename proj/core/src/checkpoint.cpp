#include "cfn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "cfn/error.hpp"

namespace cfn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'F', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void raw(const double* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open checkpoint " + path.string());
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  void raw(double* data, std::size_t n) {
    in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    check();
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }

 private:
  void check() {
    if (!in_) throw DataError("checkpoint is truncated");
  }
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.pod(kVersion);
  const std::string text = to_key_values(c.spec);
  w.pod(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());

  const auto& p = c.state.params;
  w.pod(static_cast<std::uint64_t>(p.input_dim()));
  w.pod(static_cast<std::uint64_t>(p.hidden()));
  w.pod(static_cast<std::uint64_t>(p.side_input()));
  w.pod(static_cast<std::uint64_t>(p.side_hidden()));
  w.pod(static_cast<std::uint64_t>(c.state.epoch));
  w.pod(static_cast<std::uint64_t>(c.state.seed));

  const auto& scale = c.prep.scaler.scale();
  w.pod(scale.min_rating);
  w.pod(scale.max_rating);
  w.pod(static_cast<std::uint8_t>(scale.is_discrete));
  w.pod(scale.step);
  w.pod(c.prep.scaler.centered_low());
  w.pod(c.prep.scaler.centered_high());

  const auto& bias = c.prep.bias;
  w.pod(static_cast<std::uint8_t>(bias.orientation == Orientation::by_user ? 0 : 1));
  w.pod(bias.global_mean);
  w.pod(static_cast<std::uint64_t>(bias.means.size()));
  w.raw(bias.means.data(), bias.means.size());

  w.raw(p.w1.data(), static_cast<std::size_t>(p.w1.size()));
  w.raw(p.b1.data(), static_cast<std::size_t>(p.b1.size()));
  w.raw(p.w2.data(), static_cast<std::size_t>(p.w2.size()));
  w.raw(p.b2.data(), static_cast<std::size_t>(p.b2.size()));

  w.pod(static_cast<std::uint64_t>(c.state.loss_curve.size()));
  for (const auto& r : c.state.loss_curve) {
    w.pod(static_cast<std::uint64_t>(r.epoch));
    w.pod(r.mean_loss);
    w.pod(static_cast<std::uint8_t>(r.rmse.has_value()));
    w.pod(r.rmse.value_or(0.0));
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  const std::string magic = r.bytes(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) throw DataError(path.string() + " is not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint c;
  const auto text_len = r.pod<std::uint32_t>();
  apply_overrides(c.spec, parse_key_values(r.bytes(text_len)));

  const auto n = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  const auto k = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  const auto side_in = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  const auto side_hidden = static_cast<Eigen::Index>(r.pod<std::uint64_t>());
  c.state.epoch = r.pod<std::uint64_t>();
  c.state.seed = r.pod<std::uint64_t>();

  RatingScale scale;
  scale.min_rating = r.pod<double>();
  scale.max_rating = r.pod<double>();
  scale.is_discrete = r.pod<std::uint8_t>() != 0;
  scale.step = r.pod<double>();
  const double low = r.pod<double>();
  const double high = r.pod<double>();
  c.prep.scaler = Scaler(scale, low, high);

  c.prep.bias.orientation = r.pod<std::uint8_t>() == 0 ? Orientation::by_user : Orientation::by_item;
  c.prep.bias.global_mean = r.pod<double>();
  c.prep.bias.means.resize(r.pod<std::uint64_t>());
  r.raw(c.prep.bias.means.data(), c.prep.bias.means.size());

  auto& p = c.state.params;
  p.w1.resize(k, n + side_in);
  p.b1.resize(k);
  p.w2.resize(n, k + side_hidden);
  p.b2.resize(n);
  r.raw(p.w1.data(), static_cast<std::size_t>(p.w1.size()));
  r.raw(p.b1.data(), static_cast<std::size_t>(p.b1.size()));
  r.raw(p.w2.data(), static_cast<std::size_t>(p.w2.size()));
  r.raw(p.b2.data(), static_cast<std::size_t>(p.b2.size()));

  const auto curve = r.pod<std::uint64_t>();
  for (std::uint64_t e = 0; e < curve; ++e) {
    EpochRecord rec;
    rec.epoch = r.pod<std::uint64_t>();
    rec.mean_loss = r.pod<double>();
    const bool has = r.pod<std::uint8_t>() != 0;
    const double v = r.pod<double>();
    if (has) rec.rmse = v;
    c.state.loss_curve.push_back(rec);
  }
  return c;
}

void write_loss_curve_csv(const std::filesystem::path& path, std::span<const EpochRecord> curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,loss,rmse\n";
  char buf[96];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,", r.epoch, r.mean_loss);
    out << buf;
    if (r.rmse) {
      std::snprintf(buf, sizeof buf, "%.10g", *r.rmse);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace cfn
