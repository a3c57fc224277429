#include "vitmimo/baseline.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "vitmimo/errors.hpp"

namespace vitmimo {

namespace fs = std::filesystem;

PowerAllocation waterfill(const RVector& singular, double sigma_w2, double total_power) {
  if (!(total_power > 0.0)) throw ConfigError("waterfill: total power must be positive");
  if (!(sigma_w2 > 0.0)) throw ConfigError("waterfill: noise variance must be positive");
  const auto m = static_cast<std::size_t>(singular.size());
  std::vector<double> inverse_gain(m, std::numeric_limits<double>::infinity());
  std::size_t usable = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double s = singular[static_cast<Eigen::Index>(i)];
    if (s < 0.0) throw ConfigError("waterfill: singular values must be non-negative");
    if (s > 0.0) {
      inverse_gain[i] = sigma_w2 / (s * s);
      ++usable;
    }
  }
  if (usable == 0) throw NumericError("waterfill: degenerate channel, every singular value is zero");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return inverse_gain[a] < inverse_gain[b]; });

  double level = 0.0;
  for (std::size_t active = usable; active >= 1; --active) {
    double floor_sum = 0.0;
    for (std::size_t j = 0; j < active; ++j) floor_sum += inverse_gain[order[j]];
    level = (total_power + floor_sum) / static_cast<double>(active);
    if (level > inverse_gain[order[active - 1]]) break;
  }

  PowerAllocation alloc;
  alloc.water_level = level;
  alloc.weights = RVector::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const double p = std::max(0.0, level - inverse_gain[i]);
    alloc.weights[static_cast<Eigen::Index>(i)] = std::sqrt(p);
  }
  return alloc;
}

double capacity(const RVector& singular, const PowerAllocation& alloc, double sigma_w2) {
  if (singular.size() != alloc.weights.size()) {
    throw DimensionError("capacity: " + std::to_string(singular.size()) + " gains but " +
                         std::to_string(alloc.weights.size()) + " allocation weights");
  }
  double c = 0.0;
  for (Eigen::Index i = 0; i < singular.size(); ++i) {
    const double snr = alloc.weights[i] * alloc.weights[i] * singular[i] * singular[i] / sigma_w2;
    c += std::log2(1.0 + snr);
  }
  return c;
}

PowerAllocation equal_allocation(std::size_t streams, double total_power) {
  PowerAllocation alloc;
  alloc.weights = RVector::Constant(static_cast<Eigen::Index>(streams),
                                    std::sqrt(total_power / static_cast<double>(streams)));
  return alloc;
}

nn::Tensor CodecAdapter::fallback(std::size_t h, std::size_t w) const {
  return nn::Tensor::filled({h, w, 3}, 0.5);
}

// --- QuantizationCodec -----------------------------------------------------

namespace {

class BitWriter {
 public:
  explicit BitWriter(Bytes& out) : out_(out) {}
  void put(std::uint32_t value, unsigned bits) {
    for (unsigned b = bits; b-- > 0;) {
      if (fill_ == 0) out_.push_back(0);
      if ((value >> b) & 1u) out_.back() |= static_cast<std::uint8_t>(0x80u >> fill_);
      fill_ = (fill_ + 1) % 8;
    }
  }

 private:
  Bytes& out_;
  unsigned fill_ = 0;
};

class BitReader {
 public:
  BitReader(const Bytes& in, std::size_t offset) : in_(in), pos_(offset * 8) {}
  std::uint32_t get(unsigned bits) {
    std::uint32_t v = 0;
    for (unsigned b = 0; b < bits; ++b, ++pos_) {
      if (pos_ / 8 >= in_.size()) throw FormatError("mock codec: stream truncated");
      v = (v << 1) | ((in_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
    }
    return v;
  }

 private:
  const Bytes& in_;
  std::size_t pos_;
};

void require_image(const nn::Tensor& image, const char* who) {
  if (image.dim() != 3 || image.shape()[2] != 3) {
    throw DimensionError(std::string(who) + ": expected h x w x 3 image, got " +
                         nn::shape_string(image.shape()));
  }
}

}  // namespace

QuantizationCodec::QuantizationCodec()
    : QuantizationCodec({{8, 4}, {8, 6}, {8, 8}, {4, 4}, {4, 6}, {4, 8}, {2, 5}, {2, 6},
                         {2, 8}, {1, 6}, {1, 7}, {1, 8}, {0, 64}}) {}

QuantizationCodec::QuantizationCodec(std::vector<Rung> ladder) : ladder_(std::move(ladder)) {
  for (const auto& r : ladder_) {
    if (r.factor != 0 && (r.bits == 0 || r.bits > 16)) {
      throw ConfigError("mock codec: bits per sample must be in 1..16");
    }
  }
}

QuantizationCodec QuantizationCodec::top_bits() {
  std::vector<Rung> ladder;
  for (unsigned q = 1; q <= 8; ++q) ladder.push_back({1, q});
  ladder.push_back({0, 64});
  return QuantizationCodec(std::move(ladder));
}

std::size_t QuantizationCodec::rung_bytes(const Rung& rung, std::size_t h, std::size_t w) {
  if (rung.factor == 0) return kHeaderBytes + h * w * 3 * 8;
  const std::size_t samples = (h / rung.factor) * (w / rung.factor) * 3;
  return kHeaderBytes + (samples * rung.bits + 7) / 8;
}

std::size_t QuantizationCodec::min_budget(std::size_t h, std::size_t w) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& r : ladder_) {
    if (r.factor != 0 && (h % r.factor != 0 || w % r.factor != 0)) continue;
    best = std::min(best, rung_bytes(r, h, w));
  }
  return best;
}

Bytes QuantizationCodec::encode_rung(const nn::Tensor& image, const Rung& rung) {
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  Bytes out{'Q', static_cast<std::uint8_t>(h & 0xff), static_cast<std::uint8_t>(h >> 8),
            static_cast<std::uint8_t>(w & 0xff), static_cast<std::uint8_t>(w >> 8),
            static_cast<std::uint8_t>(rung.factor), static_cast<std::uint8_t>(rung.bits)};
  const auto& px = image.values();
  if (rung.factor == 0) {
    for (Eigen::Index i = 0; i < px.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(px[i]);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
    return out;
  }
  const std::size_t f = rung.factor;
  const double levels = static_cast<double>((1u << rung.bits) - 1);
  BitWriter writer(out);
  for (std::size_t by = 0; by < h / f; ++by)
    for (std::size_t bx = 0; bx < w / f; ++bx)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t y = by * f; y < (by + 1) * f; ++y)
          for (std::size_t x = bx * f; x < (bx + 1) * f; ++x)
            acc += px[static_cast<Eigen::Index>((y * w + x) * 3 + c)];
        const double mean = std::clamp(acc / static_cast<double>(f * f), 0.0, 1.0);
        writer.put(static_cast<std::uint32_t>(std::lround(mean * levels)), rung.bits);
      }
  return out;
}

Bytes QuantizationCodec::encode(const nn::Tensor& image, std::size_t byte_budget) {
  require_image(image, "mock codec");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  if (h > 0xffff || w > 0xffff) throw ConfigError("mock codec: image too large");
  // Rate-distortion choice: lowest MSE among the rungs that fit, so a larger
  // budget can never do worse.
  Bytes best;
  double best_mse = std::numeric_limits<double>::infinity();
  for (const auto& r : ladder_) {
    if (r.factor != 0 && (h % r.factor != 0 || w % r.factor != 0)) continue;
    if (rung_bytes(r, h, w) > byte_budget) continue;
    Bytes candidate = encode_rung(image, r);
    const double err = (decode(candidate).values() - image.values()).squaredNorm();
    if (err < best_mse) {
      best_mse = err;
      best = std::move(candidate);
    }
  }
  return best;
}

nn::Tensor QuantizationCodec::decode(const Bytes& stream) {
  if (stream.size() < kHeaderBytes || stream[0] != 'Q') throw FormatError("mock codec: bad header");
  const std::size_t h = stream[1] | (std::size_t{stream[2]} << 8);
  const std::size_t w = stream[3] | (std::size_t{stream[4]} << 8);
  const std::size_t f = stream[5];
  const unsigned bits = stream[6];
  if (h == 0 || w == 0) throw FormatError("mock codec: empty image");
  Eigen::VectorXd px(static_cast<Eigen::Index>(h * w * 3));
  if (f == 0) {
    if (stream.size() != kHeaderBytes + h * w * 3 * 8) throw FormatError("mock codec: bad length");
    for (Eigen::Index i = 0; i < px.size(); ++i) {
      std::uint64_t v = 0;
      for (int b = 0; b < 8; ++b) {
        v |= std::uint64_t{stream[kHeaderBytes + static_cast<std::size_t>(i) * 8 + b]} << (8 * b);
      }
      px[i] = std::bit_cast<double>(v);
    }
    return nn::Tensor({h, w, 3}, std::move(px));
  }
  if (h % f != 0 || w % f != 0 || bits == 0 || bits > 16) {
    throw FormatError("mock codec: inconsistent header");
  }
  const double levels = static_cast<double>((1u << bits) - 1);
  BitReader reader(stream, kHeaderBytes);
  for (std::size_t by = 0; by < h / f; ++by)
    for (std::size_t bx = 0; bx < w / f; ++bx)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = reader.get(bits) / levels;
        for (std::size_t y = by * f; y < (by + 1) * f; ++y)
          for (std::size_t x = bx * f; x < (bx + 1) * f; ++x)
            px[static_cast<Eigen::Index>((y * w + x) * 3 + c)] = v;
      }
  return nn::Tensor({h, w, 3}, std::move(px));
}

// --- PPM ------------------------------------------------------------------

void write_ppm(const fs::path& path, const nn::Tensor& image) {
  require_image(image, "write_ppm");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P6\n" << w << ' ' << h << "\n255\n";
  for (Eigen::Index i = 0; i < image.values().size(); ++i) {
    const double v = std::clamp(image.values()[i], 0.0, 1.0);
    os.put(static_cast<char>(std::lround(v * 255.0)));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

nn::Tensor read_ppm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(is, rest);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
      } else {
        t.push_back(c);
      }
    }
    return t;
  };
  if (token() != "P6") throw FormatError(path.string() + ": not a binary PPM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw FormatError(path.string() + ": unsupported PPM");
  std::vector<char> raw(h * w * 3);
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw FormatError(path.string() + ": truncated PPM data");
  }
  Eigen::VectorXd px(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    px[static_cast<Eigen::Index>(i)] = static_cast<unsigned char>(raw[i]) / 255.0;
  }
  return nn::Tensor({h, w, 3}, std::move(px));
}

// --- SubprocessCodec ----------------------------------------------------------

namespace {

std::string fill_template(std::string cmd, const fs::path& in, const fs::path& out, int q) {
  auto replace = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos = cmd.find(key); pos != std::string::npos;
         pos = cmd.find(key, pos + value.size())) {
      cmd.replace(pos, key.size(), value);
    }
  };
  replace("{in}", "'" + in.string() + "'");
  replace("{out}", "'" + out.string() + "'");
  replace("{q}", std::to_string(q));
  return cmd;
}

Bytes slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("codec produced no output at " + path.string());
  return Bytes(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

SubprocessCodec::SubprocessCodec(Options options) : options_(std::move(options)) {
  if (options_.encode_command.empty() || options_.decode_command.empty()) {
    throw ConfigError("subprocess codec: encode and decode commands are required");
  }
  if (options_.quality_min > options_.quality_max) {
    throw ConfigError("subprocess codec: empty quality range");
  }
}

fs::path SubprocessCodec::scratch(const std::string& suffix) {
  return options_.work_dir /
         ("vitmimo_codec_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
          std::to_string(counter_++) + suffix);
}

Bytes SubprocessCodec::run_encoder(const fs::path& input, int quality) {
  const fs::path out = scratch(".bin");
  const std::string cmd = fill_template(options_.encode_command, input, out, quality);
  if (std::system(cmd.c_str()) != 0) {
    fs::remove(out);
    throw IoError("codec encoder failed: " + cmd);
  }
  Bytes bytes = slurp(out);
  fs::remove(out);
  return bytes;
}

std::size_t SubprocessCodec::min_budget(std::size_t h, std::size_t w) {
  const fs::path in = scratch(".ppm");
  write_ppm(in, nn::Tensor::filled({h, w, 3}, 0.5));
  const int worst = options_.higher_quality_value_is_better ? options_.quality_min
                                                            : options_.quality_max;
  const std::size_t size = run_encoder(in, worst).size();
  fs::remove(in);
  return size;
}

Bytes SubprocessCodec::encode(const nn::Tensor& image, std::size_t byte_budget) {
  const fs::path in = scratch(".ppm");
  write_ppm(in, image);
  // Search over a "goodness" index g in [0, n): larger g means higher quality.
  const int n = options_.quality_max - options_.quality_min + 1;
  auto quality_of = [&](int g) {
    return options_.higher_quality_value_is_better ? options_.quality_min + g
                                                   : options_.quality_max - g;
  };
  Bytes best;
  int lo = 0, hi = n - 1;
  for (int step = 0; step < options_.max_search_steps && lo <= hi; ++step) {
    const int mid = lo + (hi - lo) / 2;
    Bytes candidate = run_encoder(in, quality_of(mid));
    if (candidate.size() <= byte_budget) {
      best = std::move(candidate);
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  fs::remove(in);
  return best;
}

nn::Tensor SubprocessCodec::decode(const Bytes& stream) {
  const fs::path in = scratch(".bin");
  const fs::path out = scratch(".ppm");
  {
    std::ofstream os(in, std::ios::binary);
    os.write(reinterpret_cast<const char*>(stream.data()), static_cast<std::streamsize>(stream.size()));
  }
  const std::string cmd = fill_template(options_.decode_command, in, out, 0);
  const int rc = std::system(cmd.c_str());
  fs::remove(in);
  if (rc != 0) {
    fs::remove(out);
    throw IoError("codec decoder failed: " + cmd);
  }
  nn::Tensor image = read_ppm(out);
  fs::remove(out);
  return image;
}

// --- separation pipeline ---------------------------------------------------

SeparationResult separation_transmit(const nn::Tensor& image, const ChannelRealization& ch,
                                     std::size_t k, CodecAdapter& codec, double ps) {
  require_image(image, "separation_transmit");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  SeparationResult r;
  const auto alloc = waterfill(ch.svd.singular, ch.sigma_w2, ps * ch.antennas);
  r.capacity_bits = capacity(ch.svd.singular, alloc, ch.sigma_w2);
  const double bits = std::floor(static_cast<double>(k) * r.capacity_bits);
  r.bit_budget = bits >= 1e15 ? std::size_t{1} << 50 : static_cast<std::size_t>(bits);
  r.byte_budget = r.bit_budget / 8;
  if (r.byte_budget < codec.min_budget(h, w)) {
    r.below_codec_minimum = true;
    r.image = codec.fallback(h, w);
    return r;
  }
  const Bytes stream = codec.encode(image, r.byte_budget);
  if (stream.empty()) {
    r.below_codec_minimum = true;
    r.image = codec.fallback(h, w);
    return r;
  }
  if (stream.size() > r.byte_budget) {
    throw NumericError("codec " + codec.name() + " exceeded its byte budget");
  }
  r.bytes_used = stream.size();
  r.image = codec.decode(stream);
  return r;
}

}  // namespace vitmimo
