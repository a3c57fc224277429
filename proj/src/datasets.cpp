#include "vitmimo/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <json.hpp>

#include "vitmimo/errors.hpp"
#include "vitmimo/rng.hpp"

namespace vitmimo {

namespace fs = std::filesystem;

std::string checksum_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

ImageSet load_raw_batch(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.empty() || bytes.size() % kRawRecordBytes != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of the " + std::to_string(kRawRecordBytes) +
                      "-byte record length");
  }
  constexpr std::size_t plane = kRawSide * kRawSide;
  ImageSet set;
  set.height = kRawSide;
  set.width = kRawSide;
  set.source = path.string();
  set.checksum = checksum_hex(bytes);
  for (std::size_t off = 0; off < bytes.size(); off += kRawRecordBytes) {
    Eigen::VectorXd px(static_cast<Eigen::Index>(3 * plane));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        px[static_cast<Eigen::Index>(i * 3 + c)] = bytes[off + 1 + c * plane + i] / 255.0;
    set.images.emplace_back(nn::Shape{kRawSide, kRawSide, 3}, std::move(px));
  }
  return set;
}

ImageSet load_raw_batch(const fs::path& path, const fs::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw IoError("cannot open manifest " + manifest.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  const std::string key = path.filename().string();
  if (!doc.contains("files") || !doc["files"].contains(key)) {
    throw FormatError(manifest.string() + ": no entry for " + key);
  }
  ImageSet set = load_raw_batch(path);
  const std::string expected = doc["files"][key].get<std::string>();
  if (expected != set.checksum) {
    throw FormatError(path.string() + ": checksum " + set.checksum + " does not match manifest " +
                      expected);
  }
  return set;
}

void write_manifest(const fs::path& manifest, std::span<const fs::path> files) {
  nlohmann::json doc;
  doc["files"] = nlohmann::json::object();
  for (const auto& f : files) doc["files"][f.filename().string()] = checksum_hex(read_bytes(f));
  std::ofstream os(manifest);
  if (!os) throw IoError("cannot write manifest " + manifest.string());
  os << doc.dump(2) << '\n';
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "gradients") return SyntheticKind::gradients;
  if (name == "checkers") return SyntheticKind::checkers;
  if (name == "noise") return SyntheticKind::noise;
  throw ConfigError("unknown synthetic image kind '" + name + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::gradients: return "gradients";
    case SyntheticKind::checkers: return "checkers";
    case SyntheticKind::noise: return "noise";
  }
  return "?";
}

ImageSet synthetic_set(SyntheticKind kind, std::size_t n, std::size_t h, std::size_t w,
                       std::uint64_t seed, std::size_t cell) {
  if (n == 0 || h == 0 || w == 0) throw ConfigError("synthetic set needs n, h, w >= 1");
  if (cell == 0) cell = std::max<std::size_t>(1, h / 4);
  Rng rng(seed);
  ImageSet set;
  set.height = h;
  set.width = w;
  set.source = "synthetic:" + to_string(kind);
  const std::string tag = set.source + ":" + std::to_string(n) + ":" + std::to_string(h) + "x" +
                          std::to_string(w) + ":" + std::to_string(seed) + ":" +
                          std::to_string(cell);
  set.checksum = checksum_hex({reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size()});

  for (std::size_t img = 0; img < n; ++img) {
    Eigen::VectorXd px(static_cast<Eigen::Index>(h * w * 3));
    auto at = [&](std::size_t y, std::size_t x, std::size_t c) -> double& {
      return px[static_cast<Eigen::Index>((y * w + x) * 3 + c)];
    };
    switch (kind) {
      case SyntheticKind::gradients: {
        double off[3], gx[3], gy[3];
        for (int c = 0; c < 3; ++c) {
          off[c] = rng.uniform(0.2, 0.8);
          gx[c] = rng.uniform(-0.6, 0.6);
          gy[c] = rng.uniform(-0.6, 0.6);
        }
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
              const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w) - 0.5;
              const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h) - 0.5;
              at(y, x, c) = std::clamp(off[c] + gx[c] * u + gy[c] * v, 0.0, 1.0);
            }
        break;
      }
      case SyntheticKind::checkers: {
        double a[3], b[3];
        for (int c = 0; c < 3; ++c) {
          a[c] = rng.uniform();
          b[c] = rng.uniform();
        }
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
              at(y, x, c) = ((y / cell + x / cell) % 2 == 0) ? a[c] : b[c];
        break;
      }
      case SyntheticKind::noise:
        for (auto& v : px) v = rng.uniform();
        break;
    }
    set.images.emplace_back(nn::Shape{h, w, 3}, std::move(px));
  }
  return set;
}

}  // namespace vitmimo
