#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <vector>

#include "vitmimo/datasets.hpp"
#include "vitmimo/errors.hpp"
#include "vitmimo/vitcodec.hpp"

using namespace vitmimo;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vitmimo_test_datasets";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

double pixel(const ImageSet& set, std::size_t img, std::size_t y, std::size_t x, std::size_t c) {
  return set.images[img].values()[static_cast<Eigen::Index>((y * set.width + x) * 3 + c)];
}

}  // namespace

TEST_CASE("load_raw_batch: two-record fixture") {
  std::vector<unsigned char> bytes(2 * kRawRecordBytes, 0);
  bytes[0] = 3;
  std::fill(bytes.begin() + kRawRecordBytes + 1, bytes.end(), 255);
  const fs::path p = temp_path("two.bin");
  write_bytes(p, bytes);
  const ImageSet set = load_raw_batch(p);
  REQUIRE(set.size() == 2);
  CHECK(set.height == 32);
  CHECK(set.width == 32);
  CHECK(set.images[0].shape() == nn::Shape{32, 32, 3});
  CHECK(set.images[0].values().maxCoeff() == 0.0);
  CHECK(set.images[1].values().minCoeff() == 1.0);
  CHECK(set.images[1].values().maxCoeff() == 1.0);
  CHECK(load_raw_batch(p).checksum == set.checksum);
}

TEST_CASE("load_raw_batch: byte i of a plane lands at (i / 32, i % 32) of its channel") {
  const std::size_t plane = 1024;
  for (std::size_t channel = 0; channel < 3; ++channel) {
    for (std::size_t i : {0u, 1u, 31u, 32u, 517u, 1023u}) {
      std::vector<unsigned char> bytes(kRawRecordBytes, 0);
      bytes[1 + channel * plane + i] = 51;
      const fs::path p = temp_path("pixel.bin");
      write_bytes(p, bytes);
      const ImageSet set = load_raw_batch(p);
      CHECK(pixel(set, 0, i / 32, i % 32, channel) == doctest::Approx(0.2));
      CHECK(set.images[0].values().sum() == doctest::Approx(0.2));
    }
  }
}

TEST_CASE("load_raw_batch: errors") {
  const fs::path p = temp_path("short.bin");
  write_bytes(p, std::vector<unsigned char>(kRawRecordBytes + 5, 0));
  CHECK_THROWS_AS(load_raw_batch(p), FormatError);
  write_bytes(p, {});
  CHECK_THROWS_AS(load_raw_batch(p), FormatError);
  CHECK_THROWS_AS(load_raw_batch(temp_path("missing.bin")), IoError);
}

TEST_CASE("manifest checksums are verified on load") {
  const fs::path data = temp_path("batch.bin");
  std::vector<unsigned char> bytes(kRawRecordBytes, 7);
  write_bytes(data, bytes);
  const fs::path manifest = temp_path("manifest.json");
  const fs::path files[] = {data};
  write_manifest(manifest, files);
  CHECK(load_raw_batch(data, manifest).size() == 1);

  bytes[100] = 8;
  write_bytes(data, bytes);
  CHECK_THROWS_AS(load_raw_batch(data, manifest), FormatError);
  const fs::path other = temp_path("other.bin");
  write_bytes(other, bytes);
  CHECK_THROWS_AS(load_raw_batch(other, manifest), FormatError);
}

TEST_CASE("checksum_hex is FNV-1a 64") {
  CHECK(checksum_hex({}) == "cbf29ce484222325");
  const std::uint8_t a[] = {'a'};
  CHECK(checksum_hex(a) == "af63dc4c8601ec8c");
}

TEST_CASE("synthetic_set: determinism, range, kinds") {
  for (auto kind : {SyntheticKind::gradients, SyntheticKind::checkers, SyntheticKind::noise}) {
    const ImageSet a = synthetic_set(kind, 5, 8, 8, 3);
    const ImageSet b = synthetic_set(kind, 5, 8, 8, 3);
    const ImageSet c = synthetic_set(kind, 5, 8, 8, 4);
    REQUIRE(a.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(a.images[i].values() == b.images[i].values());
      CHECK(a.images[i].values() != c.images[i].values());
      CHECK(a.images[i].values().minCoeff() >= 0.0);
      CHECK(a.images[i].values().maxCoeff() <= 1.0);
    }
    CHECK(a.checksum == b.checksum);
    CHECK(a.checksum != c.checksum);
    CHECK(parse_synthetic_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_synthetic_kind("stripes"), ConfigError);
  CHECK_THROWS_AS(synthetic_set(SyntheticKind::noise, 0, 8, 8, 1), ConfigError);
}

TEST_CASE("synthetic_set: grid-aligned checkers patchify to constant rows") {
  const ImageSet set = synthetic_set(SyntheticKind::checkers, 4, 8, 8, 5, 2);
  for (const auto& img : set.images) {
    const auto rows = patchify(img, 4).matrix();
    REQUIRE(rows.rows() == 16);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        CHECK(rows(r, c) == rows(r, c % 3));
      }
    }
  }
}

TEST_CASE("synthetic_set: noise mean") {
  const ImageSet set = synthetic_set(SyntheticKind::noise, 2000, 8, 8, 6);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& img : set.images) {
    sum += img.values().sum();
    n += static_cast<std::size_t>(img.size());
  }
  CHECK(n >= 100000);
  CHECK(std::abs(sum / static_cast<double>(n) - 0.5) < 0.01);
}

TEST_CASE("every synthetic image round-trips patchify / depatchify") {
  for (auto kind : {SyntheticKind::gradients, SyntheticKind::checkers, SyntheticKind::noise}) {
    const ImageSet set = synthetic_set(kind, 3, 12, 8, 7);
    for (const auto& img : set.images) {
      CHECK(depatchify(patchify(img, 4), 12, 8, 4).values() == img.values());
    }
  }
}
