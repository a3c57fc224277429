#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vitmimo/tensor.hpp"

namespace vitmimo {

// Images of a common size, h x w x 3 with values in [0, 1].
struct ImageSet {
  std::vector<nn::Tensor> images;
  std::size_t height = 0;
  std::size_t width = 0;
  std::string source;
  std::string checksum;  // of the raw bytes, or of the generator arguments

  std::size_t size() const { return images.size(); }
};

// Raw batch layout: records of one label byte followed by 3072 bytes of
// 32x32 channel-planar pixels (all R, then G, then B; each plane row-major).
inline constexpr std::size_t kRawSide = 32;
inline constexpr std::size_t kRawRecordBytes = 1 + 3 * kRawSide * kRawSide;

ImageSet load_raw_batch(const std::filesystem::path& path);

// Same, additionally checking the checksum listed for the file in a JSON
// manifest ({"files": {"<name>": "<checksum>"}}). Throws FormatError on mismatch.
ImageSet load_raw_batch(const std::filesystem::path& path, const std::filesystem::path& manifest);

void write_manifest(const std::filesystem::path& manifest,
                    std::span<const std::filesystem::path> files);

// FNV-1a 64, lower-case hex.
std::string checksum_hex(std::span<const std::uint8_t> bytes);

enum class SyntheticKind { gradients, checkers, noise };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

// Deterministic per seed. Checkers use square cells of side `cell`
// (0 picks h / 4) with two random colours.
ImageSet synthetic_set(SyntheticKind kind, std::size_t n, std::size_t h, std::size_t w,
                       std::uint64_t seed, std::size_t cell = 0);

}  // namespace vitmimo
