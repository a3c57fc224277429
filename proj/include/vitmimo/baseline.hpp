#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vitmimo/channel.hpp"
#include "vitmimo/mimolin.hpp"
#include "vitmimo/tensor.hpp"

namespace vitmimo {

// Diagonal of the power-shaping matrix applied to the SVD subchannel streams.
struct PowerAllocation {
  RVector weights;           // lambda_i, amplitude gains
  double water_level = 0.0;  // nu; lambda_i^2 = max(0, nu - sigma^2 / s_i^2)

  RVector powers() const { return weights.cwiseAbs2(); }
};

// Capacity-optimal split of total_power over subchannels with gains s
// (descending). Throws NumericError when every s_i is zero.
PowerAllocation waterfill(const RVector& singular, double sigma_w2, double total_power);

// Sum of log2(1 + lambda_i^2 s_i^2 / sigma^2), bits per channel use.
double capacity(const RVector& singular, const PowerAllocation& alloc, double sigma_w2);

PowerAllocation equal_allocation(std::size_t streams, double total_power);

using Bytes = std::vector<std::uint8_t>;

// Byte-level source codec: encode must respect the byte budget exactly.
class CodecAdapter {
 public:
  virtual ~CodecAdapter() = default;
  virtual std::string name() const = 0;
  // Smallest budget that still yields a decodable stream for an h x w image.
  virtual std::size_t min_budget(std::size_t h, std::size_t w) = 0;
  virtual Bytes encode(const nn::Tensor& image, std::size_t byte_budget) = 0;
  virtual nn::Tensor decode(const Bytes& stream) = 0;
  // Reconstruction used when the budget is below min_budget: mid-grey.
  virtual nn::Tensor fallback(std::size_t h, std::size_t w) const;
};

// Built-in mock codec. Each rung stores f x f block means with q bits per
// sample (f = 1 keeps every pixel); the last rung is a lossless raw dump.
// encode picks, among the rungs that fit the budget, the one with the
// lowest reconstruction error.
class QuantizationCodec : public CodecAdapter {
 public:
  struct Rung {
    std::size_t factor = 1;  // 0 marks the lossless rung
    unsigned bits = 8;
  };

  QuantizationCodec();
  explicit QuantizationCodec(std::vector<Rung> ladder);
  // Single-pixel rungs with q = 1..8 top bits, then lossless.
  static QuantizationCodec top_bits();

  std::string name() const override { return "mock"; }
  std::size_t min_budget(std::size_t h, std::size_t w) override;
  Bytes encode(const nn::Tensor& image, std::size_t byte_budget) override;
  nn::Tensor decode(const Bytes& stream) override;

  static constexpr std::size_t kHeaderBytes = 7;
  static std::size_t rung_bytes(const Rung& rung, std::size_t h, std::size_t w);

 private:
  static Bytes encode_rung(const nn::Tensor& image, const Rung& rung);

  std::vector<Rung> ladder_;
};

// Wraps an external codec binary (for example bpgenc/bpgdec). Commands are
// shell templates with {in}, {out} and {q} placeholders. Images are
// exchanged as 8-bit binary PPM.
class SubprocessCodec : public CodecAdapter {
 public:
  struct Options {
    std::string encode_command;  // e.g. "bpgenc -q {q} -o {out} {in}"
    std::string decode_command;  // e.g. "bpgdec -o {out} {in}"
    int quality_min = 0;
    int quality_max = 51;
    bool higher_quality_value_is_better = false;  // bpgenc: lower qp is better
    int max_search_steps = 12;
    std::filesystem::path work_dir = std::filesystem::temp_directory_path();
  };

  explicit SubprocessCodec(Options options);

  std::string name() const override { return "subprocess"; }
  std::size_t min_budget(std::size_t h, std::size_t w) override;
  Bytes encode(const nn::Tensor& image, std::size_t byte_budget) override;
  nn::Tensor decode(const Bytes& stream) override;

 private:
  Bytes run_encoder(const std::filesystem::path& input, int quality);
  std::filesystem::path scratch(const std::string& suffix);

  Options options_;
  std::uint64_t counter_ = 0;
};

void write_ppm(const std::filesystem::path& path, const nn::Tensor& image);
nn::Tensor read_ppm(const std::filesystem::path& path);

struct SeparationResult {
  nn::Tensor image;
  double capacity_bits = 0.0;  // per channel use
  std::size_t bit_budget = 0;
  std::size_t byte_budget = 0;
  std::size_t bytes_used = 0;
  bool below_codec_minimum = false;
};

// Idealized separation benchmark: the codec spends floor(k C / 8) bytes,
// with C the water-filled capacity of this realization, delivered error free.
SeparationResult separation_transmit(const nn::Tensor& image, const ChannelRealization& ch,
                                     std::size_t k, CodecAdapter& codec, double ps = 1.0);

}  // namespace vitmimo
