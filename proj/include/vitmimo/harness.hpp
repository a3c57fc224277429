#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vitmimo/baseline.hpp"
#include "vitmimo/channel.hpp"
#include "vitmimo/datasets.hpp"
#include "vitmimo/vitcodec.hpp"

namespace vitmimo {

// Reported for a perfect reconstruction.
inline constexpr double kSaturatedPsnr = 200.0;

// 10 log10(1 / MSE) for images in [0, 1].
double psnr(const nn::Tensor& s, const nn::Tensor& s_hat);
double psnr_from_mse(double mse);

enum class Scheme { vit, vit_universal, vit_universal_no_svd, separation };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);
SvdMode svd_mode_of(Scheme scheme);

struct EvalRecord {
  std::string scheme;
  double ratio = 0.0;
  double snr_db = 0.0;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  std::size_t n_images = 0;
  std::size_t n_draws = 0;  // channel draws per image
  std::uint64_t seed = 0;
  bool saturated = false;  // at least one draw hit kSaturatedPsnr
};

struct EvalOptions {
  std::size_t draws_per_image = 1;
  std::uint64_t seed = 0;
  double floor = kDefaultSingularFloor;
};

// Image i uses Rng::stream(seed, i) for its channel draws and noise, so
// records at different SNRs share channel realizations.
EvalRecord evaluate(const ViTParams& params, const ImageSet& data, double snr_db, SvdMode mode,
                    const EvalOptions& opts, const std::string& scheme = "vit");

EvalRecord evaluate_separation(const ImageSet& data, double snr_db, std::size_t k, int antennas,
                               CodecAdapter& codec, const EvalOptions& opts, double ps = 1.0);

struct SweepGrid {
  std::vector<Scheme> schemes;
  std::vector<double> ratios;
  std::vector<double> snrs;
};

// Checkpoint for a learned scheme at (R, test SNR).
using CheckpointLocator =
    std::function<std::filesystem::path(Scheme scheme, double ratio, double snr_db)>;

struct SweepResult {
  std::vector<EvalRecord> records;
  std::vector<std::string> missing;  // one line per skipped cell
};

// One record per (scheme, R, SNR) in grid order. Cells whose checkpoint is
// missing, has a different k, or was trained with another SVD mode are
// listed in `missing` and skipped. Evaluation uses the checkpoint's
// singular-value floor. Throws ConfigError for an empty grid.
SweepResult run_sweep(const SweepGrid& grid, const ImageSet& data, const EvalOptions& opts,
                      const CheckpointLocator& locate, CodecAdapter* codec, int antennas = 2);

// scheme,R,snr_test_db,psnr_mean_db,psnr_std_db,n_images,n_draws,seed
std::string records_csv(const std::vector<EvalRecord>& records);
std::string records_json(const std::vector<EvalRecord>& records);
// {"series": {"<scheme>": [{"R", "snr_test_db", "psnr_mean_db", "psnr_std_db"}, ...]}}
std::string series_json(const std::vector<EvalRecord>& records);

// Writes through a temporary file and a rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace vitmimo
