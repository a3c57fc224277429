#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vitmimo/adam.hpp"
#include "vitmimo/channel.hpp"
#include "vitmimo/config.hpp"
#include "vitmimo/datasets.hpp"
#include "vitmimo/rng.hpp"
#include "vitmimo/vitcodec.hpp"

namespace vitmimo {

// Training SNR: a constant, a per-sample uniform draw, or no noise at all.
struct SnrStrategy {
  enum class Kind { fixed, uniform, noiseless };
  Kind kind = Kind::fixed;
  double lo = 10.0;
  double hi = 10.0;

  static SnrStrategy fixed(double mu_db);
  static SnrStrategy uniform(double lo_db, double hi_db);
  static SnrStrategy noiseless();

  // "fixed:5", "uniform:0:22", "noiseless".
  static SnrStrategy parse(const std::string& text);
  std::string to_string() const;
};

// Fixed returns the constant, Uniform a draw in [lo, hi], noiseless +inf.
double sample_train_snr(const SnrStrategy& strategy, Rng& rng);

struct TrainConfig {
  double ratio = 1.0 / 12.0;  // R = k / 3hw
  SnrStrategy snr = SnrStrategy::fixed(10.0);
  std::size_t batch_size = 16;
  double lr = 5e-5;
  std::uint64_t steps = 1000;
  std::uint64_t seed = 0;
  SvdMode svd_mode = SvdMode::with_svd;
  std::uint64_t eval_every = 0;  // 0: no periodic evaluation
  std::string checkpoint_path;
  double floor = kDefaultSingularFloor;

  // Throws ConfigError naming the field.
  void validate(const ViTConfig& model) const;

  // FNV-1a 64 over the fields that affect optimization.
  std::uint64_t digest() const;
};

std::string to_string(SvdMode mode);
SvdMode parse_svd_mode(const std::string& text);

// Config sections [model] and [train]. Missing keys keep the struct
// defaults; model.symbols defaults to round(train.ratio * 3hw).
ViTConfig model_config_from(const KeyValueConfig& kv);
TrainConfig train_config_from(const KeyValueConfig& kv);
void describe(const ViTConfig& model, KeyValueConfig& out);
void describe(const TrainConfig& cfg, KeyValueConfig& out);

// Mean over all pixels and channels of the squared difference.
nn::Tensor mse_loss(const nn::Tensor& s, const nn::Tensor& s_hat);

// Differentiable mean loss of a batch through one channel use each. Every
// image gets its own SNR draw, channel draw and noise.
nn::Tensor batch_loss(std::span<const nn::Tensor> batch, const ViTParams& params,
                      const TrainConfig& cfg, Rng& rng);

// batch_loss, backward, one Adam update. Throws NumericError (parameters
// untouched) when the loss or a gradient is not finite.
double train_step(std::span<const nn::Tensor> batch, ViTParams& params, nn::AdamState& opt,
                  const TrainConfig& cfg, Rng& rng);

// Mean MSE over a whole set, without gradients, under its own seed.
double dataset_loss(const ViTParams& params, const ImageSet& data, const TrainConfig& cfg,
                    std::uint64_t seed);

struct Checkpoint {
  TrainConfig train;
  ViTParams params;
  nn::AdamState adam;
  std::uint64_t step = 0;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: magic, version, train digest, array count, then named
// arrays (name length, name, dtype tag, rank, dims, little-endian payload),
// then an FNV-1a checksum of everything before it. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws CheckpointVersionError, CheckpointCorruptError (truncation, bad
// magic or checksum, malformed records) or MissingArtifactError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Additionally requires the stored model to match `expected`; throws
// CheckpointShapeError listing the first disagreeing array otherwise.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ViTConfig& expected);

class Trainer {
 public:
  using StepCallback = std::function<void(std::uint64_t step, double loss)>;

  // Parameters from stream (seed, 0); batches, SNRs, channels and noise
  // from stream (seed, 1).
  Trainer(const ViTConfig& model, const TrainConfig& cfg);
  explicit Trainer(Checkpoint ckpt);

  // Draws a batch (without replacement) and takes one step. On a numeric
  // failure with a checkpoint path set, the pre-batch state is written to
  // "<checkpoint_path>.abort" before the error propagates.
  double step(const ImageSet& data);

  std::vector<double> run(const ImageSet& data, std::uint64_t steps,
                          const StepCallback& on_step = {});

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;

  const ViTParams& params() const { return params_; }
  ViTParams& params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const nn::AdamState& optimizer() const { return adam_; }
  const Rng& rng() const { return rng_; }
  std::uint64_t steps_done() const { return step_; }

 private:
  TrainConfig cfg_;
  ViTParams params_;
  nn::AdamState adam_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

}  // namespace vitmimo
