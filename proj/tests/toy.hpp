#pragma once

#include "vitmimo/trainer.hpp"
#include "vitmimo/vitcodec.hpp"

// 8x8x3 images on a 4x4 grid, d=32, two layers, four heads, 2x2 MIMO, R=1/12.
inline vitmimo::ViTConfig toy_config(std::size_t symbols = 16) {
  vitmimo::ViTConfig cfg;
  cfg.image_h = 8;
  cfg.image_w = 8;
  cfg.grid = 4;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.antennas = 2;
  cfg.symbols = symbols;
  return cfg;
}

inline vitmimo::nn::Tensor random_image(vitmimo::Rng& rng, std::size_t h, std::size_t w) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(h * w * 3));
  for (auto& x : v) x = rng.uniform();
  return vitmimo::nn::Tensor({h, w, 3}, std::move(v));
}

// Singular-value floor used by the toy SVD receiver: subchannels weaker
// than this are dropped instead of amplifying noise into the decoder.
inline constexpr double kToyFloor = 0.3;

inline vitmimo::TrainConfig toy_universal_train(std::uint64_t seed, double ratio = 1.0 / 12.0,
                                                vitmimo::SvdMode mode = vitmimo::SvdMode::with_svd) {
  vitmimo::TrainConfig t;
  t.ratio = ratio;
  t.snr = vitmimo::SnrStrategy::uniform(0.0, 22.0);
  t.batch_size = 8;
  t.lr = 1e-3;
  t.seed = seed;
  t.svd_mode = mode;
  t.floor = kToyFloor;
  return t;
}

inline vitmimo::ViTConfig toy_config_for(double ratio) {
  return toy_config(vitmimo::symbols_for_ratio(ratio, 8, 8));
}
