#include "vitmimo/vitcodec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vitmimo/errors.hpp"
#include "vitmimo/ops.hpp"

namespace vitmimo {

using nn::Tensor;

void ViTConfig::validate() const {
  if (grid == 0 || image_h == 0 || image_w == 0) throw ConfigError("image size and grid must be positive");
  if (image_h % grid != 0 || image_w % grid != 0) {
    throw ConfigError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                      " is not divisible by grid " + std::to_string(grid));
  }
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("hidden width " + std::to_string(hidden) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (antennas < 1) throw ConfigError("antenna count must be >= 1");
  if (symbols == 0) throw ConfigError("channel uses k must be positive");
  const std::size_t total = 2 * static_cast<std::size_t>(antennas) * symbols;
  if (total % sequence_length() != 0) {
    throw ConfigError("2Mk = " + std::to_string(total) + " is not divisible by l = " +
                      std::to_string(sequence_length()));
  }
  if (mlp_ratio == 0) throw ConfigError("mlp ratio must be positive");
}

std::size_t symbols_for_ratio(double ratio, std::size_t image_h, std::size_t image_w) {
  if (!(ratio > 0.0)) throw ConfigError("bandwidth ratio must be positive");
  return static_cast<std::size_t>(
      std::llround(ratio * 3.0 * static_cast<double>(image_h * image_w)));
}

namespace {

std::vector<std::size_t> patch_sources(std::size_t h, std::size_t w, std::size_t grid) {
  if (grid == 0 || h % grid != 0 || w % grid != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible by grid " + std::to_string(grid));
  }
  const std::size_t ph = h / grid, pw = w / grid;
  std::vector<std::size_t> src;
  src.reserve(h * w * 3);
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx)
      for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px)
          for (std::size_t ch = 0; ch < 3; ++ch)
            src.push_back(((gy * ph + py) * w + gx * pw + px) * 3 + ch);
  return src;
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  Eigen::VectorXd v(static_cast<Eigen::Index>(fan_in * fan_out));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal() * sd;
  return Tensor({fan_in, fan_out}, std::move(v), true);
}

Tensor gaussian(nn::Shape shape, double sd, Rng& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(nn::shape_size(shape)));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal() * sd;
  return Tensor(std::move(shape), std::move(v), true);
}

TransformerLayerParams init_layer(const ViTConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.hidden, ds = cfg.head_dim(), hid = cfg.mlp_ratio * d;
  TransformerLayerParams p;
  p.ln1_gain = Tensor::filled({d}, 1.0, true);
  p.ln1_bias = Tensor::zeros({d}, true);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    p.w_q.push_back(xavier(d, ds, rng));
    p.w_k.push_back(xavier(d, ds, rng));
    p.w_v.push_back(xavier(d, ds, rng));
  }
  p.w_proj = xavier(ds * cfg.heads, d, rng);
  p.ln2_gain = Tensor::filled({d}, 1.0, true);
  p.ln2_bias = Tensor::zeros({d}, true);
  p.mlp_w1 = xavier(d, hid, rng);
  p.mlp_b1 = Tensor::zeros({hid}, true);
  p.mlp_w2 = xavier(hid, d, rng);
  p.mlp_b2 = Tensor::zeros({d}, true);
  return p;
}

void append_layer(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                  const TransformerLayerParams& p) {
  out.emplace_back(prefix + "ln1.gain", p.ln1_gain);
  out.emplace_back(prefix + "ln1.bias", p.ln1_bias);
  for (std::size_t h = 0; h < p.w_q.size(); ++h) {
    const std::string head = prefix + "head" + std::to_string(h) + ".";
    out.emplace_back(head + "w_q", p.w_q[h]);
    out.emplace_back(head + "w_k", p.w_k[h]);
    out.emplace_back(head + "w_v", p.w_v[h]);
  }
  out.emplace_back(prefix + "w_proj", p.w_proj);
  out.emplace_back(prefix + "ln2.gain", p.ln2_gain);
  out.emplace_back(prefix + "ln2.bias", p.ln2_bias);
  out.emplace_back(prefix + "mlp.w1", p.mlp_w1);
  out.emplace_back(prefix + "mlp.b1", p.mlp_b1);
  out.emplace_back(prefix + "mlp.w2", p.mlp_w2);
  out.emplace_back(prefix + "mlp.b2", p.mlp_b2);
}

TransformerLayerParams clone_layer(const TransformerLayerParams& p) {
  auto c = [](const Tensor& t) { return t.clone(t.requires_grad()); };
  TransformerLayerParams out;
  out.ln1_gain = c(p.ln1_gain);
  out.ln1_bias = c(p.ln1_bias);
  for (const auto& t : p.w_q) out.w_q.push_back(c(t));
  for (const auto& t : p.w_k) out.w_k.push_back(c(t));
  for (const auto& t : p.w_v) out.w_v.push_back(c(t));
  out.w_proj = c(p.w_proj);
  out.ln2_gain = c(p.ln2_gain);
  out.ln2_bias = c(p.ln2_bias);
  out.mlp_w1 = c(p.mlp_w1);
  out.mlp_b1 = c(p.mlp_b1);
  out.mlp_w2 = c(p.mlp_w2);
  out.mlp_b2 = c(p.mlp_b2);
  return out;
}

std::vector<std::size_t> positions(std::size_t l) {
  std::vector<std::size_t> idx(l);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void require_finite(const Tensor& t, const char* stage, std::size_t layer) {
  if (!nn::all_finite(t)) {
    throw NumericError(std::string(stage) + ": non-finite activation at layer " +
                       std::to_string(layer));
  }
}

void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.dim() != 2 || t.rows() != rows || t.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "], got " + nn::shape_string(t.shape()));
  }
}

}  // namespace

Tensor patchify(const Tensor& image, std::size_t grid) {
  if (image.dim() != 3 || image.shape()[2] != 3) {
    throw DimensionError("patchify: expected h x w x 3 image, got " +
                         nn::shape_string(image.shape()));
  }
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  const auto src = patch_sources(h, w, grid);
  const std::size_t l = grid * grid;
  return nn::gather(image, src, {l, 3 * h * w / l});
}

Tensor depatchify(const Tensor& patches, std::size_t image_h, std::size_t image_w,
                  std::size_t grid) {
  const auto src = patch_sources(image_h, image_w, grid);
  const std::size_t l = grid * grid;
  if (patches.dim() != 2 || patches.rows() != l || patches.cols() != 3 * image_h * image_w / l) {
    throw DimensionError("depatchify: got " + nn::shape_string(patches.shape()) + " for a " +
                         std::to_string(image_h) + "x" + std::to_string(image_w) +
                         " image on a grid of " + std::to_string(grid));
  }
  std::vector<std::size_t> inverse(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) inverse[src[i]] = i;
  return nn::gather(patches, inverse, {image_h, image_w, 3});
}

ViTParams ViTParams::init(const ViTConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.hidden, l = config.sequence_length(), c = config.patch_dim(),
                    lw = config.latent_width();
  ViTParams p;
  p.config = config;
  p.encoder.w_in = xavier(c + lw, d, rng);
  p.encoder.pos_table = gaussian({l, d}, 0.02, rng);
  for (std::size_t i = 0; i < config.layers; ++i) p.encoder.layers.push_back(init_layer(config, rng));
  p.encoder.w_out = xavier(d, lw, rng);

  p.decoder.siam_w1 = xavier(2 * lw, d, rng);
  p.decoder.siam_b1 = Tensor::zeros({d}, true);
  p.decoder.siam_w2 = xavier(d, d, rng);
  p.decoder.siam_b2 = Tensor::zeros({d}, true);
  p.decoder.pos_table = gaussian({l, d}, 0.02, rng);
  for (std::size_t i = 0; i < config.layers; ++i) p.decoder.layers.push_back(init_layer(config, rng));
  p.decoder.w_out = xavier(d, c, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ViTParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("encoder.w_in", encoder.w_in);
  out.emplace_back("encoder.pos_table", encoder.pos_table);
  for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
    append_layer(out, "encoder.layer" + std::to_string(i) + ".", encoder.layers[i]);
  }
  out.emplace_back("encoder.w_out", encoder.w_out);
  out.emplace_back("decoder.siam.w1", decoder.siam_w1);
  out.emplace_back("decoder.siam.b1", decoder.siam_b1);
  out.emplace_back("decoder.siam.w2", decoder.siam_w2);
  out.emplace_back("decoder.siam.b2", decoder.siam_b2);
  out.emplace_back("decoder.pos_table", decoder.pos_table);
  for (std::size_t i = 0; i < decoder.layers.size(); ++i) {
    append_layer(out, "decoder.layer" + std::to_string(i) + ".", decoder.layers[i]);
  }
  out.emplace_back("decoder.w_out", decoder.w_out);
  return out;
}

std::vector<Tensor> ViTParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ViTParams ViTParams::clone() const {
  auto c = [](const Tensor& t) { return t.clone(t.requires_grad()); };
  ViTParams out;
  out.config = config;
  out.encoder.w_in = c(encoder.w_in);
  out.encoder.pos_table = c(encoder.pos_table);
  for (const auto& l : encoder.layers) out.encoder.layers.push_back(clone_layer(l));
  out.encoder.w_out = c(encoder.w_out);
  out.decoder.siam_w1 = c(decoder.siam_w1);
  out.decoder.siam_b1 = c(decoder.siam_b1);
  out.decoder.siam_w2 = c(decoder.siam_w2);
  out.decoder.siam_b2 = c(decoder.siam_b2);
  out.decoder.pos_table = c(decoder.pos_table);
  for (const auto& l : decoder.layers) out.decoder.layers.push_back(clone_layer(l));
  out.decoder.w_out = c(decoder.w_out);
  return out;
}

Tensor heatmap_tensor(const Heatmap& heat) { return Tensor::from_matrix(heat.values); }

Tensor self_attention(const Tensor& x, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                      double scale) {
  const Tensor q = nn::matmul(x, w_q);
  const Tensor k = nn::matmul(x, w_k);
  const Tensor v = nn::matmul(x, w_v);
  const Tensor scores = nn::scale(nn::matmul(q, nn::transpose(k)), 1.0 / scale);
  return nn::matmul(nn::softmax_rows(scores), v);
}

Tensor multi_head_attention(const Tensor& f, const TransformerLayerParams& layer,
                            const ViTConfig& config) {
  const double scale = std::sqrt(static_cast<double>(
      config.attn_scale == AttentionScale::hidden ? config.hidden : config.head_dim()));
  const Tensor normed = nn::layer_norm(f, layer.ln1_gain, layer.ln1_bias, config.ln_eps);
  std::vector<Tensor> heads;
  heads.reserve(layer.w_q.size());
  for (std::size_t h = 0; h < layer.w_q.size(); ++h) {
    heads.push_back(self_attention(normed, layer.w_q[h], layer.w_k[h], layer.w_v[h], scale));
  }
  return f + nn::matmul(nn::concat_cols(heads), layer.w_proj);
}

Tensor transformer_layer(const Tensor& f, const TransformerLayerParams& layer,
                         const ViTConfig& config) {
  const Tensor a = multi_head_attention(f, layer, config);
  const Tensor normed = nn::layer_norm(a, layer.ln2_gain, layer.ln2_bias, config.ln_eps);
  const Tensor hidden = nn::gelu(nn::add_row_bias(nn::matmul(normed, layer.mlp_w1), layer.mlp_b1));
  return a + nn::add_row_bias(nn::matmul(hidden, layer.mlp_w2), layer.mlp_b2);
}

EncoderOutput encode(const Tensor& patches, const Heatmap& heat, const ViTParams& params) {
  const ViTConfig& cfg = params.config;
  const std::size_t l = cfg.sequence_length();
  require_shape(patches, l, cfg.patch_dim(), "encoder input");
  const Tensor hm = heatmap_tensor(heat);
  require_shape(hm, l, cfg.latent_width(), "encoder heatmap");

  const auto pos = positions(l);
  Tensor f = nn::matmul(nn::concat_cols(patches, hm), params.encoder.w_in) +
             nn::embed_lookup(params.encoder.pos_table, pos);
  require_finite(f, "encoder", 0);
  for (std::size_t i = 0; i < params.encoder.layers.size(); ++i) {
    f = transformer_layer(f, params.encoder.layers[i], cfg);
    require_finite(f, "encoder", i + 1);
  }
  EncoderOutput out;
  out.latent = nn::matmul(f, params.encoder.w_out);
  const double target = std::sqrt(static_cast<double>(cfg.antennas) *
                                  static_cast<double>(cfg.symbols) * cfg.power);
  out.symbols = nn::scale_to_norm(out.latent, target);
  return out;
}

CMatrix encoder_forward(const Tensor& patches, const Heatmap& heat, const ViTParams& params) {
  nn::NoGradGuard guard;
  const auto out = encode(patches, heat, params);
  const auto& v = out.symbols.values();
  return unpack_symbols({v.data(), static_cast<std::size_t>(v.size())}, params.config.antennas,
                        params.config.symbols);
}

Tensor siamese_forward(const Tensor& received, const Heatmap& heat, const ViTParams& params) {
  const ViTConfig& cfg = params.config;
  const Tensor hm = heatmap_tensor(heat);
  require_shape(received, cfg.sequence_length(), cfg.latent_width(), "decoder input");
  require_shape(hm, cfg.sequence_length(), cfg.latent_width(), "decoder heatmap");
  const auto& dp = params.decoder;
  const Tensor s_d = nn::concat_cols(received, hm);
  auto branch = [&](const Tensor& x) {
    const Tensor hidden = nn::gelu(nn::add_row_bias(nn::matmul(x, dp.siam_w1), dp.siam_b1));
    return nn::add_row_bias(nn::matmul(hidden, dp.siam_w2), dp.siam_b2);
  };
  return branch(s_d) + branch(-s_d);
}

Tensor decode(const Tensor& received, const Heatmap& heat, const ViTParams& params) {
  const ViTConfig& cfg = params.config;
  const auto pos = positions(cfg.sequence_length());
  Tensor f = siamese_forward(received, heat, params) +
             nn::embed_lookup(params.decoder.pos_table, pos);
  require_finite(f, "decoder", 0);
  for (std::size_t i = 0; i < params.decoder.layers.size(); ++i) {
    f = transformer_layer(f, params.decoder.layers[i], cfg);
    require_finite(f, "decoder", i + 1);
  }
  return depatchify(nn::matmul(f, params.decoder.w_out), cfg.image_h, cfg.image_w, cfg.grid);
}

Tensor decoder_forward(const CMatrix& x_prime, const Heatmap& heat, const ViTParams& params) {
  const ViTConfig& cfg = params.config;
  if (x_prime.rows() != cfg.antennas || static_cast<std::size_t>(x_prime.cols()) != cfg.symbols) {
    throw DimensionError("decoder_forward: received block is " + std::to_string(x_prime.rows()) +
                         "x" + std::to_string(x_prime.cols()) + ", expected " +
                         std::to_string(cfg.antennas) + "x" + std::to_string(cfg.symbols));
  }
  nn::NoGradGuard guard;
  const Tensor received(nn::Shape{cfg.sequence_length(), cfg.latent_width()},
                        pack_symbols(x_prime));
  return clamp_unit(decode(received, heat, params));
}

Tensor clamp_unit(const Tensor& image) {
  return Tensor(image.shape(), image.values().cwiseMax(0.0).cwiseMin(1.0));
}

}  // namespace vitmimo
