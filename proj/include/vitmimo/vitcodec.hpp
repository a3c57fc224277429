#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vitmimo/channel.hpp"
#include "vitmimo/rng.hpp"
#include "vitmimo/tensor.hpp"

namespace vitmimo {

// Denominator of the attention logits: sqrt(d) (hidden) or sqrt(d / N_s) (head).
enum class AttentionScale { hidden, head };

struct ViTConfig {
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t grid = 8;  // p: the image is cut into a p x p grid of patches
  std::size_t hidden = 256;
  std::size_t layers = 8;
  std::size_t heads = 8;
  std::size_t mlp_ratio = 4;
  int antennas = 2;
  std::size_t symbols = 128;  // k, channel uses per antenna
  AttentionScale attn_scale = AttentionScale::hidden;
  double ln_eps = 1e-5;
  double power = 1.0;  // Ps

  std::size_t sequence_length() const { return grid * grid; }
  std::size_t patch_dim() const { return 3 * image_h * image_w / sequence_length(); }
  std::size_t latent_width() const {
    return 2 * static_cast<std::size_t>(antennas) * symbols / sequence_length();
  }
  std::size_t head_dim() const { return hidden / heads; }
  std::size_t source_symbols() const { return 3 * image_h * image_w; }

  // Throws ConfigError naming the violated relation.
  void validate() const;
};

// k = round(R * 3hw).
std::size_t symbols_for_ratio(double ratio, std::size_t image_h, std::size_t image_w);

// Image (h x w x 3, channels innermost) -> l x c patch sequence. Patches are
// row-major over the grid; inside a patch pixels are row-major.
nn::Tensor patchify(const nn::Tensor& image, std::size_t grid);
nn::Tensor depatchify(const nn::Tensor& patches, std::size_t image_h, std::size_t image_w,
                      std::size_t grid);

struct TransformerLayerParams {
  nn::Tensor ln1_gain, ln1_bias;
  std::vector<nn::Tensor> w_q, w_k, w_v;  // one d x d_s matrix per head
  nn::Tensor w_proj;                      // d_s N_s x d
  nn::Tensor ln2_gain, ln2_bias;
  nn::Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderParams {
  nn::Tensor w_in;       // (c + 2Mk/l) x d
  nn::Tensor pos_table;  // l x d
  std::vector<TransformerLayerParams> layers;
  nn::Tensor w_out;  // d x 2Mk/l
};

struct DecoderParams {
  // Shared by the +S_d and -S_d branches.
  nn::Tensor siam_w1, siam_b1, siam_w2, siam_b2;
  nn::Tensor pos_table;
  std::vector<TransformerLayerParams> layers;
  nn::Tensor w_out;  // d x c
};

struct ViTParams {
  ViTConfig config;
  EncoderParams encoder;
  DecoderParams decoder;

  static ViTParams init(const ViTConfig& config, Rng& rng);

  // Stable order; names are the checkpoint keys.
  std::vector<std::pair<std::string, nn::Tensor>> named() const;
  std::vector<nn::Tensor> tensors() const;
  // Deep copy with independent storage.
  ViTParams clone() const;
};

nn::Tensor heatmap_tensor(const Heatmap& heat);

nn::Tensor self_attention(const nn::Tensor& x, const nn::Tensor& w_q, const nn::Tensor& w_k,
                          const nn::Tensor& w_v, double scale);

// F + [SA_1(LN(F)), ..., SA_Ns(LN(F))] W_i
nn::Tensor multi_head_attention(const nn::Tensor& f, const TransformerLayerParams& layer,
                                const ViTConfig& config);

// A = MSA(F); returns A + MLP(LN(A)).
nn::Tensor transformer_layer(const nn::Tensor& f, const TransformerLayerParams& layer,
                             const ViTConfig& config);

struct EncoderOutput {
  nn::Tensor latent;   // Z_e, l x 2Mk/l
  nn::Tensor symbols;  // power-normalized Z_e in the channel packing
};

EncoderOutput encode(const nn::Tensor& patches, const Heatmap& heat, const ViTParams& params);

// Channel input X (M x k) for a patch sequence.
CMatrix encoder_forward(const nn::Tensor& patches, const Heatmap& heat, const ViTParams& params);

// g(S_d) + g(-S_d), g = linear -> GeLU -> linear, S_d = [X'_s, heat].
nn::Tensor siamese_forward(const nn::Tensor& received, const Heatmap& heat,
                           const ViTParams& params);

// Differentiable decoder from the packed received sequence (l x 2Mk/l) to
// an unclamped h x w x 3 image.
nn::Tensor decode(const nn::Tensor& received, const Heatmap& heat, const ViTParams& params);

// Evaluation decoder: unpacks X', decodes and clamps to [0, 1].
nn::Tensor decoder_forward(const CMatrix& x_prime, const Heatmap& heat, const ViTParams& params);

nn::Tensor clamp_unit(const nn::Tensor& image);

}  // namespace vitmimo
