#pragma once

#include <cstddef>
#include <span>

#include "vitmimo/mimolin.hpp"
#include "vitmimo/rng.hpp"
#include "vitmimo/tensor.hpp"

namespace vitmimo {

// One block-fading realization: H is held for all k symbols of an image.
struct ChannelRealization {
  CMatrix h;
  SvdFactors svd;
  double sigma_w2 = 1.0;  // noise variance per complex entry
  int antennas = 0;
};

// sigma_w2 == 0 gives a noiseless link.
ChannelRealization make_realization(CMatrix h, double sigma_w2);
ChannelRealization sample_realization(Rng& rng, int antennas, double sigma_w2,
                                      double sigma_h2 = 1.0);

// Effective per-symbol noise powers, shape l x (2Mk/l).
struct Heatmap {
  nn::RowMatrix values;
};

enum class SvdMode { with_svd, without_svd };

// Average received SNR in dB <-> noise variance: sigma_w2 = M / 10^(mu/10).
double snr_to_sigma2(double mu_db, int antennas);
double sigma2_to_snr(double sigma_w2, int antennas);

// Real <-> complex packing. Pair (2j, 2j+1) is (re, im) of symbol j, where
// symbols are stored antenna-major: j = antenna * k + t.
CMatrix unpack_symbols(std::span<const double> packed, int antennas, std::size_t k);
Eigen::VectorXd pack_symbols(const CMatrix& x);

// Scales the packed latent so that ||X||_F^2 / (Mk) == ps exactly.
CMatrix power_normalize(std::span<const double> z, int antennas, std::size_t k, double ps = 1.0);

CMatrix precode(const CMatrix& x, const CMatrix& v);

// i.i.d. CN(0, sigma_w2) noise matrix.
CMatrix sample_noise(Rng& rng, int antennas, std::size_t k, double sigma_w2);

// Y = H Xp + W.
CMatrix apply_channel(const CMatrix& xp, const ChannelRealization& ch, Rng& rng);

// X' = pinv(Sigma) U^H Y.
CMatrix equalize(const CMatrix& y, const ChannelRealization& ch,
                 double floor = kDefaultSingularFloor);

// Row i of the M x k noise-power matrix is sigma_w2 / max(s_i, floor)^2. It is
// halved (real and imaginary share the power), duplicated along the symbol
// axis and reshaped row-major to l x (2Mk/l).
Heatmap build_heatmap(const ChannelRealization& ch, std::size_t k, std::size_t l,
                      double floor = kDefaultSingularFloor);

// Constant heatmap sigma_w2 / 2: noise power of each real component of raw Y.
Heatmap raw_noise_heatmap(double sigma_w2, int antennas, std::size_t k, std::size_t l);

// Differentiable transmission of packed, power-normalized symbols
// (shape l x 2Mk/l). with_svd: precode, channel, equalize. without_svd:
// raw Y = H X + W. Returns the decoder input in the same packing; the
// backward pass maps through the effective linear channel.
nn::Tensor transmit(const nn::Tensor& symbols, const ChannelRealization& ch, SvdMode mode,
                    Rng& rng, double floor = kDefaultSingularFloor);

}  // namespace vitmimo
