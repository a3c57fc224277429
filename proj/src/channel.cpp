#include "vitmimo/channel.hpp"

#include <cmath>
#include <string>

#include "vitmimo/errors.hpp"

namespace vitmimo {

namespace {

using C = std::complex<double>;

std::size_t symbol_count(const nn::Tensor& symbols, int antennas) {
  if (symbols.size() % (2 * static_cast<std::size_t>(antennas)) != 0) {
    throw DimensionError("transmit: " + std::to_string(symbols.size()) +
                         " packed values do not split over " + std::to_string(antennas) +
                         " antennas");
  }
  return symbols.size() / (2 * static_cast<std::size_t>(antennas));
}

}  // namespace

ChannelRealization make_realization(CMatrix h, double sigma_w2) {
  if (!(sigma_w2 >= 0.0) || !std::isfinite(sigma_w2)) {
    throw ConfigError("channel noise variance must be finite and non-negative, got " +
                      std::to_string(sigma_w2));
  }
  ChannelRealization ch;
  ch.antennas = static_cast<int>(h.rows());
  ch.svd = svd<double>(h);
  ch.h = std::move(h);
  ch.sigma_w2 = sigma_w2;
  return ch;
}

ChannelRealization sample_realization(Rng& rng, int antennas, double sigma_w2,
                                      double sigma_h2) {
  return make_realization(sample_channel<double>(rng, antennas, sigma_h2), sigma_w2);
}

double snr_to_sigma2(double mu_db, int antennas) {
  if (antennas < 1) throw ConfigError("antenna count must be >= 1");
  return static_cast<double>(antennas) / std::pow(10.0, mu_db / 10.0);
}

double sigma2_to_snr(double sigma_w2, int antennas) {
  return 10.0 * std::log10(static_cast<double>(antennas) / sigma_w2);
}

CMatrix unpack_symbols(std::span<const double> packed, int antennas, std::size_t k) {
  const std::size_t m = static_cast<std::size_t>(antennas);
  if (packed.size() != 2 * m * k) {
    throw DimensionError("unpack_symbols: " + std::to_string(packed.size()) +
                         " values for a " + std::to_string(m) + "x" + std::to_string(k) +
                         " symbol block");
  }
  CMatrix x(antennas, static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < m * k; ++j) x.data()[j] = C(packed[2 * j], packed[2 * j + 1]);
  return x;
}

Eigen::VectorXd pack_symbols(const CMatrix& x) {
  Eigen::VectorXd out(2 * x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    out[2 * j] = x.data()[j].real();
    out[2 * j + 1] = x.data()[j].imag();
  }
  return out;
}

CMatrix power_normalize(std::span<const double> z, int antennas, std::size_t k, double ps) {
  double energy = 0.0;
  for (double v : z) energy += v * v;
  if (!(energy > 0.0) || !std::isfinite(energy)) {
    throw NumericError("power_normalize: latent has zero or non-finite norm");
  }
  const double target = static_cast<double>(antennas) * static_cast<double>(k) * ps;
  CMatrix x = unpack_symbols(z, antennas, k);
  x *= std::sqrt(target / energy);
  return x;
}

CMatrix precode(const CMatrix& x, const CMatrix& v) {
  if (v.cols() != x.rows() || v.rows() != v.cols()) {
    throw DimensionError("precode: V is " + std::to_string(v.rows()) + "x" +
                         std::to_string(v.cols()) + ", X has " + std::to_string(x.rows()) +
                         " rows");
  }
  return v * x;
}

CMatrix sample_noise(Rng& rng, int antennas, std::size_t k, double sigma_w2) {
  const double sd = std::sqrt(sigma_w2 / 2.0);
  CMatrix w(antennas, static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double re = rng.normal() * sd;
    const double im = rng.normal() * sd;
    w.data()[i] = C(re, im);
  }
  return w;
}

CMatrix apply_channel(const CMatrix& xp, const ChannelRealization& ch, Rng& rng) {
  if (xp.rows() != ch.h.cols()) {
    throw DimensionError("apply_channel: input has " + std::to_string(xp.rows()) +
                         " rows, channel is " + std::to_string(ch.h.rows()) + "x" +
                         std::to_string(ch.h.cols()));
  }
  CMatrix y = ch.h * xp;
  y += sample_noise(rng, ch.antennas, static_cast<std::size_t>(xp.cols()), ch.sigma_w2);
  return y;
}

CMatrix equalize(const CMatrix& y, const ChannelRealization& ch, double floor) {
  const RVector inv = pinv_diag<double>(ch.svd.singular, floor);
  CMatrix out = ch.svd.u.adjoint() * y;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) *= inv[i];
  return out;
}

Heatmap build_heatmap(const ChannelRealization& ch, std::size_t k, std::size_t l,
                      double floor) {
  const std::size_t m = static_cast<std::size_t>(ch.antennas);
  const std::size_t total = 2 * m * k;
  if (l == 0 || total % l != 0) {
    throw ConfigError("heatmap: 2Mk = " + std::to_string(total) +
                      " is not divisible by sequence length " + std::to_string(l));
  }
  // Row i of the concatenated M x 2k matrix holds 2k copies of p_i / 2, so
  // flat index j belongs to antenna j / 2k.
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
  for (std::size_t i = 0; i < m; ++i) {
    const double s = std::max(ch.svd.singular[static_cast<Eigen::Index>(i)], floor);
    const double half_power = 0.5 * ch.sigma_w2 / (s * s);
    flat.segment(static_cast<Eigen::Index>(i * 2 * k), static_cast<Eigen::Index>(2 * k))
        .setConstant(half_power);
  }
  Heatmap hm;
  hm.values = nn::ConstMatrixMap(flat.data(), static_cast<Eigen::Index>(l),
                                 static_cast<Eigen::Index>(total / l));
  return hm;
}

Heatmap raw_noise_heatmap(double sigma_w2, int antennas, std::size_t k, std::size_t l) {
  const std::size_t total = 2 * static_cast<std::size_t>(antennas) * k;
  if (l == 0 || total % l != 0) {
    throw ConfigError("heatmap: 2Mk = " + std::to_string(total) +
                      " is not divisible by sequence length " + std::to_string(l));
  }
  Heatmap hm;
  hm.values = nn::RowMatrix::Constant(static_cast<Eigen::Index>(l),
                                      static_cast<Eigen::Index>(total / l), 0.5 * sigma_w2);
  return hm;
}

nn::Tensor transmit(const nn::Tensor& symbols, const ChannelRealization& ch, SvdMode mode,
                    Rng& rng, double floor) {
  const std::size_t k = symbol_count(symbols, ch.antennas);
  const auto& packed = symbols.values();
  const CMatrix x = unpack_symbols({packed.data(), static_cast<std::size_t>(packed.size())},
                                   ch.antennas, k);

  CMatrix received;
  CMatrix effective;
  if (mode == SvdMode::with_svd) {
    received = equalize(apply_channel(precode(x, ch.svd.v), ch, rng), ch, floor);
    const RVector inv = pinv_diag<double>(ch.svd.singular, floor);
    effective = ch.svd.u.adjoint() * ch.h * ch.svd.v;
    for (Eigen::Index i = 0; i < effective.rows(); ++i) effective.row(i) *= inv[i];
  } else {
    received = apply_channel(x, ch, rng);
    effective = ch.h;
  }

  const int antennas = ch.antennas;
  return nn::Tensor::from_op(
      symbols.shape(), pack_symbols(received), {symbols},
      [antennas, k, adj = CMatrix(effective.adjoint())](nn::detail::Node& self) {
        const CMatrix g = unpack_symbols(
            {self.grad.data(), static_cast<std::size_t>(self.grad.size())}, antennas, k);
        self.parents[0]->grad_buffer() += pack_symbols(adj * g);
      });
}

}  // namespace vitmimo
