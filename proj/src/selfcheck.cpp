#include "vitmimo/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vitmimo/baseline.hpp"
#include "vitmimo/channel.hpp"
#include "vitmimo/errors.hpp"
#include "vitmimo/gradcheck.hpp"
#include "vitmimo/harness.hpp"
#include "vitmimo/ops.hpp"
#include "vitmimo/vitcodec.hpp"

namespace vitmimo {

using nn::Tensor;

namespace {

// Decoder loss of the seeded toy model below, recorded from the first
// verified build.
constexpr double kGoldenToyLoss = 4.491292693846141;

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string num17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ViTConfig toy_model(Fault fault) {
  ViTConfig cfg;
  cfg.image_h = 8;
  cfg.image_w = 8;
  cfg.grid = 4;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.symbols = 16;
  if (fault == Fault::attn_scale) cfg.attn_scale = AttentionScale::head;
  return cfg;
}

Tensor random_tensor(Rng& rng, nn::Shape shape, bool grad = true) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(nn::shape_size(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v), grad);
}

Tensor random_image(Rng& rng, std::size_t h, std::size_t w) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(h * w * 3));
  for (auto& x : v) x = rng.uniform();
  return Tensor({h, w, 3}, std::move(v));
}

CheckResult bounded(std::string name, double observed, double limit) {
  return {std::move(name), observed <= limit, num(observed), "<= " + num(limit)};
}

CheckResult check_op_gradients() {
  Rng rng(101);
  Tensor a = random_tensor(rng, {4, 5}), b = random_tensor(rng, {5, 3});
  Tensor bias = random_tensor(rng, {3}), gain = random_tensor(rng, {3});
  Tensor c = random_tensor(rng, {4, 2});
  const Tensor target = random_tensor(rng, {4, 5}, false);
  double worst = 0.0;
  auto run = [&](std::function<Tensor()> loss, std::vector<Tensor> params) {
    worst = std::max(worst, nn::grad_check(loss, params, {.h = 1e-5}));
  };
  run([&] { return nn::sum(nn::square(nn::matmul(a, b))); }, {a, b});
  run([&] { return nn::sum(nn::square(nn::gelu(a))); }, {a});
  run([&] {
    return nn::sum(nn::square(nn::layer_norm(nn::matmul(a, b), gain, bias)));
  }, {a, b, gain, bias});
  run([&] { return nn::sum(nn::square(nn::softmax_rows(a) - target)); }, {a});
  run([&] { return nn::sum(nn::square(nn::add_row_bias(nn::matmul(a, b), bias))); }, {a, b, bias});
  run([&] { return nn::sum(nn::square(nn::concat_cols(nn::matmul(a, b), c))); }, {a, b, c});
  run([&] { return nn::sum(nn::square(nn::scale_to_norm(a, 3.0) - target)); }, {a});
  return bounded("grad.ops", worst, 1e-6);
}

CheckResult check_chain_gradient(Fault fault) {
  const ViTConfig cfg = toy_model(fault);
  Rng rng(102);
  const ViTParams p = ViTParams::init(cfg, rng);
  const auto ch = sample_realization(rng, 2, 0.0);
  const auto heat = build_heatmap(ch, cfg.symbols, cfg.sequence_length());
  const Tensor img = random_image(rng, 8, 8);
  auto loss = [&] {
    Rng noise(7);
    const auto enc = encode(patchify(img, cfg.grid), heat, p);
    const Tensor out = decode(transmit(enc.symbols, ch, SvdMode::with_svd, noise), heat, p);
    return nn::mean(nn::square(out - img));
  };
  std::vector<Tensor> params = p.tensors();
  const double err =
      nn::grad_check(loss, params, {.h = 1e-4, .max_coords_per_param = 3, .seed = 5});
  return bounded("grad.chain", err, 1e-3);
}

CheckResult check_svd() {
  Rng rng(103);
  double worst = 0.0;
  bool ordered = true;
  for (int i = 0; i < 1000; ++i) {
    const CMatrix h = sample_channel<double>(rng, 2, 1.0);
    const SvdFactors f = svd<double>(h);
    worst = std::max({worst, (reconstruct(f) - h).cwiseAbs().maxCoeff(), unitarity_error(f.u),
                      unitarity_error(f.v)});
    ordered = ordered && f.singular[0] >= f.singular[1] && f.singular[1] >= 0.0;
  }
  CheckResult r = bounded("svd.round_trip", worst, 1e-10);
  r.passed = r.passed && ordered;
  if (!ordered) r.observed += " (singular values out of order)";
  return r;
}

CheckResult check_channel_round_trip() {
  Rng rng(104);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto ch = sample_realization(rng, 2, 0.0);
    CMatrix x(2, 16);
    for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = {rng.normal(), rng.normal()};
    const CMatrix out = equalize(apply_channel(precode(x, ch.svd.v), ch, rng), ch);
    worst = std::max(worst, (out - x).cwiseAbs().maxCoeff());
  }
  return bounded("channel.round_trip", worst, 1e-8);
}

CheckResult check_power(Fault fault) {
  const ViTConfig cfg = toy_model(fault);
  Rng rng(105);
  const ViTParams p = ViTParams::init(cfg, rng);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto ch = sample_realization(rng, 2, snr_to_sigma2(rng.uniform(0, 20), 2));
    const CMatrix x = encoder_forward(patchify(random_image(rng, 8, 8), cfg.grid),
                                      build_heatmap(ch, cfg.symbols, cfg.sequence_length()), p);
    const double power = x.cwiseAbs2().sum() / static_cast<double>(x.size());
    worst = std::max(worst, std::abs(power - cfg.power));
  }
  return bounded("channel.power", worst, 1e-6);
}

CheckResult check_heatmap() {
  Rng rng(106);
  const std::size_t k = 50000;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto ch = sample_realization(rng, 2, 0.5);
    const CMatrix out = equalize(apply_channel(CMatrix::Zero(2, k), ch, rng), ch);
    const Heatmap heat = build_heatmap(ch, k, 1000);
    for (Eigen::Index row = 0; row < 2; ++row) {
      const double measured = out.row(row).cwiseAbs2().sum() / (2.0 * k);
      const double predicted = heat.values(row == 0 ? 0 : heat.values.rows() - 1, 0);
      worst = std::max(worst, std::abs(measured / predicted - 1.0));
    }
  }
  return bounded("heatmap.variance", worst, 0.02);
}

double grid_capacity(double s1, double s2, double sigma2, double power) {
  double best = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double p1 = power * i / 10000.0;
    best = std::max(best, std::log2(1 + p1 * s1 * s1 / sigma2) +
                              std::log2(1 + (power - p1) * s2 * s2 / sigma2));
  }
  return best;
}

CheckResult check_waterfill_oracle() {
  Rng rng(107);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto ch = sample_realization(rng, 2, snr_to_sigma2(rng.uniform(-5, 25), 2));
    const auto& s = ch.svd.singular;
    const double c = capacity(s, waterfill(s, ch.sigma_w2, 2.0), ch.sigma_w2);
    worst = std::max(worst, grid_capacity(s[0], s[1], ch.sigma_w2, 2.0) - c);
  }
  return bounded("waterfill.oracle_gap", worst, 1e-3);
}

CheckResult check_waterfill_kkt() {
  Rng rng(108);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto ch = sample_realization(rng, 2, snr_to_sigma2(rng.uniform(-5, 25), 2));
    const auto& s = ch.svd.singular;
    const auto alloc = waterfill(s, ch.sigma_w2, 2.0);
    const RVector p = alloc.powers();
    worst = std::max(worst, std::abs(p.sum() - 2.0));
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      const double floor = ch.sigma_w2 / (s[j] * s[j]);
      if (p[j] > 0) {
        worst = std::max(worst, std::abs(p[j] + floor - alloc.water_level));
      } else {
        worst = std::max(worst, alloc.water_level - floor);
      }
    }
  }
  return bounded("waterfill.kkt", worst, 1e-9);
}

CheckResult check_patch_shape() {
  ViTConfig cfg;  // 32 x 32, p = 8
  Rng rng(109);
  const Tensor s = patchify(random_image(rng, 32, 32), cfg.grid);
  const bool ok = s.rows() == 64 && s.cols() == 48 && cfg.patch_dim() == 48;
  return {"shape.patches", ok, std::to_string(s.rows()) + "x" + std::to_string(s.cols()), "64x48"};
}

CheckResult check_symbol_counts() {
  std::string seen;
  bool ok = true;
  const double ratios[] = {1.0 / 24, 1.0 / 12, 1.0 / 6};
  const std::size_t expect[] = {128, 256, 512};
  for (int i = 0; i < 3; ++i) {
    const std::size_t k = symbols_for_ratio(ratios[i], 32, 32);
    seen += (i ? "," : "") + std::to_string(k);
    ok = ok && k == expect[i];
  }
  return {"shape.symbols", ok, "k=" + seen, "k=128,256,512"};
}

CheckResult check_latent_widths(Fault fault) {
  std::string seen;
  bool ok = true;
  const std::size_t ks[] = {128, 256, 512};
  const std::size_t widths[] = {8, 16, 32};
  Rng rng(110);
  const Tensor s = patchify(random_image(rng, 32, 32), 8);
  for (int i = 0; i < 3; ++i) {
    ViTConfig cfg;
    cfg.symbols = ks[i];
    if (fault == Fault::attn_scale) cfg.attn_scale = AttentionScale::head;
    const ViTParams p = ViTParams::init(cfg, rng);
    const auto ch = sample_realization(rng, 2, 0.2);
    nn::NoGradGuard guard;
    const auto enc = encode(s, build_heatmap(ch, cfg.symbols, cfg.sequence_length()), p);
    seen += (i ? "," : "") + std::to_string(enc.latent.rows()) + "x" +
            std::to_string(enc.latent.cols());
    ok = ok && enc.latent.rows() == 64 && enc.latent.cols() == widths[i] &&
         cfg.latent_width() == widths[i];
  }
  return {"shape.latent", ok, seen, "64x8,64x16,64x32"};
}

CheckResult check_psnr() {
  const Tensor a = Tensor::zeros({4, 4, 3});
  const double v = psnr(a, Tensor::filled({4, 4, 3}, 0.1));
  return {"psnr.reference", std::abs(v - 20.0) < 1e-9, num(v), "20"};
}

CheckResult check_separation() {
  Rng rng(111);
  QuantizationCodec codec;
  const Tensor img = random_image(rng, 8, 8);
  bool ok = true;
  double prev = -1.0;
  std::string seen;
  for (double mu : {1.0, 5.0, 10.0, 15.0, 19.0}) {
    Rng draw(112);
    const auto ch = sample_realization(draw, 2, snr_to_sigma2(mu, 2));
    const auto r = separation_transmit(img, ch, 16, codec);
    const double v = psnr(img, r.image);
    ok = ok && v >= prev && r.bytes_used <= r.byte_budget;
    prev = v;
    seen += (seen.empty() ? "" : ",") + num(v);
  }
  return {"separation.monotone", ok, seen, "non-decreasing, within budget"};
}

double regression_value(Fault fault) {
  const ViTConfig cfg = toy_model(fault);
  Rng rng(2024);
  const ViTParams p = ViTParams::init(cfg, rng);
  const Tensor img = random_image(rng, 8, 8);
  const auto ch = sample_realization(rng, 2, snr_to_sigma2(10.0, 2));
  const auto heat = build_heatmap(ch, cfg.symbols, cfg.sequence_length());
  nn::NoGradGuard guard;
  const auto enc = encode(patchify(img, cfg.grid), heat, p);
  const Tensor out = decode(transmit(enc.symbols, ch, SvdMode::with_svd, rng), heat, p);
  return nn::mean(nn::square(out - img)).item();
}

CheckResult check_regression(Fault fault) {
  const double v = regression_value(fault);
  const bool ok = std::abs(v - kGoldenToyLoss) <= 1e-9 * std::abs(kGoldenToyLoss);
  return {"regression.toy_loss", ok, num17(v), num17(kGoldenToyLoss)};
}

}  // namespace

Fault parse_fault(const std::string& text) {
  if (text == "none") return Fault::none;
  if (text == "attn-scale") return Fault::attn_scale;
  throw ConfigError("unknown fault '" + text + "' (none, attn-scale)");
}

std::vector<CheckResult> run_selfcheck(Fault fault,
                                       const std::function<void(const CheckResult&)>& on_result) {
  const std::vector<std::function<CheckResult()>> checks = {
      [] { return check_op_gradients(); },
      [&] { return check_chain_gradient(fault); },
      [] { return check_svd(); },
      [] { return check_channel_round_trip(); },
      [&] { return check_power(fault); },
      [] { return check_heatmap(); },
      [] { return check_waterfill_oracle(); },
      [] { return check_waterfill_kkt(); },
      [] { return check_patch_shape(); },
      [] { return check_symbol_counts(); },
      [&] { return check_latent_widths(fault); },
      [] { return check_psnr(); },
      [] { return check_separation(); },
      [&] { return check_regression(fault); },
  };
  std::vector<CheckResult> results;
  for (const auto& check : checks) {
    CheckResult r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {"(check " + std::to_string(results.size() + 1) + ")", false, e.what(), "no exception"};
    }
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace vitmimo
