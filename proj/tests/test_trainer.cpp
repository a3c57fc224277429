#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "toy.hpp"
#include "vitmimo/errors.hpp"
#include "vitmimo/gradcheck.hpp"
#include "vitmimo/ops.hpp"
#include "vitmimo/trainer.hpp"

using namespace vitmimo;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

TrainConfig toy_train(std::uint64_t seed, SnrStrategy snr = SnrStrategy::noiseless()) {
  TrainConfig t;
  t.ratio = 1.0 / 12.0;
  t.snr = snr;
  t.batch_size = 4;
  t.lr = 1e-3;
  t.seed = seed;
  return t;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vitmimo_test_trainer";
  fs::create_directories(dir);
  return dir / name;
}

bool same_params(const ViTParams& a, const ViTParams& b) {
  const auto ta = a.tensors(), tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].values() != tb[i].values()) return false;
  }
  return ta.size() == tb.size();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << s;
}

}  // namespace

TEST_CASE("mse_loss: values and gradient") {
  const Tensor s = Tensor::zeros({2, 2, 3});
  CHECK(mse_loss(s, s).item() == 0.0);
  CHECK(mse_loss(s, Tensor::filled({2, 2, 3}, 0.1)).item() == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_THROWS_AS(mse_loss(s, Tensor::zeros({2, 3, 2})), DimensionError);

  Rng rng(1);
  const Tensor target = random_image(rng, 3, 3);
  Tensor est = random_image(rng, 3, 3);
  est.set_requires_grad(true);
  mse_loss(target, est).backward();
  const Eigen::VectorXd analytic = est.grad();
  const Eigen::VectorXd expected = 2.0 * (est.values() - target.values()) / 27.0;
  CHECK((analytic - expected).cwiseAbs().maxCoeff() < 1e-15);
  Tensor params[] = {est};
  CHECK(nn::grad_check([&] { return mse_loss(target, est); }, params) < 1e-6);
}

TEST_CASE("sample_train_snr: fixed, uniform statistics, bounds") {
  Rng rng(2);
  CHECK(sample_train_snr(SnrStrategy::fixed(5.0), rng) == 5.0);
  CHECK(std::isinf(sample_train_snr(SnrStrategy::noiseless(), rng)));
  const auto u = SnrStrategy::uniform(0.0, 22.0);
  double sum = 0.0, lo = 1e9, hi = -1e9;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = sample_train_snr(u, rng);
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(std::abs(sum / n - 11.0) < 0.2);
  CHECK(lo >= 0.0);
  CHECK(hi <= 22.0);
}

TEST_CASE("SnrStrategy::parse") {
  CHECK(SnrStrategy::parse("fixed:5").kind == SnrStrategy::Kind::fixed);
  CHECK(SnrStrategy::parse("fixed:5").lo == 5.0);
  const auto u = SnrStrategy::parse("uniform:0:22");
  CHECK(u.kind == SnrStrategy::Kind::uniform);
  CHECK(u.lo == 0.0);
  CHECK(u.hi == 22.0);
  CHECK(SnrStrategy::parse(u.to_string()).hi == 22.0);
  CHECK_THROWS_AS(SnrStrategy::parse("uniform:22:0"), ConfigError);
  CHECK_THROWS_AS(SnrStrategy::parse("uniform:5:5"), ConfigError);
  CHECK_THROWS_AS(SnrStrategy::parse("fixed"), ConfigError);
  CHECK_THROWS_AS(SnrStrategy::parse("fixed:abc"), ConfigError);
}

TEST_CASE("TrainConfig::validate") {
  ViTConfig m = toy_config();
  TrainConfig t = toy_train(0);
  CHECK_NOTHROW(t.validate(m));
  t.ratio = 1.0 / 24.0;
  CHECK_THROWS_AS(t.validate(m), ConfigError);
  t = toy_train(0);
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(m), ConfigError);
  t = toy_train(0);
  t.lr = -1.0;
  CHECK_THROWS_AS(t.validate(m), ConfigError);
}

TEST_CASE("config sections round trip through text") {
  ViTConfig m = toy_config(32);
  m.attn_scale = AttentionScale::head;
  TrainConfig t = toy_train(9, SnrStrategy::uniform(0, 22));
  t.ratio = 1.0 / 6.0;
  t.svd_mode = SvdMode::without_svd;
  KeyValueConfig kv;
  describe(m, kv);
  describe(t, kv);
  const auto back = KeyValueConfig::parse(kv.to_text());
  KeyValueConfig again;
  describe(model_config_from(back), again);
  describe(train_config_from(back), again);
  CHECK(again.to_text() == kv.to_text());
  CHECK(train_config_from(back).digest() == t.digest());
}

TEST_CASE("model config derives k from the bandwidth ratio") {
  auto kv = KeyValueConfig::parse("[model]\nimage_h = 32\nimage_w = 32\ngrid = 8\n[train]\nratio = 1/24\n");
  CHECK(model_config_from(kv).symbols == 128);
  kv.set("train.ratio", "1/12");
  CHECK(model_config_from(kv).symbols == 256);
  kv.set("train.ratio", "1/6");
  CHECK(model_config_from(kv).symbols == 512);
}

TEST_CASE("toy training at least halves the loss (3 seeds)") {
  const ImageSet data = synthetic_set(SyntheticKind::gradients, 64, 8, 8, 11);
  for (std::uint64_t seed : {1, 2, 3}) {
    Trainer tr(toy_config(), toy_train(seed));
    const double before = dataset_loss(tr.params(), data, tr.config(), 100);
    tr.run(data, 200);
    const double after = dataset_loss(tr.params(), data, tr.config(), 100);
    CHECK(after <= 0.5 * before);
  }
}

TEST_CASE("fixed seed gives bit-identical loss traces") {
  const ImageSet data = synthetic_set(SyntheticKind::checkers, 16, 8, 8, 12, 2);
  Trainer a(toy_config(), toy_train(4, SnrStrategy::uniform(0, 22)));
  Trainer b(toy_config(), toy_train(4, SnrStrategy::uniform(0, 22)));
  const auto ta = a.run(data, 8);
  const auto tb = b.run(data, 8);
  CHECK(ta == tb);
  CHECK(same_params(a.params(), b.params()));
  Trainer c(toy_config(), toy_train(5, SnrStrategy::uniform(0, 22)));
  CHECK(c.run(data, 8) != ta);
}

TEST_CASE("zero learning rate leaves parameters and the loss unchanged") {
  const ImageSet one = synthetic_set(SyntheticKind::gradients, 1, 8, 8, 13);
  TrainConfig cfg = toy_train(6);
  cfg.lr = 0.0;
  Trainer tr(toy_config(), cfg);
  const ViTParams start = tr.params().clone();
  const auto trace = tr.run(one, 6);
  CHECK(same_params(start, tr.params()));
  // Noiseless SVD link: the channel cancels up to rounding, so each step
  // sees the same single image through the same network.
  for (double v : trace) CHECK(v == doctest::Approx(trace.front()).epsilon(1e-9));
}

TEST_CASE("one step updates exactly the parameters with nonzero gradient") {
  const ImageSet data = synthetic_set(SyntheticKind::gradients, 4, 8, 8, 14);
  Trainer tr(toy_config(), toy_train(7, SnrStrategy::fixed(10)));
  // Zeroing head 0's rows of the output projection cuts that head off from
  // the loss: its W_q, W_k, W_v receive exactly zero gradient.
  auto& layer = tr.params().encoder.layers[0];
  const std::size_t ds = toy_config().head_dim();
  auto& w = layer.w_proj.mutable_values();
  const std::size_t d = toy_config().hidden;
  for (std::size_t r = 0; r < ds; ++r)
    for (std::size_t c = 0; c < d; ++c) w[static_cast<Eigen::Index>(r * d + c)] = 0.0;

  const ViTParams before = tr.params().clone();
  tr.step(data);
  const auto names = tr.params().named();
  const auto old = before.named();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const bool changed = names[i].second.values() != old[i].second.values();
    const std::string& n = names[i].first;
    const bool cut = n == "encoder.layer0.head0.w_q" || n == "encoder.layer0.head0.w_k" ||
                     n == "encoder.layer0.head0.w_v";
    INFO(n);
    CHECK(changed == !cut);
  }
}

TEST_CASE("checkpoint: round trip is bit-exact and resumes the same trace") {
  const ImageSet data = synthetic_set(SyntheticKind::gradients, 16, 8, 8, 15);
  const TrainConfig cfg = toy_train(8, SnrStrategy::uniform(0, 22));
  Trainer full(toy_config(), cfg);
  const auto full_trace = full.run(data, 10);

  Trainer first(toy_config(), cfg);
  auto trace = first.run(data, 5);
  const fs::path path = temp_path("resume.ckpt");
  first.save(path);

  Trainer resumed(load_checkpoint(path, toy_config()));
  CHECK(resumed.steps_done() == 5);
  CHECK(same_params(resumed.params(), first.params()));
  CHECK(resumed.rng() == first.rng());

  const auto heat = raw_noise_heatmap(0.5, 2, 16, 16);
  const Tensor s = patchify(data.images[0], 4);
  CHECK(encoder_forward(s, heat, resumed.params()) == encoder_forward(s, heat, first.params()));

  const auto rest = resumed.run(data, 5);
  trace.insert(trace.end(), rest.begin(), rest.end());
  CHECK(trace == full_trace);
  CHECK(same_params(resumed.params(), full.params()));
}

TEST_CASE("checkpoint: failures are distinct and leave no partial state") {
  Trainer tr(toy_config(), toy_train(9));
  const fs::path good = temp_path("good.ckpt");
  tr.save(good);
  const std::string bytes = slurp(good);

  const fs::path bad = temp_path("bad.ckpt");
  spit(bad, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointCorruptError);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  spit(bad, flipped);
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointCorruptError);

  spit(bad, "not a checkpoint at all, just some text");
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointCorruptError);

  std::string versioned = bytes;
  versioned[8] = 7;  // version field follows the 8-byte magic
  spit(bad, versioned);
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointVersionError);

  ViTConfig wider = toy_config();
  wider.hidden = 64;
  CHECK_THROWS_AS(load_checkpoint(good, wider), CheckpointShapeError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("absent.ckpt")), MissingArtifactError);

  Checkpoint target;
  try {
    spit(bad, bytes.substr(0, bytes.size() - 1));
    target = load_checkpoint(bad);
  } catch (const CheckpointError&) {
  }
  CHECK(target.params.encoder.layers.empty());
  CHECK(!target.params.encoder.w_in.node());
}

TEST_CASE("non-finite training aborts with a checkpoint of the offending batch") {
  const ImageSet data = synthetic_set(SyntheticKind::gradients, 4, 8, 8, 16);
  TrainConfig cfg = toy_train(10);
  cfg.checkpoint_path = temp_path("abort.ckpt").string();
  fs::remove(cfg.checkpoint_path + ".abort");
  Trainer tr(toy_config(), cfg);
  tr.run(data, 2);
  const std::string rng_before = tr.rng().state();
  tr.params().decoder.w_out.mutable_values()[0] = NAN;
  const ViTParams poisoned = tr.params().clone();
  CHECK_THROWS_AS(tr.step(data), NumericError);
  CHECK(tr.steps_done() == 2);
  const auto saved = load_checkpoint(cfg.checkpoint_path + ".abort");
  CHECK(saved.rng_state == rng_before);
  CHECK(saved.step == 2);
  // NaN != NaN, so compare the untouched tensors only.
  CHECK(saved.params.encoder.w_in.values() == poisoned.encoder.w_in.values());
}
