#include "vitmimo/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "vitmimo/errors.hpp"
#include "vitmimo/ops.hpp"

namespace vitmimo {

namespace fs = std::filesystem;
using nn::Tensor;

SnrStrategy SnrStrategy::fixed(double mu_db) { return {Kind::fixed, mu_db, mu_db}; }

SnrStrategy SnrStrategy::uniform(double lo_db, double hi_db) {
  if (!(lo_db < hi_db)) {
    throw ConfigError("uniform SNR range needs lo < hi, got " + format_double(lo_db) + ":" +
                      format_double(hi_db));
  }
  return {Kind::uniform, lo_db, hi_db};
}

SnrStrategy SnrStrategy::noiseless() { return {Kind::noiseless, INFINITY, INFINITY}; }

SnrStrategy SnrStrategy::parse(const std::string& text) {
  if (text == "noiseless") return noiseless();
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() == 2 && parts[0] == "fixed") return fixed(parse_double(parts[1]));
  if (parts.size() == 3 && parts[0] == "uniform") {
    return uniform(parse_double(parts[1]), parse_double(parts[2]));
  }
  throw ConfigError("SNR strategy '" + text +
                    "' is not fixed:<dB>, uniform:<lo>:<hi> or noiseless");
}

std::string SnrStrategy::to_string() const {
  switch (kind) {
    case Kind::fixed: return "fixed:" + format_double(lo);
    case Kind::uniform: return "uniform:" + format_double(lo) + ":" + format_double(hi);
    case Kind::noiseless: return "noiseless";
  }
  return "?";
}

double sample_train_snr(const SnrStrategy& strategy, Rng& rng) {
  switch (strategy.kind) {
    case SnrStrategy::Kind::fixed: return strategy.lo;
    case SnrStrategy::Kind::uniform: return rng.uniform(strategy.lo, strategy.hi);
    case SnrStrategy::Kind::noiseless: return INFINITY;
  }
  return strategy.lo;
}

std::string to_string(SvdMode mode) { return mode == SvdMode::with_svd ? "with" : "without"; }

SvdMode parse_svd_mode(const std::string& text) {
  if (text == "with") return SvdMode::with_svd;
  if (text == "without") return SvdMode::without_svd;
  throw ConfigError("svd mode '" + text + "' is not 'with' or 'without'");
}

void TrainConfig::validate(const ViTConfig& model) const {
  model.validate();
  if (!(ratio > 0.0)) throw ConfigError("train.ratio must be positive");
  const std::size_t k = symbols_for_ratio(ratio, model.image_h, model.image_w);
  if (k != model.symbols) {
    throw ConfigError("train.ratio " + format_double(ratio) + " gives k = " + std::to_string(k) +
                      " but the model has k = " + std::to_string(model.symbols));
  }
  if (snr.kind == SnrStrategy::Kind::uniform && !(snr.lo < snr.hi)) {
    throw ConfigError("train.snr: uniform range needs lo < hi");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and >= 0");
  if (!(floor > 0.0)) throw ConfigError("train.floor must be positive");
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t TrainConfig::digest() const {
  const std::string canon = "ratio=" + format_double(ratio) + ";snr=" + snr.to_string() +
                            ";batch=" + std::to_string(batch_size) + ";lr=" + format_double(lr) +
                            ";seed=" + std::to_string(seed) + ";svd=" + to_string(svd_mode) +
                            ";floor=" + format_double(floor);
  return fnv1a(canon);
}

ViTConfig model_config_from(const KeyValueConfig& kv) {
  ViTConfig m;
  m.image_h = kv.get_u64("model.image_h", m.image_h);
  m.image_w = kv.get_u64("model.image_w", m.image_w);
  m.grid = kv.get_u64("model.grid", m.grid);
  m.hidden = kv.get_u64("model.hidden", m.hidden);
  m.layers = kv.get_u64("model.layers", m.layers);
  m.heads = kv.get_u64("model.heads", m.heads);
  m.mlp_ratio = kv.get_u64("model.mlp_ratio", m.mlp_ratio);
  m.antennas = static_cast<int>(kv.get_u64("model.antennas", static_cast<std::uint64_t>(m.antennas)));
  const std::string scale = kv.get_string("model.attn_scale", "d");
  if (scale == "d") {
    m.attn_scale = AttentionScale::hidden;
  } else if (scale == "d_s") {
    m.attn_scale = AttentionScale::head;
  } else {
    kv.fail("model.attn_scale", "'" + scale + "' is not 'd' (hidden width) or 'd_s' (head width)");
  }
  m.ln_eps = kv.get_double("model.ln_eps", m.ln_eps);
  m.power = kv.get_double("model.power", m.power);
  if (kv.has("model.symbols")) {
    m.symbols = kv.get_u64("model.symbols", m.symbols);
  } else {
    double ratio = TrainConfig{}.ratio;
    if (kv.has("train.ratio")) {
      try {
        ratio = parse_ratio(kv.get_string("train.ratio", ""));
      } catch (const ConfigError& e) {
        kv.fail("train.ratio", e.what());
      }
    }
    m.symbols = symbols_for_ratio(ratio, m.image_h, m.image_w);
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig t;
  auto guarded = [&](const std::string& key, auto&& fn) {
    if (!kv.has(key)) return;
    try {
      fn(kv.get_string(key, ""));
    } catch (const ConfigError& e) {
      kv.fail(key, e.what());
    }
  };
  guarded("train.ratio", [&](const std::string& v) { t.ratio = parse_ratio(v); });
  guarded("train.snr", [&](const std::string& v) { t.snr = SnrStrategy::parse(v); });
  guarded("train.svd", [&](const std::string& v) { t.svd_mode = parse_svd_mode(v); });
  t.batch_size = kv.get_u64("train.batch_size", t.batch_size);
  t.lr = kv.get_double("train.lr", t.lr);
  t.steps = kv.get_u64("train.steps", t.steps);
  t.seed = kv.get_u64("train.seed", t.seed);
  t.eval_every = kv.get_u64("train.eval_every", t.eval_every);
  t.checkpoint_path = kv.get_string("train.checkpoint", t.checkpoint_path);
  t.floor = kv.get_double("train.floor", t.floor);
  return t;
}

void describe(const ViTConfig& m, KeyValueConfig& out) {
  out.set("model.image_h", std::to_string(m.image_h), "resolved");
  out.set("model.image_w", std::to_string(m.image_w), "resolved");
  out.set("model.grid", std::to_string(m.grid), "resolved");
  out.set("model.hidden", std::to_string(m.hidden), "resolved");
  out.set("model.layers", std::to_string(m.layers), "resolved");
  out.set("model.heads", std::to_string(m.heads), "resolved");
  out.set("model.mlp_ratio", std::to_string(m.mlp_ratio), "resolved");
  out.set("model.antennas", std::to_string(m.antennas), "resolved");
  out.set("model.symbols", std::to_string(m.symbols), "resolved");
  out.set("model.attn_scale", m.attn_scale == AttentionScale::hidden ? "d" : "d_s",
          "resolved");
  out.set("model.ln_eps", format_double(m.ln_eps), "resolved");
  out.set("model.power", format_double(m.power), "resolved");
}

void describe(const TrainConfig& t, KeyValueConfig& out) {
  out.set("train.ratio", format_double(t.ratio), "resolved");
  out.set("train.snr", t.snr.to_string(), "resolved");
  out.set("train.svd", to_string(t.svd_mode), "resolved");
  out.set("train.batch_size", std::to_string(t.batch_size), "resolved");
  out.set("train.lr", format_double(t.lr), "resolved");
  out.set("train.steps", std::to_string(t.steps), "resolved");
  out.set("train.seed", std::to_string(t.seed), "resolved");
  out.set("train.eval_every", std::to_string(t.eval_every), "resolved");
  out.set("train.checkpoint", t.checkpoint_path, "resolved");
  out.set("train.floor", format_double(t.floor), "resolved");
}

Tensor mse_loss(const Tensor& s, const Tensor& s_hat) {
  if (s.shape() != s_hat.shape()) {
    throw DimensionError("mse_loss: " + nn::shape_string(s.shape()) + " vs " +
                         nn::shape_string(s_hat.shape()));
  }
  return nn::mean(nn::square(s_hat - s));
}

Tensor batch_loss(std::span<const Tensor> batch, const ViTParams& params, const TrainConfig& cfg,
                  Rng& rng) {
  if (batch.empty()) throw ConfigError("batch_loss: empty batch");
  const ViTConfig& m = params.config;
  const std::size_t l = m.sequence_length();
  Tensor total;
  for (const Tensor& img : batch) {
    const double mu = sample_train_snr(cfg.snr, rng);
    const double sigma2 = snr_to_sigma2(mu, m.antennas);
    const ChannelRealization ch = sample_realization(rng, m.antennas, sigma2);
    const Heatmap heat = cfg.svd_mode == SvdMode::with_svd
                             ? build_heatmap(ch, m.symbols, l, cfg.floor)
                             : raw_noise_heatmap(sigma2, m.antennas, m.symbols, l);
    const EncoderOutput enc = encode(patchify(img, m.grid), heat, params);
    const Tensor rx = transmit(enc.symbols, ch, cfg.svd_mode, rng, cfg.floor);
    const Tensor loss = mse_loss(img, decode(rx, heat, params));
    total = total.node() ? total + loss : loss;
  }
  return nn::scale(total, 1.0 / static_cast<double>(batch.size()));
}

double train_step(std::span<const Tensor> batch, ViTParams& params, nn::AdamState& opt,
                  const TrainConfig& cfg, Rng& rng) {
  std::vector<Tensor> tensors = params.tensors();
  for (auto& t : tensors) t.zero_grad();
  Tensor loss = batch_loss(batch, params, cfg, rng);
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("train_step: non-finite loss");
  loss.backward();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].has_grad() && !tensors[i].grad().allFinite()) {
      throw NumericError("train_step: non-finite gradient for " + params.named()[i].first);
    }
  }
  nn::adam_step(tensors, opt);
  for (auto& t : tensors) t.zero_grad();
  return value;
}

double dataset_loss(const ViTParams& params, const ImageSet& data, const TrainConfig& cfg,
                    std::uint64_t seed) {
  nn::NoGradGuard guard;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = Rng::stream(seed, i);
    total += batch_loss({&data.images[i], 1}, params, cfg, rng).item();
  }
  return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[8] = {'V', 'T', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeU8 = 1;

struct Array {
  std::string name;
  std::uint8_t dtype = kDtypeF64;
  std::vector<std::uint64_t> shape;
  Eigen::VectorXd f64;
  std::string bytes;
};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
  }
  void put_f64(double d) { put(std::bit_cast<std::uint64_t>(d)); }
  void put_raw(std::string_view s) { buf_.append(s); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string path) : data_(data), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string_view get_raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointCorruptError(path_ + ": truncated at byte " + std::to_string(pos_));
    }
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string path_;
};

Array f64_array(std::string name, const nn::Shape& shape, const Eigen::VectorXd& v) {
  Array a;
  a.name = std::move(name);
  a.shape.assign(shape.begin(), shape.end());
  a.f64 = v;
  return a;
}

Array text_array(std::string name, std::string text) {
  Array a;
  a.name = std::move(name);
  a.dtype = kDtypeU8;
  a.shape = {text.size()};
  a.bytes = std::move(text);
  return a;
}

Array scalar_array(std::string name, double v) {
  return f64_array(std::move(name), {1}, Eigen::VectorXd::Constant(1, v));
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  std::vector<Array> arrays;
  KeyValueConfig model_text, train_text;
  describe(ckpt.params.config, model_text);
  TrainConfig stored = ckpt.train;
  stored.checkpoint_path.clear();
  describe(stored, train_text);
  arrays.push_back(text_array("meta.model", model_text.to_text()));
  arrays.push_back(text_array("meta.train", train_text.to_text()));
  arrays.push_back(text_array("meta.rng", ckpt.rng_state));
  arrays.push_back(scalar_array("meta.step", static_cast<double>(ckpt.step)));
  arrays.push_back(scalar_array("adam.step", static_cast<double>(ckpt.adam.step_count)));
  Eigen::VectorXd hyper(4);
  hyper << ckpt.adam.lr, ckpt.adam.beta1, ckpt.adam.beta2, ckpt.adam.eps;
  arrays.push_back(f64_array("adam.hyper", {4}, hyper));
  const auto named = ckpt.params.named();
  const bool has_moments = ckpt.adam.m.size() == named.size();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    arrays.push_back(f64_array("param." + name, t.shape(), t.values()));
    if (has_moments) {
      arrays.push_back(f64_array("adam.m." + name, t.shape(), ckpt.adam.m[i]));
      arrays.push_back(f64_array("adam.v." + name, t.shape(), ckpt.adam.v[i]));
    }
  }

  Writer w;
  w.put_raw({kMagic, sizeof kMagic});
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ckpt.train.digest());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
  for (const Array& a : arrays) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.name.size()));
    w.put_raw(a.name);
    w.put<std::uint8_t>(a.dtype);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.put<std::uint64_t>(d);
    if (a.dtype == kDtypeF64) {
      for (double d : a.f64) w.put_f64(d);
    } else {
      w.put_raw(a.bytes);
    }
  }
  w.put<std::uint64_t>(fnv1a(w.buffer()));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("checkpoint not found: " + path.string());
  const std::string data{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  const std::string where = path.string();

  if (data.size() < sizeof kMagic + 4 + 8 + 4 + 8 ||
      std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointCorruptError(where + ": not a checkpoint (bad magic or too short)");
  }
  Reader header(std::string_view(data).substr(sizeof kMagic), where);
  const auto version = header.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError(where + ": version " + std::to_string(version) +
                                 ", this build reads version " +
                                 std::to_string(kCheckpointVersion));
  }
  const std::string_view body = std::string_view(data).substr(0, data.size() - 8);
  Reader tail(std::string_view(data).substr(data.size() - 8), where);
  if (tail.get<std::uint64_t>() != fnv1a(body)) {
    throw CheckpointCorruptError(where + ": checksum mismatch (truncated or modified)");
  }

  Reader r(body.substr(sizeof kMagic + 4), where);
  const auto digest = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Array> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    Array a;
    const auto name_len = r.get<std::uint32_t>();
    a.name = std::string(r.get_raw(name_len));
    a.dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointCorruptError(where + ": array " + a.name + " has rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.get<std::uint64_t>());
      n *= a.shape.back();
    }
    if (n > body.size()) throw CheckpointCorruptError(where + ": array " + a.name + " is oversized");
    if (a.dtype == kDtypeF64) {
      a.f64.resize(static_cast<Eigen::Index>(n));
      for (auto& v : a.f64) v = r.get_f64();
    } else if (a.dtype == kDtypeU8) {
      a.bytes = std::string(r.get_raw(n));
    } else {
      throw CheckpointCorruptError(where + ": array " + a.name + " has unknown dtype " +
                                   std::to_string(a.dtype));
    }
    const std::string key = a.name;
    if (!arrays.emplace(key, std::move(a)).second) {
      throw CheckpointCorruptError(where + ": duplicate array " + key);
    }
  }
  if (!r.done()) throw CheckpointCorruptError(where + ": trailing bytes after last array");

  auto need = [&](const std::string& name, std::uint8_t dtype) -> const Array& {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw CheckpointCorruptError(where + ": missing array " + name);
    if (it->second.dtype != dtype) throw CheckpointCorruptError(where + ": array " + name + " has the wrong dtype");
    return it->second;
  };

  Checkpoint ck;
  try {
    const auto model_kv = KeyValueConfig::parse(need("meta.model", kDtypeU8).bytes, where + "#model");
    const auto train_kv = KeyValueConfig::parse(need("meta.train", kDtypeU8).bytes, where + "#train");
    const ViTConfig model = model_config_from(model_kv);
    ck.train = train_config_from(train_kv);
    Rng dummy(0);
    ck.params = ViTParams::init(model, dummy);
  } catch (const ConfigError& e) {
    throw CheckpointCorruptError(where + ": stored configuration is invalid: " + e.what());
  }
  if (ck.train.digest() != digest) {
    throw CheckpointCorruptError(where + ": training configuration digest mismatch");
  }
  ck.rng_state = need("meta.rng", kDtypeU8).bytes;
  ck.step = static_cast<std::uint64_t>(need("meta.step", kDtypeF64).f64[0]);
  ck.adam.step_count = static_cast<std::uint64_t>(need("adam.step", kDtypeF64).f64[0]);
  const auto& hyper = need("adam.hyper", kDtypeF64).f64;
  if (hyper.size() != 4) throw CheckpointCorruptError(where + ": adam.hyper has the wrong size");
  ck.adam.lr = hyper[0];
  ck.adam.beta1 = hyper[1];
  ck.adam.beta2 = hyper[2];
  ck.adam.eps = hyper[3];

  auto matches = [](const Array& a, const nn::Shape& s) {
    return a.shape.size() == s.size() && std::equal(s.begin(), s.end(), a.shape.begin());
  };
  const bool has_moments = arrays.count("adam.m." + ck.params.named().front().first) != 0;
  for (auto& [name, t] : ck.params.named()) {
    const Array& a = need("param." + name, kDtypeF64);
    if (!matches(a, t.shape())) {
      throw CheckpointCorruptError(where + ": param." + name + " disagrees with the stored model");
    }
    t.mutable_values() = a.f64;
    if (has_moments) {
      ck.adam.m.push_back(need("adam.m." + name, kDtypeF64).f64);
      ck.adam.v.push_back(need("adam.v." + name, kDtypeF64).f64);
    } else {
      ck.adam.m.push_back(Eigen::VectorXd::Zero(t.size()));
      ck.adam.v.push_back(Eigen::VectorXd::Zero(t.size()));
    }
  }
  return ck;
}

Checkpoint load_checkpoint(const fs::path& path, const ViTConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  Rng dummy(0);
  const ViTParams want = ViTParams::init(expected, dummy);
  const auto have = ck.params.named();
  const auto need = want.named();
  for (std::size_t i = 0; i < std::max(have.size(), need.size()); ++i) {
    if (i >= have.size() || i >= need.size() || have[i].first != need[i].first ||
        have[i].second.shape() != need[i].second.shape()) {
      const std::string name = i < need.size() ? need[i].first : have[i].first;
      throw CheckpointShapeError(
          path.string() + ": array " + name + " is " +
          (i < have.size() ? nn::shape_string(have[i].second.shape()) : "absent") +
          " in the checkpoint but the configuration needs " +
          (i < need.size() ? nn::shape_string(need[i].second.shape()) : "no such array"));
    }
  }
  KeyValueConfig a, b;
  describe(ck.params.config, a);
  describe(expected, b);
  if (a.to_text() != b.to_text()) {
    throw CheckpointShapeError(path.string() + ": stored model configuration differs from the requested one");
  }
  return ck;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const ViTConfig& model, const TrainConfig& cfg)
    : cfg_(cfg), rng_(Rng::stream(cfg.seed, 1)) {
  cfg_.validate(model);
  Rng init = Rng::stream(cfg.seed, 0);
  params_ = ViTParams::init(model, init);
  const auto tensors = params_.tensors();
  adam_ = nn::AdamState::for_params(tensors, cfg.lr);
}

Trainer::Trainer(Checkpoint ckpt)
    : cfg_(std::move(ckpt.train)),
      params_(std::move(ckpt.params)),
      adam_(std::move(ckpt.adam)),
      step_(ckpt.step) {
  cfg_.validate(params_.config);
  rng_.set_state(ckpt.rng_state);
}

double Trainer::step(const ImageSet& data) {
  if (data.size() == 0) throw ConfigError("training set is empty");
  const std::string before = rng_.state();
  try {
    const std::size_t b = std::min(cfg_.batch_size, data.size());
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<Tensor> batch;
    batch.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
      batch.push_back(data.images[idx[i]]);
    }
    const double loss = train_step(batch, params_, adam_, cfg_, rng_);
    ++step_;
    return loss;
  } catch (const NumericError& e) {
    if (cfg_.checkpoint_path.empty()) throw;
    Checkpoint ck = checkpoint();
    ck.rng_state = before;
    const std::string abort_path = cfg_.checkpoint_path + ".abort";
    save_checkpoint(abort_path, ck);
    throw NumericError(std::string(e.what()) + " at step " + std::to_string(step_) +
                       "; batch state saved to " + abort_path);
  }
}

std::vector<double> Trainer::run(const ImageSet& data, std::uint64_t steps,
                                 const StepCallback& on_step) {
  std::vector<double> trace;
  trace.reserve(steps);
  for (std::uint64_t i = 0; i < steps; ++i) {
    trace.push_back(step(data));
    if (on_step) on_step(step_, trace.back());
  }
  return trace;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.train = cfg_;
  ck.params = params_.clone();
  ck.adam = adam_;
  ck.step = step_;
  ck.rng_state = rng_.state();
  return ck;
}

void Trainer::save(const fs::path& path) const { save_checkpoint(path, checkpoint()); }

}  // namespace vitmimo
