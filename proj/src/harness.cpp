#include "vitmimo/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "vitmimo/config.hpp"
#include "vitmimo/errors.hpp"
#include "vitmimo/ops.hpp"
#include "vitmimo/trainer.hpp"

namespace vitmimo {

namespace fs = std::filesystem;
using nn::Tensor;

double psnr_from_mse(double mse) {
  if (!(mse >= 0.0)) throw NumericError("psnr: MSE is negative or NaN");
  if (mse == 0.0) return kSaturatedPsnr;
  return std::min(kSaturatedPsnr, -10.0 * std::log10(mse));
}

double psnr(const Tensor& s, const Tensor& s_hat) {
  if (s.shape() != s_hat.shape()) {
    throw DimensionError("psnr: " + nn::shape_string(s.shape()) + " vs " +
                         nn::shape_string(s_hat.shape()));
  }
  return psnr_from_mse((s.values() - s_hat.values()).squaredNorm() /
                       static_cast<double>(s.size()));
}

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::vit: return "vit";
    case Scheme::vit_universal: return "vit-universal";
    case Scheme::vit_universal_no_svd: return "vit-universal-no-svd";
    case Scheme::separation: return "separation";
  }
  return "?";
}

Scheme parse_scheme(const std::string& text) {
  for (auto s : {Scheme::vit, Scheme::vit_universal, Scheme::vit_universal_no_svd,
                 Scheme::separation}) {
    if (text == to_string(s)) return s;
  }
  throw ConfigError("unknown scheme '" + text +
                    "' (vit, vit-universal, vit-universal-no-svd, separation)");
}

SvdMode svd_mode_of(Scheme scheme) {
  return scheme == Scheme::vit_universal_no_svd ? SvdMode::without_svd : SvdMode::with_svd;
}

namespace {

void summarize(EvalRecord& rec, const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  rec.psnr_mean = mean;
  rec.psnr_std = std::sqrt(var / static_cast<double>(values.size()));
  for (double v : values) rec.saturated = rec.saturated || v >= kSaturatedPsnr;
}

void check_options(const ImageSet& data, const EvalOptions& opts) {
  if (data.size() == 0) throw ConfigError("evaluation set is empty");
  if (opts.draws_per_image == 0) throw ConfigError("draws_per_image must be >= 1");
}

}  // namespace

EvalRecord evaluate(const ViTParams& params, const ImageSet& data, double snr_db, SvdMode mode,
                    const EvalOptions& opts, const std::string& scheme) {
  check_options(data, opts);
  const ViTConfig& m = params.config;
  if (data.height != m.image_h || data.width != m.image_w) {
    throw ConfigError("evaluation images are " + std::to_string(data.height) + "x" +
                      std::to_string(data.width) + ", the model expects " +
                      std::to_string(m.image_h) + "x" + std::to_string(m.image_w));
  }
  nn::NoGradGuard guard;
  const double sigma2 = snr_to_sigma2(snr_db, m.antennas);
  const std::size_t l = m.sequence_length();
  std::vector<double> values;
  values.reserve(data.size() * opts.draws_per_image);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = Rng::stream(opts.seed, i);
    const Tensor& img = data.images[i];
    const Tensor patches = patchify(img, m.grid);
    for (std::size_t d = 0; d < opts.draws_per_image; ++d) {
      const ChannelRealization ch = sample_realization(rng, m.antennas, sigma2);
      const Heatmap heat = mode == SvdMode::with_svd
                               ? build_heatmap(ch, m.symbols, l, opts.floor)
                               : raw_noise_heatmap(sigma2, m.antennas, m.symbols, l);
      const EncoderOutput enc = encode(patches, heat, params);
      const Tensor rx = transmit(enc.symbols, ch, mode, rng, opts.floor);
      values.push_back(psnr(img, clamp_unit(decode(rx, heat, params))));
    }
  }
  EvalRecord rec;
  rec.scheme = scheme;
  rec.ratio = static_cast<double>(m.symbols) / static_cast<double>(m.source_symbols());
  rec.snr_db = snr_db;
  rec.n_images = data.size();
  rec.n_draws = opts.draws_per_image;
  rec.seed = opts.seed;
  summarize(rec, values);
  return rec;
}

EvalRecord evaluate_separation(const ImageSet& data, double snr_db, std::size_t k, int antennas,
                               CodecAdapter& codec, const EvalOptions& opts, double ps) {
  check_options(data, opts);
  const double sigma2 = snr_to_sigma2(snr_db, antennas);
  std::vector<double> values;
  values.reserve(data.size() * opts.draws_per_image);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = Rng::stream(opts.seed, i);
    for (std::size_t d = 0; d < opts.draws_per_image; ++d) {
      const ChannelRealization ch = sample_realization(rng, antennas, sigma2);
      const SeparationResult r = separation_transmit(data.images[i], ch, k, codec, ps);
      values.push_back(psnr(data.images[i], r.image));
    }
  }
  EvalRecord rec;
  rec.scheme = to_string(Scheme::separation);
  rec.ratio = static_cast<double>(k) / static_cast<double>(3 * data.height * data.width);
  rec.snr_db = snr_db;
  rec.n_images = data.size();
  rec.n_draws = opts.draws_per_image;
  rec.seed = opts.seed;
  summarize(rec, values);
  return rec;
}

SweepResult run_sweep(const SweepGrid& grid, const ImageSet& data, const EvalOptions& opts,
                      const CheckpointLocator& locate, CodecAdapter* codec, int antennas) {
  if (grid.schemes.empty() || grid.ratios.empty() || grid.snrs.empty()) {
    throw ConfigError("sweep grid is empty (needs at least one scheme, ratio and SNR)");
  }
  SweepResult out;
  std::map<std::string, Checkpoint> cache;
  for (Scheme scheme : grid.schemes) {
    for (double ratio : grid.ratios) {
      const std::size_t k = symbols_for_ratio(ratio, data.height, data.width);
      for (double snr : grid.snrs) {
        const std::string cell = to_string(scheme) + " R=" + format_double(ratio) +
                                 " snr=" + format_double(snr);
        if (scheme == Scheme::separation) {
          if (codec == nullptr) {
            out.missing.push_back(cell + ": no codec configured");
            continue;
          }
          out.records.push_back(evaluate_separation(data, snr, k, antennas, *codec, opts));
          continue;
        }
        const fs::path path = locate ? locate(scheme, ratio, snr) : fs::path{};
        if (path.empty() || !fs::exists(path)) {
          out.missing.push_back(cell + ": missing checkpoint " + path.string());
          continue;
        }
        auto it = cache.find(path.string());
        if (it == cache.end()) it = cache.emplace(path.string(), load_checkpoint(path)).first;
        const ViTParams& params = it->second.params;
        if (params.config.symbols != k) {
          out.missing.push_back(cell + ": checkpoint " + path.string() + " has k = " +
                                std::to_string(params.config.symbols) + ", expected " +
                                std::to_string(k));
          continue;
        }
        if (it->second.train.svd_mode != svd_mode_of(scheme)) {
          out.missing.push_back(cell + ": checkpoint " + path.string() + " was trained with svd = " +
                                to_string(it->second.train.svd_mode));
          continue;
        }
        EvalOptions cell_opts = opts;
        cell_opts.floor = it->second.train.floor;
        out.records.push_back(
            evaluate(params, data, snr, svd_mode_of(scheme), cell_opts, to_string(scheme)));
      }
    }
  }
  return out;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::ordered_json record_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["scheme"] = r.scheme;
  j["R"] = r.ratio;
  j["snr_test_db"] = r.snr_db;
  j["psnr_mean_db"] = r.psnr_mean;
  j["psnr_std_db"] = r.psnr_std;
  j["n_images"] = r.n_images;
  j["n_draws"] = r.n_draws;
  j["seed"] = r.seed;
  j["saturated"] = r.saturated;
  return j;
}

}  // namespace

std::string records_csv(const std::vector<EvalRecord>& records) {
  std::string out = "scheme,R,snr_test_db,psnr_mean_db,psnr_std_db,n_images,n_draws,seed\n";
  for (const auto& r : records) {
    out += r.scheme + "," + format_double(r.ratio) + "," + format_double(r.snr_db) + "," +
           fixed6(r.psnr_mean) + "," + fixed6(r.psnr_std) + "," + std::to_string(r.n_images) +
           "," + std::to_string(r.n_draws) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

std::string records_json(const std::vector<EvalRecord>& records) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) arr.push_back(record_json(r));
  return arr.dump(2) + "\n";
}

std::string series_json(const std::vector<EvalRecord>& records) {
  nlohmann::ordered_json series = nlohmann::ordered_json::object();
  for (const auto& r : records) {
    nlohmann::ordered_json point;
    point["R"] = r.ratio;
    point["snr_test_db"] = r.snr_db;
    point["psnr_mean_db"] = r.psnr_mean;
    point["psnr_std_db"] = r.psnr_std;
    series[r.scheme].push_back(point);
  }
  nlohmann::ordered_json doc;
  doc["series"] = series;
  return doc.dump(2) + "\n";
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << text;
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace vitmimo
