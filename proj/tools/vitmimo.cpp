// vitmimo: train, evaluate, sweep, baseline, ablate, selfcheck.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vitmimo/baseline.hpp"
#include "vitmimo/config.hpp"
#include "vitmimo/datasets.hpp"
#include "vitmimo/errors.hpp"
#include "vitmimo/harness.hpp"
#include "vitmimo/selfcheck.hpp"
#include "vitmimo/trainer.hpp"

#ifndef VITMIMO_VERSION
#define VITMIMO_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace vitmimo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitMissing = 4;

const std::vector<std::string> kKnownKeys = {
    "model.image_h", "model.image_w", "model.grid", "model.hidden", "model.layers",
    "model.heads", "model.mlp_ratio", "model.antennas", "model.symbols", "model.attn_scale",
    "model.ln_eps", "model.power",
    "train.ratio", "train.snr", "train.svd", "train.batch_size", "train.lr", "train.steps",
    "train.seed", "train.eval_every", "train.checkpoint", "train.floor",
    "data.source", "data.n", "data.seed", "data.cell", "data.manifest",
    "eval.source", "eval.n", "eval.seed", "eval.cell", "eval.manifest", "eval.draws",
    "eval.snr_test",
    "sweep.schemes", "sweep.ratios", "sweep.snrs", "sweep.checkpoint_template",
    "baseline.codec", "baseline.encode_command", "baseline.decode_command",
    "baseline.quality_min", "baseline.quality_max", "baseline.higher_is_better",
    "baseline.ratios", "baseline.snrs",
    "ablate.ratios", "ablate.snrs", "ablate.train",
};

struct Run {
  std::string command;
  std::vector<std::string> argv;
  fs::path out;
  KeyValueConfig kv;
  std::string started;
  std::vector<std::string> outputs;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("VITMIMO_OUT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

void write_manifest(const Run& run, int exit_code) {
  nlohmann::ordered_json j;
  j["command"] = run.command;
  j["argv"] = run.argv;
  j["version"] = VITMIMO_VERSION;
  j["deterministic"] = true;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  for (const auto& [key, entry] : run.kv.entries()) {
    config[key] = entry.value;
    if (key.ends_with(".seed")) seeds[key] = entry.value;
  }
  j["config"] = config;
  j["seeds"] = seeds;
  j["started_at"] = run.started;
  j["finished_at"] = utc_now();
  j["outputs"] = run.outputs;
  j["exit_code"] = exit_code;
  write_text_atomic(run.out / "manifest.json", j.dump(2) + "\n");
}

void emit(Run& run, const std::string& name, const std::string& text) {
  const fs::path p = run.out / name;
  write_text_atomic(p, text);
  run.outputs.push_back(p.string());
}

// ---------------------------------------------------------------------------
// Configuration

struct Overrides {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;  // section.key=value
  std::map<std::string, std::string> flags;  // key -> value from dedicated flags
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "Config file (sections with key = value lines)");
  cmd->add_option("--out", o.out, "Output directory (default: $VITMIMO_OUT or ./runs)");
  cmd->add_option("--set", o.sets, "Override any key: section.key=value (repeatable)");
}

void add_flag_option(CLI::App* cmd, Overrides& o, const std::string& flag, const std::string& key,
                     const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.flags[key] = v; }, help);
}

KeyValueConfig resolve(const Overrides& o) {
  KeyValueConfig kv = o.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config_path);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || s.find('.') > eq) {
      throw ConfigError("--set " + s + ": expected section.key=value");
    }
    kv.set(s.substr(0, eq), s.substr(eq + 1), "--set " + s.substr(0, eq));
  }
  for (const auto& [key, value] : o.flags) kv.set(key, value, "flag for " + key);
  kv.reject_unknown(kKnownKeys);

  kv.set_default("data.source", "synthetic:gradients");
  kv.set_default("data.n", "64");
  kv.set_default("data.seed", "1");
  kv.set_default("data.cell", "0");
  kv.set_default("data.manifest", "");
  kv.set_default("eval.source", "synthetic:gradients");
  kv.set_default("eval.n", "100");
  kv.set_default("eval.seed", "2");
  kv.set_default("eval.cell", "0");
  kv.set_default("eval.manifest", "");
  kv.set_default("eval.draws", "1");
  kv.set_default("eval.snr_test", "0, 10, 20");
  kv.set_default("sweep.schemes", "");
  kv.set_default("sweep.ratios", "");
  kv.set_default("sweep.snrs", "");
  kv.set_default("sweep.checkpoint_template", "{out}/{scheme}_R{R}.ckpt");
  kv.set_default("baseline.codec", "mock");
  kv.set_default("baseline.encode_command", "");
  kv.set_default("baseline.decode_command", "");
  kv.set_default("baseline.quality_min", "0");
  kv.set_default("baseline.quality_max", "51");
  kv.set_default("baseline.higher_is_better", "false");
  kv.set_default("baseline.ratios", "1/12");
  kv.set_default("baseline.snrs", "1, 5, 10, 15, 19");
  kv.set_default("ablate.ratios", "1/12");
  kv.set_default("ablate.snrs", "0, 10, 20");
  kv.set_default("ablate.train", "true");
  return kv;
}

// Model and training sections, validated and written back in canonical form.
std::pair<ViTConfig, TrainConfig> resolve_model(KeyValueConfig& kv) {
  const ViTConfig model = model_config_from(kv);
  const TrainConfig train = train_config_from(kv);
  train.validate(model);
  describe(model, kv);
  describe(train, kv);
  return {model, train};
}

std::vector<double> number_list(const KeyValueConfig& kv, const std::string& key, bool ratios) {
  std::vector<double> out;
  for (const auto& item : kv.get_list(key, {})) {
    try {
      out.push_back(ratios ? parse_ratio(item) : parse_double(item));
    } catch (const ConfigError& e) {
      kv.fail(key, e.what());
    }
  }
  return out;
}

ImageSet load_images(const KeyValueConfig& kv, const std::string& section, const ViTConfig& model) {
  const std::string source = kv.get_string(section + ".source", "");
  if (source.starts_with("synthetic:")) {
    SyntheticKind kind;
    try {
      kind = parse_synthetic_kind(source.substr(10));
    } catch (const ConfigError& e) {
      kv.fail(section + ".source", e.what());
    }
    const std::uint64_t n = kv.get_u64(section + ".n", 64);
    if (n == 0) kv.fail(section + ".n", "must be >= 1");
    return synthetic_set(kind, n, model.image_h, model.image_w, kv.get_u64(section + ".seed", 0),
                         kv.get_u64(section + ".cell", 0));
  }
  if (!fs::exists(source)) throw MissingArtifactError(section + ".source: no such file " + source);
  const std::string manifest = kv.get_string(section + ".manifest", "");
  ImageSet set = manifest.empty() ? load_raw_batch(source) : load_raw_batch(source, manifest);
  if (set.height != model.image_h || set.width != model.image_w) {
    kv.fail(section + ".source", "images are " + std::to_string(set.height) + "x" +
                                     std::to_string(set.width) + ", the model expects " +
                                     std::to_string(model.image_h) + "x" +
                                     std::to_string(model.image_w));
  }
  return set;
}

std::string ratio_tag(double ratio) {
  // 1/24 -> "1-24" when the ratio is a unit fraction, else the decimal form.
  const double inv = 1.0 / ratio;
  if (std::abs(inv - std::round(inv)) < 1e-9) return "1-" + std::to_string(std::llround(inv));
  return format_double(ratio);
}

std::string fill_template(std::string t, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (auto pos = t.find(token); pos != std::string::npos; pos = t.find(token, pos + value.size())) {
      t.replace(pos, token.size(), value);
    }
  }
  return t;
}

std::unique_ptr<CodecAdapter> make_codec(const KeyValueConfig& kv, const fs::path& out) {
  const std::string kind = kv.get_string("baseline.codec", "mock");
  if (kind == "mock") return std::make_unique<QuantizationCodec>();
  if (kind != "command") kv.fail("baseline.codec", "'" + kind + "' is not 'mock' or 'command'");
  SubprocessCodec::Options opt;
  opt.encode_command = kv.get_string("baseline.encode_command", "");
  opt.decode_command = kv.get_string("baseline.decode_command", "");
  if (opt.encode_command.empty()) kv.fail("baseline.encode_command", "required for codec = command");
  if (opt.decode_command.empty()) kv.fail("baseline.decode_command", "required for codec = command");
  opt.quality_min = static_cast<int>(kv.get_u64("baseline.quality_min", 0));
  opt.quality_max = static_cast<int>(kv.get_u64("baseline.quality_max", 51));
  opt.higher_quality_value_is_better = kv.get_bool("baseline.higher_is_better", false);
  opt.work_dir = out / "codec_scratch";
  fs::create_directories(opt.work_dir);
  return std::make_unique<SubprocessCodec>(opt);
}

EvalOptions eval_options(const KeyValueConfig& kv, double floor) {
  EvalOptions opts;
  opts.draws_per_image = kv.get_u64("eval.draws", 1);
  if (opts.draws_per_image == 0) kv.fail("eval.draws", "must be >= 1");
  opts.seed = kv.get_u64("eval.seed", 0);
  opts.floor = floor;
  return opts;
}

std::string scheme_for(const TrainConfig& t) {
  if (t.snr.kind == SnrStrategy::Kind::uniform) {
    return to_string(t.svd_mode == SvdMode::with_svd ? Scheme::vit_universal
                                                     : Scheme::vit_universal_no_svd);
  }
  return to_string(Scheme::vit);
}

void emit_records(Run& run, const std::string& stem, const std::vector<EvalRecord>& records) {
  emit(run, stem + ".csv", records_csv(records));
  emit(run, stem + ".json", records_json(records));
  emit(run, stem + "_series.json", series_json(records));
}

// ---------------------------------------------------------------------------
// Commands

Trainer train_model(const ViTConfig& model, const TrainConfig& cfg, const ImageSet& data,
                    const ImageSet& eval_set, const std::vector<double>& eval_snrs,
                    const EvalOptions& eval_opts, std::string* loss_csv) {
  Trainer tr(model, cfg);
  if (loss_csv) *loss_csv = "step,loss\n";
  const std::uint64_t report = cfg.eval_every > 0 ? cfg.eval_every
                                                  : std::max<std::uint64_t>(1, cfg.steps / 10);
  tr.run(data, cfg.steps, [&](std::uint64_t step, double loss) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", loss);
    if (loss_csv) *loss_csv += std::to_string(step) + "," + buf + "\n";
    if (step % report != 0 && step != cfg.steps) return;
    std::printf("step %llu loss %.6f", static_cast<unsigned long long>(step), loss);
    if (cfg.eval_every > 0) {
      for (double mu : eval_snrs) {
        const auto rec = evaluate(tr.params(), eval_set, mu, cfg.svd_mode, eval_opts);
        std::printf(" psnr@%sdB %.3f", format_double(mu).c_str(), rec.psnr_mean);
      }
    }
    std::printf("\n");
    std::fflush(stdout);
  });
  return tr;
}

int cmd_train(Run& run) {
  auto [model, train] = resolve_model(run.kv);
  if (train.checkpoint_path.empty()) {
    train.checkpoint_path = (run.out / "checkpoint.ckpt").string();
    run.kv.set("train.checkpoint", train.checkpoint_path, "resolved");
  }
  const ImageSet data = load_images(run.kv, "data", model);
  const ImageSet eval_set = load_images(run.kv, "eval", model);
  const auto snrs = number_list(run.kv, "eval.snr_test", false);
  std::printf("training: %zu images, k = %zu, R = %s, snr %s, svd %s, %llu steps\n", data.size(),
              model.symbols, format_double(train.ratio).c_str(), train.snr.to_string().c_str(),
              to_string(train.svd_mode).c_str(), static_cast<unsigned long long>(train.steps));
  std::string loss_csv;
  Trainer tr = train_model(model, train, data, eval_set, snrs,
                           eval_options(run.kv, train.floor), &loss_csv);
  tr.save(train.checkpoint_path);
  run.outputs.push_back(train.checkpoint_path);
  emit(run, "train_loss.csv", loss_csv);
  std::printf("checkpoint: %s\n", train.checkpoint_path.c_str());
  return kExitOk;
}

int cmd_evaluate(Run& run, const std::string& checkpoint, const std::string& scheme_flag) {
  if (checkpoint.empty()) throw ConfigError("evaluate: --checkpoint is required");
  const Checkpoint ck = load_checkpoint(checkpoint);
  describe(ck.params.config, run.kv);
  describe(ck.train, run.kv);
  const ImageSet eval_set = load_images(run.kv, "eval", ck.params.config);
  const auto snrs = number_list(run.kv, "eval.snr_test", false);
  if (snrs.empty()) run.kv.fail("eval.snr_test", "no test SNRs given");
  const std::string scheme = scheme_flag.empty() ? scheme_for(ck.train) : scheme_flag;
  const EvalOptions opts = eval_options(run.kv, ck.train.floor);
  std::vector<EvalRecord> records;
  for (double mu : snrs) {
    records.push_back(evaluate(ck.params, eval_set, mu, ck.train.svd_mode, opts, scheme));
    std::printf("%s snr %s dB: PSNR %.3f +- %.3f dB\n", scheme.c_str(), format_double(mu).c_str(),
                records.back().psnr_mean, records.back().psnr_std);
  }
  emit_records(run, "eval", records);
  return kExitOk;
}

int cmd_sweep(Run& run) {
  KeyValueConfig& kv = run.kv;
  const ViTConfig base = model_config_from(kv);
  SweepGrid grid;
  for (const auto& s : kv.get_list("sweep.schemes", {})) {
    try {
      grid.schemes.push_back(parse_scheme(s));
    } catch (const ConfigError& e) {
      kv.fail("sweep.schemes", e.what());
    }
  }
  grid.ratios = number_list(kv, "sweep.ratios", true);
  grid.snrs = number_list(kv, "sweep.snrs", false);
  const ImageSet eval_set = load_images(kv, "eval", base);
  const std::string tmpl = kv.get_string("sweep.checkpoint_template", "");
  const CheckpointLocator locate = [&](Scheme scheme, double ratio, double snr) {
    return fs::path(fill_template(tmpl, {{"out", run.out.string()},
                                         {"scheme", to_string(scheme)},
                                         {"R", ratio_tag(ratio)},
                                         {"k", std::to_string(symbols_for_ratio(
                                                   ratio, base.image_h, base.image_w))},
                                         {"snr", format_double(snr)}}));
  };
  auto codec = make_codec(kv, run.out);
  const SweepResult result =
      run_sweep(grid, eval_set, eval_options(kv, kDefaultSingularFloor), locate, codec.get(),
                base.antennas);
  for (const auto& r : result.records) {
    std::printf("%-22s R=%-10s snr=%-4s PSNR %.3f dB\n", r.scheme.c_str(),
                format_double(r.ratio).c_str(), format_double(r.snr_db).c_str(), r.psnr_mean);
  }
  emit_records(run, "sweep", result.records);
  if (!result.missing.empty()) {
    std::fprintf(stderr, "%zu grid cell(s) skipped:\n", result.missing.size());
    for (const auto& m : result.missing) std::fprintf(stderr, "  %s\n", m.c_str());
    return kExitMissing;
  }
  return kExitOk;
}

int cmd_baseline(Run& run) {
  KeyValueConfig& kv = run.kv;
  const ViTConfig base = model_config_from(kv);
  const auto ratios = number_list(kv, "baseline.ratios", true);
  const auto snrs = number_list(kv, "baseline.snrs", false);
  if (ratios.empty() || snrs.empty()) throw ConfigError("baseline: empty ratio or SNR grid");
  const ImageSet eval_set = load_images(kv, "eval", base);
  auto codec = make_codec(kv, run.out);
  const EvalOptions opts = eval_options(kv, kDefaultSingularFloor);
  std::vector<EvalRecord> records;
  for (double ratio : ratios) {
    const std::size_t k = symbols_for_ratio(ratio, base.image_h, base.image_w);
    for (double mu : snrs) {
      records.push_back(evaluate_separation(eval_set, mu, k, base.antennas, *codec, opts, base.power));
      std::printf("separation (%s) R=%s snr=%s dB: PSNR %.3f dB\n", codec->name().c_str(),
                  format_double(ratio).c_str(), format_double(mu).c_str(),
                  records.back().psnr_mean);
    }
  }
  emit_records(run, "baseline", records);
  return kExitOk;
}

int cmd_ablate(Run& run) {
  KeyValueConfig& kv = run.kv;
  kv.set_default("train.snr", "uniform:0:22");
  const auto ratios = number_list(kv, "ablate.ratios", true);
  const auto snrs = number_list(kv, "ablate.snrs", false);
  if (ratios.empty() || snrs.empty()) throw ConfigError("ablate: empty ratio or SNR grid");
  const bool train_first = kv.get_bool("ablate.train", true);
  ViTConfig base = model_config_from(kv);
  TrainConfig base_train = train_config_from(kv);
  const ImageSet data = load_images(kv, "data", base);
  const ImageSet eval_set = load_images(kv, "eval", base);

  std::vector<EvalRecord> records;
  std::vector<std::string> missing;
  for (double ratio : ratios) {
    ViTConfig model = base;
    model.symbols = symbols_for_ratio(ratio, model.image_h, model.image_w);
    std::map<SvdMode, Checkpoint> trained;
    for (SvdMode mode : {SvdMode::with_svd, SvdMode::without_svd}) {
      TrainConfig cfg = base_train;
      cfg.ratio = ratio;
      cfg.svd_mode = mode;
      const fs::path path = run.out / ("ablate_" + to_string(mode) + "_R" + ratio_tag(ratio) + ".ckpt");
      cfg.checkpoint_path = path.string();
      if (train_first) {
        cfg.validate(model);
        std::printf("training R=%s svd=%s (%llu steps)\n", format_double(ratio).c_str(),
                    to_string(mode).c_str(), static_cast<unsigned long long>(cfg.steps));
        Trainer tr = train_model(model, cfg, data, eval_set, {}, eval_options(kv, cfg.floor), nullptr);
        tr.save(path);
        run.outputs.push_back(path.string());
        trained.emplace(mode, tr.checkpoint());
      } else if (!fs::exists(path)) {
        missing.push_back("R=" + format_double(ratio) + " svd=" + to_string(mode) +
                          ": missing checkpoint " + path.string());
      } else {
        trained.emplace(mode, load_checkpoint(path, model));
      }
    }
    if (trained.size() != 2) continue;
    for (double mu : snrs) {
      double psnr_pair[2];
      int i = 0;
      for (SvdMode mode : {SvdMode::with_svd, SvdMode::without_svd}) {
        const Checkpoint& ck = trained.at(mode);
        const Scheme scheme =
            mode == SvdMode::with_svd ? Scheme::vit_universal : Scheme::vit_universal_no_svd;
        records.push_back(evaluate(ck.params, eval_set, mu, mode, eval_options(kv, ck.train.floor),
                                   to_string(scheme)));
        psnr_pair[i++] = records.back().psnr_mean;
      }
      std::printf("R=%s snr=%s dB: with SVD %.3f dB, without %.3f dB, gain %+.3f dB\n",
                  format_double(ratio).c_str(), format_double(mu).c_str(), psnr_pair[0],
                  psnr_pair[1], psnr_pair[0] - psnr_pair[1]);
    }
  }
  describe(base_train, kv);
  emit_records(run, "ablate", records);
  if (!missing.empty()) {
    std::fprintf(stderr, "%zu checkpoint(s) missing:\n", missing.size());
    for (const auto& m : missing) std::fprintf(stderr, "  %s\n", m.c_str());
    return kExitMissing;
  }
  return kExitOk;
}

int cmd_selfcheck(const std::string& fault_name) {
  const Fault fault = parse_fault(fault_name);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t passed = 0, total = 0;
  run_selfcheck(fault, [&](const CheckResult& r) {
    ++total;
    passed += r.passed ? 1 : 0;
    std::printf("%s  %-22s observed %s, expected %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.observed.c_str(), r.expected.c_str());
    std::fflush(stdout);
  });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("selfcheck: %zu/%zu checks passed in %.1f s\n", passed, total, secs);
  return passed == total ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ViT-based MIMO image transmission: training, evaluation and baselines"};
  app.require_subcommand(1);
  app.set_version_flag("--version", VITMIMO_VERSION);

  Overrides o;
  std::string checkpoint, scheme, fault = "none";

  auto* train = app.add_subcommand("train", "Train an encoder/decoder pair");
  add_common(train, o);
  add_flag_option(train, o, "--steps", "train.steps", "Optimizer steps");
  add_flag_option(train, o, "--snr", "train.snr", "fixed:<dB> | uniform:<lo>:<hi> | noiseless");
  add_flag_option(train, o, "--R", "train.ratio", "Bandwidth ratio, e.g. 1/24");
  add_flag_option(train, o, "--seed", "train.seed", "Training seed");
  add_flag_option(train, o, "--lr", "train.lr", "Adam learning rate");
  add_flag_option(train, o, "--batch-size", "train.batch_size", "Images per step");
  add_flag_option(train, o, "--svd", "train.svd", "with | without");
  add_flag_option(train, o, "--eval-every", "train.eval_every", "Steps between evaluations");
  add_flag_option(train, o, "--checkpoint", "train.checkpoint", "Checkpoint path");
  add_flag_option(train, o, "--data", "data.source", "synthetic:<kind> or a raw batch file");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint over test SNRs");
  add_common(eval, o);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--scheme", scheme, "Scheme label for the records");
  add_flag_option(eval, o, "--snr-test", "eval.snr_test", "Comma-separated test SNRs in dB");
  add_flag_option(eval, o, "--seed", "eval.seed", "Evaluation seed");
  add_flag_option(eval, o, "--data", "eval.source", "synthetic:<kind> or a raw batch file");

  auto* sweep = app.add_subcommand("sweep", "Evaluate a (scheme, R, SNR) grid");
  add_common(sweep, o);
  add_flag_option(sweep, o, "--seed", "eval.seed", "Evaluation seed");

  auto* baseline = app.add_subcommand("baseline", "Capacity-budget separation benchmark");
  add_common(baseline, o);
  add_flag_option(baseline, o, "--codec", "baseline.codec", "mock | command");
  add_flag_option(baseline, o, "--seed", "eval.seed", "Evaluation seed");

  auto* ablate = app.add_subcommand("ablate", "Paired with/without SVD precoding comparison");
  add_common(ablate, o);
  add_flag_option(ablate, o, "--steps", "train.steps", "Optimizer steps per model");
  add_flag_option(ablate, o, "--seed", "train.seed", "Training seed");

  auto* self = app.add_subcommand("selfcheck", "Fast invariant suite");
  self->add_option("--inject-fault", fault, "none | attn-scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto fail = [](int code, const std::string& kind, const std::string& what) {
    std::fprintf(stderr, "vitmimo: %s: %s\n", kind.c_str(), what.c_str());
    return code;
  };

  if (self->parsed()) {
    try {
      return cmd_selfcheck(fault);
    } catch (const ConfigError& e) {
      return fail(kExitConfig, "config error", e.what());
    }
  }

  Run run;
  run.argv.assign(argv, argv + argc);
  run.started = utc_now();
  int code = kExitOk;
  bool have_run = false;
  try {
    run.out = output_root(o.out);
    run.kv = resolve(o);
    have_run = true;
    fs::create_directories(run.out);
    if (train->parsed()) {
      run.command = "train";
      code = cmd_train(run);
    } else if (eval->parsed()) {
      run.command = "evaluate";
      code = cmd_evaluate(run, checkpoint, scheme);
    } else if (sweep->parsed()) {
      run.command = "sweep";
      code = cmd_sweep(run);
    } else if (baseline->parsed()) {
      run.command = "baseline";
      code = cmd_baseline(run);
    } else if (ablate->parsed()) {
      run.command = "ablate";
      code = cmd_ablate(run);
    }
  } catch (const ConfigError& e) {
    code = fail(kExitConfig, "config error", e.what());
  } catch (const FormatError& e) {
    code = fail(kExitConfig, "input format error", e.what());
  } catch (const NumericError& e) {
    code = fail(kExitNumeric, "numeric failure", e.what());
  } catch (const MissingArtifactError& e) {
    code = fail(kExitMissing, "missing artifact", e.what());
  } catch (const CheckpointError& e) {
    code = fail(kExitMissing, "unusable checkpoint", e.what());
  } catch (const IoError& e) {
    code = fail(kExitMissing, "I/O error", e.what());
  } catch (const std::exception& e) {
    code = fail(kExitFailure, "error", e.what());
  }
  if (have_run && fs::exists(run.out)) {
    try {
      write_manifest(run, code);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "vitmimo: could not write manifest: %s\n", e.what());
      if (code == kExitOk) code = kExitFailure;
    }
  }
  return code;
}
