#include "doctest.h"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cli_runner.hpp"
#include "vitmimo/trainer.hpp"

using namespace vitmimo;
using namespace vitmimo::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vitmimo_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("train writes checkpoint, loss log and manifest") {
  const fs::path dir = fresh_dir("train");
  const auto cfg = write_toy_config(dir);
  const auto out = dir / "out";
  const auto r = run_cli("train --config " + cfg.string() + " --steps 10 --snr uniform:0:22 --out " +
                         out.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(out / "checkpoint.ckpt"));

  const auto rows = csv_rows(slurp(out / "train_loss.csv"));
  REQUIRE(rows.size() == 11);
  CHECK(rows[0] == std::vector<std::string>{"step", "loss"});
  CHECK(rows[10][0] == "10");

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["exit_code"] == 0);
  CHECK(manifest["config"]["train.snr"] == "uniform:0:22");
  CHECK(manifest["config"]["train.steps"] == "10");
  CHECK(manifest["config"].contains("baseline.snrs"));
  CHECK(manifest["seeds"].contains("train.seed"));
  CHECK(!manifest["version"].get<std::string>().empty());

  const Checkpoint ck = load_checkpoint(out / "checkpoint.ckpt");
  CHECK(ck.step == 10);
  CHECK(ck.train.snr.kind == SnrStrategy::Kind::uniform);
  CHECK(ck.train.snr.lo == 0.0);
  CHECK(ck.train.snr.hi == 22.0);
}

TEST_CASE("--R 1/24 on the default image size gives 128 symbols") {
  const fs::path dir = fresh_dir("ratio");
  const auto r = run_cli("train --R 1/24 --steps 1 --set model.layers=1 --set data.n=2 "
                         "--set eval.n=1 --out " + dir.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.ckpt");
  CHECK(ck.params.config.symbols == 128);
}

TEST_CASE("bad arguments exit 2 with a message naming the key") {
  const fs::path dir = fresh_dir("bad");
  const auto cfg = write_toy_config(dir);
  const std::string base = "train --config " + cfg.string() + " --out " + dir.string() + " ";

  auto r = run_cli(base + "--snr sometimes");
  CHECK(r.code == 2);
  CHECK(r.output.find("train.snr") != std::string::npos);

  r = run_cli(base + "--set train.colour=blue");
  CHECK(r.code == 2);
  CHECK(r.output.find("train.colour") != std::string::npos);

  r = run_cli(base + "--R 1/7");
  CHECK(r.code == 2);

  r = run_cli(base + "--not-an-option");
  CHECK(r.code == 2);

  r = run_cli("evaluate --checkpoint " + (dir / "absent.ckpt").string() + " --out " + dir.string());
  CHECK(r.code == 4);
}

TEST_CASE("non-finite training exits 3 and leaves an abort checkpoint") {
  const fs::path dir = fresh_dir("nan");
  const auto cfg = write_toy_config(dir);
  const auto r = run_cli("train --config " + cfg.string() + " --lr 1e300 --steps 20 --out " +
                         dir.string());
  CHECK(r.code == 3);
  CHECK(fs::exists(dir / "checkpoint.ckpt.abort"));
}

TEST_CASE("sweep: empty grid exits 2, missing cells exit 4") {
  const fs::path dir = fresh_dir("sweep");
  const auto cfg = write_toy_config(dir);
  auto r = run_cli("sweep --config " + cfg.string() + " --out " + dir.string());
  CHECK(r.code == 2);

  r = run_cli("sweep --config " + cfg.string() + " --out " + dir.string() +
              " --set sweep.schemes=vit,separation --set sweep.ratios=1/12 --set sweep.snrs=0,10");
  CHECK(r.code == 4);
  CHECK(r.output.find("vit_R1-12.ckpt") != std::string::npos);
  const auto rows = csv_rows(slurp(dir / "sweep.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "separation");
}

TEST_CASE("sweep evaluates a trained checkpoint through the path template") {
  const fs::path dir = fresh_dir("sweep_ok");
  const auto cfg = write_toy_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string() + " --steps 5 --snr uniform:0:22 --out " +
                  dir.string() + " --checkpoint " + (dir / "vit-universal_R1-12.ckpt").string())
              .code == 0);
  const auto r = run_cli("sweep --config " + cfg.string() + " --out " + dir.string() +
                         " --set sweep.schemes=vit-universal --set sweep.ratios=1/12 "
                         "--set sweep.snrs=0,10,20");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto rows = csv_rows(slurp(dir / "sweep.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"scheme", "R", "snr_test_db", "psnr_mean_db",
                                            "psnr_std_db", "n_images", "n_draws", "seed"});
  CHECK(rows[3][2] == "20");
  const auto series = nlohmann::json::parse(slurp(dir / "sweep_series.json"));
  CHECK(series["series"]["vit-universal"].size() == 3);
}

TEST_CASE("baseline produces five rows non-decreasing in SNR") {
  const fs::path dir = fresh_dir("baseline");
  const auto cfg = write_toy_config(dir);
  const auto r = run_cli("baseline --config " + cfg.string() + " --out " + dir.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto rows = csv_rows(slurp(dir / "baseline.csv"));
  REQUIRE(rows.size() == 6);
  double prev = -1e300;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][0] == "separation");
    const double psnr = std::stod(rows[i][3]);
    CHECK(psnr >= prev);
    prev = psnr;
  }
}

TEST_CASE("ablate emits paired rows and per-mode checkpoints") {
  const fs::path dir = fresh_dir("ablate");
  const auto cfg = write_toy_config(dir);
  const auto r = run_cli("ablate --config " + cfg.string() + " --steps 5 --out " + dir.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir / "ablate_with_R1-12.ckpt"));
  CHECK(fs::exists(dir / "ablate_without_R1-12.ckpt"));
  const auto rows = csv_rows(slurp(dir / "ablate.csv"));
  REQUIRE(rows.size() == 7);
  for (std::size_t i = 1; i < rows.size(); i += 2) {
    CHECK(rows[i][0] == "vit-universal");
    CHECK(rows[i + 1][0] == "vit-universal-no-svd");
    CHECK(rows[i][2] == rows[i + 1][2]);
  }
  const Checkpoint ck = load_checkpoint(dir / "ablate_without_R1-12.ckpt");
  CHECK(ck.train.svd_mode == SvdMode::without_svd);
  CHECK(ck.train.snr.kind == SnrStrategy::Kind::uniform);
}

TEST_CASE("evaluate reuses the checkpoint's settings") {
  const fs::path dir = fresh_dir("evaluate");
  const auto cfg = write_toy_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string() + " --steps 5 --svd without --out " +
                  dir.string()).code == 0);
  const auto r = run_cli("evaluate --config " + cfg.string() + " --checkpoint " +
                         (dir / "checkpoint.ckpt").string() + " --snr-test 5,15 --out " +
                         dir.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto rows = csv_rows(slurp(dir / "eval.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "vit");
  CHECK(rows[1][2] == "5");
  CHECK(rows[2][2] == "15");
  const auto json = nlohmann::json::parse(slurp(dir / "eval.json"));
  CHECK(json.size() == 2);
}

TEST_CASE("selfcheck passes, and the injected fault is caught") {
  auto r = run_cli("selfcheck");
  CHECK_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("FAIL") == std::string::npos);

  r = run_cli("selfcheck --inject-fault attn-scale");
  CHECK(r.code == 3);
  CHECK(r.output.find("FAIL  regression.toy_loss") != std::string::npos);
}
