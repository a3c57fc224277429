#include "doctest.h"

#include <string>

#include "vitmimo/config.hpp"
#include "vitmimo/errors.hpp"

using namespace vitmimo;

namespace {

std::string error_of(const std::string& text) {
  try {
    KeyValueConfig::parse(text, "toy.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("KeyValueConfig: sections, comments, typed getters") {
  const auto kv = KeyValueConfig::parse(
      "# toy run\n[train]\nsteps = 200   # short\nlr = 1e-3\nsvd = with\n\n[eval]\nsnr_test = 0, 10 ,20\n"
      "strict = yes\n");
  CHECK(kv.get_u64("train.steps", 0) == 200);
  CHECK(kv.get_double("train.lr", 0) == 1e-3);
  CHECK(kv.get_string("train.svd", "") == "with");
  CHECK(kv.get_list("eval.snr_test", {}) == std::vector<std::string>{"0", "10", "20"});
  CHECK(kv.get_bool("eval.strict", false));
  CHECK(kv.get_u64("train.batch_size", 16) == 16);
  CHECK(kv.entries().at("train.lr").origin == "<config>:4");
}

TEST_CASE("KeyValueConfig: diagnostics carry file and line") {
  CHECK(error_of("[train]\nsteps 200\n").find("toy.cfg:2") != std::string::npos);
  CHECK(error_of("steps = 1\n").find("outside a section") != std::string::npos);
  CHECK(error_of("[train\n").find("toy.cfg:1") != std::string::npos);
  CHECK(error_of("[train]\na = 1\na = 2\n").find("duplicate") != std::string::npos);

  const auto kv = KeyValueConfig::parse("[train]\nsteps = many\n", "toy.cfg");
  try {
    kv.get_u64("train.steps", 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.steps (toy.cfg:2)") != std::string::npos);
  }
}

TEST_CASE("KeyValueConfig: overrides and unknown keys") {
  auto kv = KeyValueConfig::parse("[train]\nsteps = 200\n");
  kv.set("train.steps", "10", "--steps");
  CHECK(kv.get_u64("train.steps", 0) == 10);
  kv.set_default("train.steps", "99");
  kv.set_default("train.lr", "0.5");
  CHECK(kv.get_u64("train.steps", 0) == 10);
  CHECK(kv.get_double("train.lr", 0) == 0.5);
  CHECK_NOTHROW(kv.reject_unknown({"train.*"}));
  CHECK_THROWS_AS(kv.reject_unknown({"train.steps"}), ConfigError);
  CHECK(KeyValueConfig::parse(kv.to_text()).to_text() == kv.to_text());
}

TEST_CASE("parse_ratio and format_double") {
  CHECK(parse_ratio("1/24") == 1.0 / 24.0);
  CHECK(parse_ratio("0.25") == 0.25);
  CHECK_THROWS_AS(parse_ratio("1/0"), ConfigError);
  CHECK_THROWS_AS(parse_ratio("-1/2"), ConfigError);
  CHECK_THROWS_AS(parse_ratio("x"), ConfigError);
  for (double v : {0.1, 1.0 / 3.0, 1e-5, 22.0, -0.5, 5e-5}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_u64("17") == 17);
  CHECK_THROWS_AS(parse_u64("-3"), ConfigError);
}
