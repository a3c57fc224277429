#pragma once

#include <functional>
#include <string>
#include <vector>

namespace vitmimo {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string observed;
  std::string expected;
};

// Deliberate defects for demonstrating what the checks catch.
enum class Fault {
  none,
  attn_scale,  // attention logits divided by sqrt(d_s) instead of sqrt(d)
};

Fault parse_fault(const std::string& text);

// Fast invariant suite: gradient checks, SVD, channel algebra, heatmap
// statistics, water-filling, full-size shapes and a seeded regression
// value. `on_result` sees each check as it completes.
std::vector<CheckResult> run_selfcheck(Fault fault = Fault::none,
                                       const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace vitmimo
