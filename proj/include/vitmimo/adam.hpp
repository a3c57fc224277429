#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vitmimo/tensor.hpp"

namespace vitmimo::nn {

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Zero moments shaped like params.
  static AdamState for_params(std::span<const Tensor> params, double lr);
};

// One bias-corrected Adam update. Parameters without a grad are treated
// as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

// Same update with explicit gradients.
void adam_step(std::span<Tensor> params, std::span<const Eigen::VectorXd> grads,
               AdamState& state);

}  // namespace vitmimo::nn
