#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "vitmimo/rng.hpp"
#include "vitmimo/tensor.hpp"

namespace vitmimo::nn {

struct GradCheckOptions {
  double h = 1e-4;
  // Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients of a scalar computation against central
// differences. Returns max |analytic - cd| / max(|analytic|, |cd|, 1e-8)
// over the checked coordinates. `loss` must rebuild the graph on each call.
double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                  const GradCheckOptions& options = {});

}  // namespace vitmimo::nn
