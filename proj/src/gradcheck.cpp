#include "vitmimo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "vitmimo/errors.hpp"

namespace vitmimo::nn {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                  const GradCheckOptions& options) {
  if (!(options.h >= 1e-6 && options.h <= 1e-3)) {
    throw ConfigError("grad_check: step h must lie in [1e-6, 1e-3]");
  }
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor out = loss();
  if (!std::isfinite(out.item())) throw NumericError("grad_check: loss is not finite");
  out.backward();

  Rng rng(options.seed);
  double worst = 0.0;
  for (auto& p : params) {
    const Eigen::VectorXd analytic =
        p.has_grad() ? p.grad() : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param != 0 && coords.size() > options.max_coords_per_param) {
      for (std::size_t i = 0; i < options.max_coords_per_param; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_param);
    }
    for (std::size_t c : coords) {
      const auto i = static_cast<Eigen::Index>(c);
      const double saved = p.mutable_values()[i];
      p.mutable_values()[i] = saved + options.h;
      const double up = evaluate(loss);
      p.mutable_values()[i] = saved - options.h;
      const double down = evaluate(loss);
      p.mutable_values()[i] = saved;
      const double cd = (up - down) / (2.0 * options.h);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(cd), 1e-8});
      worst = std::max(worst, std::abs(a - cd) / denom);
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace vitmimo::nn
