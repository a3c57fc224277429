#include "vitmimo/adam.hpp"

#include <cmath>

#include "vitmimo/errors.hpp"

namespace vitmimo::nn {

AdamState AdamState::for_params(std::span<const Tensor> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())));
    s.v.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())));
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Eigen::VectorXd> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(params[i].size());
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has " +
                           std::to_string(n) + " entries but grad has " +
                           std::to_string(grads[i].size()));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXd m_hat = m.array() / bc1;
    const Eigen::ArrayXd v_hat = v.array() / bc2;
    params[i].mutable_values().array() -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.has_grad() ? p.grad()
                                 : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())));
  }
  adam_step(params, grads, state);
}

}  // namespace vitmimo::nn
