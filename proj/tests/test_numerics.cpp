#include "doctest.h"

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "vitmimo/adam.hpp"
#include "vitmimo/errors.hpp"
#include "vitmimo/gradcheck.hpp"
#include "vitmimo/ops.hpp"
#include "vitmimo/rng.hpp"

using namespace vitmimo;
using nn::Tensor;

namespace {

Tensor random_tensor(nn::Shape shape, Rng& rng, double sd = 1.0, bool grad = true) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(nn::shape_size(shape)));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal() * sd;
  return Tensor(std::move(shape), std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul: identity and hand arithmetic") {
  Rng rng(1);
  const Tensor b = random_tensor({3, 4}, rng, 1.0, false);
  const Tensor eye = Tensor::from_matrix(nn::RowMatrix::Identity(3, 3));
  CHECK(nn::matmul(eye, b).values() == b.values());

  const Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  const Tensor ones = Tensor::from_values({2, 1}, {1, 1});
  const Tensor c = nn::matmul(a, ones);
  CHECK(c.shape() == nn::Shape{2, 1});
  CHECK(c.at(0) == 3.0);
  CHECK(c.at(1) == 7.0);
}

TEST_CASE("matmul: gradient of sum matches finite differences") {
  Rng rng(2);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  nn::sum(nn::matmul(a, b)).backward();

  const Eigen::VectorXd b0 = b.values();
  auto f = [&](const std::vector<double>& x) {
    Eigen::VectorXd av = Eigen::Map<const Eigen::VectorXd>(x.data(), 20);
    nn::RowMatrix am = nn::ConstMatrixMap(av.data(), 4, 5);
    return (am * nn::ConstMatrixMap(b0.data(), 5, 3)).sum();
  };
  const std::vector<double> ax(a.values().data(), a.values().data() + 20);
  const auto fd = oracle::central_difference(f, ax, 1e-4);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double an = a.grad()[static_cast<Eigen::Index>(i)];
    CHECK(std::abs(an - fd[i]) / std::max(std::abs(fd[i]), 1e-8) < 1e-4);
  }
  CHECK(b.has_grad());
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    nn::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("*") != std::string::npos);
  }
}

TEST_CASE("gelu: exact-erf values") {
  const Tensor x = Tensor::from_values({3}, {0.0, 10.0, 1.0});
  const Tensor y = nn::gelu(x);
  CHECK(y.at(0) == 0.0);
  CHECK(std::abs(y.at(1) - 10.0) < 1e-6);
  const double expected = 0.5 * (1.0 + oracle::erf_series(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(expected - 0.841345) < 1e-5);
  CHECK(std::abs(y.at(2) - expected) < 1e-12);
}

TEST_CASE("layer_norm: analytic cases") {
  const Tensor gain = Tensor::filled({2}, 1.0), bias = Tensor::zeros({2});
  const Tensor constant = Tensor::from_values({1, 2}, {5.0, 5.0});
  const Tensor z = nn::layer_norm(constant, gain, bias, 1e-5);
  CHECK(z.at(0) == 0.0);
  CHECK(z.at(1) == 0.0);

  const Tensor pair = Tensor::from_values({1, 2}, {1.0, 3.0});
  const Tensor y = nn::layer_norm(pair, gain, bias, 1e-14);
  CHECK(std::abs(y.at(0) + 1.0) < 1e-12);
  CHECK(std::abs(y.at(1) - 1.0) < 1e-12);

  CHECK_THROWS_AS(nn::layer_norm(pair, gain, bias, 0.0), ConfigError);
}

TEST_CASE("layer_norm: row statistics and shift invariance") {
  Rng rng(3);
  const Tensor x = random_tensor({8, 16}, rng, 3.0, false);
  const Tensor gain = Tensor::filled({16}, 1.0), bias = Tensor::zeros({16});
  const Tensor y = nn::layer_norm(x, gain, bias, 1e-12);
  for (Eigen::Index r = 0; r < 8; ++r) {
    const auto row = y.matrix().row(r);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
  nn::RowMatrix shifted = x.matrix();
  shifted.row(2).array() += 17.5;
  const Tensor y2 = nn::layer_norm(Tensor::from_matrix(shifted), gain, bias, 1e-12);
  CHECK((y2.values() - y.values()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("softmax_rows: uniform, analytic, overflow guard") {
  const Tensor u = nn::softmax_rows(Tensor::zeros({1, 3}));
  for (int i = 0; i < 3; ++i) CHECK(std::abs(u.at(i) - 1.0 / 3.0) < 1e-15);

  const Tensor a = nn::softmax_rows(Tensor::from_values({1, 2}, {0.0, std::log(3.0)}));
  CHECK(std::abs(a.at(0) - 0.25) < 1e-15);
  CHECK(std::abs(a.at(1) - 0.75) < 1e-15);

  const Tensor big = nn::softmax_rows(Tensor::from_values({1, 2}, {1000.0, 1001.0}));
  CHECK(nn::all_finite(big));
  CHECK(std::abs(big.at(0) + big.at(1) - 1.0) < 1e-15);
}

TEST_CASE("softmax_rows: rows sum to one for large finite inputs") {
  Rng rng(4);
  for (int seed = 0; seed < 10; ++seed) {
    const Tensor x = random_tensor({5, 7}, rng, 1e3, false);
    const Tensor y = nn::softmax_rows(x);
    for (Eigen::Index r = 0; r < 5; ++r) {
      CHECK(std::abs(y.matrix().row(r).sum() - 1.0) < 1e-6);
      CHECK(y.matrix().row(r).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("embed_lookup: identity, scatter-add, range") {
  Rng rng(5);
  Tensor table = random_tensor({64, 256}, rng);
  std::vector<std::size_t> idx(64);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor out = nn::embed_lookup(table, idx);
  CHECK(out.shape() == nn::Shape{64, 256});
  CHECK(out.values() == table.values());

  Tensor small = random_tensor({3, 2}, rng);
  const std::vector<std::size_t> rep{1, 1, 0};
  nn::sum(nn::embed_lookup(small, rep)).backward();
  CHECK(small.grad()[2] == 2.0);
  CHECK(small.grad()[3] == 2.0);
  CHECK(small.grad()[0] == 1.0);
  CHECK(small.grad()[4] == 0.0);

  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(nn::embed_lookup(small, bad), IndexError);
}

TEST_CASE("grad_check: linear function is exact") {
  Tensor w = Tensor::from_values({4}, {0.3, -1.0, 2.0, 0.5}, true);
  const Tensor c = Tensor::from_values({4}, {1.5, -2.0, 0.25, 3.0});
  auto loss = [&] { return nn::sum(nn::add(nn::square(c), nn::scale(w, 1.0)) - nn::square(c)); };
  Tensor params[] = {w};
  CHECK(nn::grad_check(loss, params) < 1e-8);

  auto dot = [&] {
    return nn::matmul(nn::reshape(c, {1, 4}), nn::reshape(w, {4, 1}));
  };
  CHECK(nn::grad_check(dot, params) < 1e-8);
}

TEST_CASE("grad_check: rejects bad step and non-finite loss") {
  Tensor w = Tensor::from_values({1}, {1.0}, true);
  Tensor params[] = {w};
  auto loss = [&] { return nn::sum(w); };
  nn::GradCheckOptions opts;
  opts.h = 0.1;
  CHECK_THROWS_AS(nn::grad_check(loss, params, opts), ConfigError);
  auto inf = [&] { return nn::scale(nn::sum(w), INFINITY); };
  CHECK_THROWS_AS(nn::grad_check(inf, params), NumericError);
}

TEST_CASE("every differentiable op passes grad_check over 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor c = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({4}, rng);
    Tensor gain = random_tensor({4}, rng);
    Tensor target = random_tensor({3, 5}, rng, 1.0, false);
    Tensor table = random_tensor({6, 4}, rng);
    const std::vector<std::size_t> ids{5, 0, 5};
    const std::vector<std::size_t> perm{11, 0, 3, 3, 7, 1};

    auto loss = [&] {
      Tensor x = nn::layer_norm(a + c, gain, bias, 1e-5);
      x = nn::gelu(nn::add_row_bias(x, bias)) - nn::embed_lookup(table, ids);
      Tensor y = nn::softmax_rows(nn::matmul(x, b));
      y = nn::concat_cols(y, nn::transpose(nn::reshape(a, {4, 3})));
      y = nn::scale_to_norm(y, 3.0);
      Tensor g = nn::gather(y, perm, {2, 3});
      return nn::mean(nn::square(nn::reshape(y, {9, 3}))) + nn::sum(nn::square(g)) +
             nn::mean(nn::square(nn::matmul(x, b) - target));
    };
    Tensor params[] = {a, b, c, bias, gain, table};
    CHECK(nn::grad_check(loss, params, {.h = 1e-4, .seed = seed}) <= 1e-3);
  }
}

TEST_CASE("scale_to_norm: zero input is a numeric error") {
  CHECK_THROWS_AS(nn::scale_to_norm(Tensor::zeros({4}), 1.0), NumericError);
}

TEST_CASE("graph is freed after backward; leaf grads accumulate") {
  Tensor w = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor y = nn::sum(nn::square(w));
  y.backward();
  CHECK(y.node()->parents.empty());
  CHECK(w.grad()[1] == 4.0);
  nn::sum(nn::square(w)).backward();
  CHECK(w.grad()[1] == 8.0);
  w.zero_grad();
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("no-grad guard records nothing") {
  Tensor w = Tensor::from_values({2}, {1.0, 2.0}, true);
  nn::NoGradGuard guard;
  Tensor y = nn::sum(nn::square(w));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("adam: first step moves each coordinate by about lr") {
  Tensor w = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
  Tensor params[] = {w};
  auto state = nn::AdamState::for_params(params, 0.01);
  const Eigen::VectorXd before = w.values();
  const std::vector<Eigen::VectorXd> grads{Eigen::Vector3d(3.0, -1e-3, 40.0)};
  nn::adam_step(params, grads, state);
  CHECK(state.step_count == 1);
  const Eigen::VectorXd delta = (w.values() - before).cwiseAbs();
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(delta[i] <= 0.01 * (1.0 + 1e-6));
  CHECK(delta[0] > 0.0099);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Tensor w = Tensor::from_values({2}, {1.0, -2.0}, true);
  Tensor params[] = {w};
  auto state = nn::AdamState::for_params(params, 0.1);
  const Eigen::VectorXd before = w.values();
  for (int i = 0; i < 5; ++i) nn::adam_step(params, state);
  CHECK(w.values() == before);
  CHECK(state.step_count == 5);
}

TEST_CASE("adam: converges on a quadratic bowl") {
  Tensor w = Tensor::from_values({1}, {3.0}, true);
  Tensor params[] = {w};
  auto state = nn::AdamState::for_params(params, 0.1);
  for (int i = 0; i < 500; ++i) {
    w.zero_grad();
    nn::sum(nn::square(w)).backward();
    nn::adam_step(params, state);
  }
  CHECK(std::abs(w.at(0)) < 0.01);
}

TEST_CASE("adam: shape mismatch is rejected") {
  Tensor w = Tensor::zeros({2}, true);
  Tensor params[] = {w};
  auto state = nn::AdamState::for_params(params, 0.1);
  const std::vector<Eigen::VectorXd> grads{Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(nn::adam_step(params, grads, state), DimensionError);
}

TEST_CASE("tensor: construction invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, Eigen::VectorXd::Zero(3)), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), DimensionError);
  CHECK_THROWS_AS(nn::reshape(Tensor::zeros({2, 3}), {4, 2}), DimensionError);
}

TEST_CASE("rng: state round trip and stream independence") {
  Rng a(9);
  a.normal();
  Rng b;
  b.set_state(a.state());
  CHECK(a == b);
  CHECK(a.normal() == b.normal());
  CHECK(Rng::stream(1, 0).next_u64() != Rng::stream(1, 1).next_u64());
  CHECK_THROWS_AS(b.set_state("garbage"), FormatError);
}
