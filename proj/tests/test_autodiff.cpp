// Reverse-mode engine checks: hand gradients, diamond-graph accumulation,
// finite-difference agreement for every kernel, and the checker itself.

#include <doctest.h>

#include "spectracast/gradcheck.hpp"
#include "spectracast/ops.hpp"
#include "support/test_util.hpp"

using namespace spectracast;
using testutil::randt;

TEST_CASE("backward of sum gives all-ones") {
  auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  x.set_requires_grad(true);
  backward(sum(x));
  for (const auto g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of sum of squares gives 2x") {
  auto x = Tensor<double>::from_data({4}, {1, -2, 3, 0.5});
  x.set_requires_grad(true);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
  }
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = Tensor<double>::zeros({3});
  x.set_requires_grad(true);
  auto y = mul(x, x);
  CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("grads accumulate across repeated backward calls") {
  auto x = Tensor<double>::from_data({2}, {1, 1});
  x.set_requires_grad(true);
  backward(sum(x));
  backward(sum(x));
  for (const auto g : x.grad()) CHECK(g == doctest::Approx(2.0));
  x.zero_grad();
  backward(sum(x));
  for (const auto g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("diamond graph accumulates both paths (vs finite differences)") {
  Rng rng(17);
  auto err = grad_check(
      [](const Tensor<double>& x) {
        auto shared = tanh(x);               // shared subexpression
        auto left = mul(shared, shared);     // path 1
        auto right = sigmoid(shared);        // path 2
        return add(sum(left), sum(right));
      },
      randt({5}, rng));
  CHECK(err < 1e-7);
}

TEST_CASE("linear map is exact under central differences") {
  Rng rng(23);
  auto a = randt({6}, rng);
  auto err = grad_check(
      [&](const Tensor<double>& x) { return sum(mul(a, x)); }, randt({6}, rng));
  CHECK(err < 1e-10);
}

TEST_CASE("sum of tanh passes the checker tightly") {
  Rng rng(29);
  auto err = grad_check([](const Tensor<double>& x) { return sum(tanh(x)); }, randt({8}, rng));
  CHECK(err < 1e-7);
}

TEST_CASE("a deliberately doubled gradient is flagged with error near 1") {
  auto x = Tensor<double>::from_data({3}, {0.3, -0.2, 0.5});
  auto err = grad_check(
      [](const Tensor<double>& probe) {
        // Identity-sum with a backward that reports twice the true gradient.
        std::vector<double> v(probe.data().begin(), probe.data().end());
        double acc = 0;
        for (const auto e : v) acc += e;
        return make_op<double>(
            {1}, {acc}, {probe},
            [](detail::Node<double>& n) {
              auto& p = *n.parents[0];
              p.ensure_grad();
              for (auto& g : p.grad) g += 2.0 * n.grad[0];
            },
            "wrong_scale");
      },
      x);
  CHECK(err == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("every kernel passes gradient checks on random small inputs") {
  Rng rng(101);
  const double tol = 1e-5;
  for (int trial = 0; trial < 3; ++trial) {
    auto b = randt({4, 3}, rng);
    CHECK(grad_check(
              [&](const Tensor<double>& x) {
                auto y = matmul(x, b);
                return sum(mul(y, y));
              },
              randt({2, 4}, rng)) < tol);
    CHECK(grad_check(
              [&](const Tensor<double>& x) {
                auto y = matmul(b, x);
                return sum(mul(y, y));
              },
              randt({3, 2}, rng)) < tol);
    CHECK(grad_check(
              [](const Tensor<double>& x) {
                auto y = softmax_lastdim(x);
                return sum(mul(y, y));
              },
              randt({3, 5}, rng)) < tol);
    {
      auto gamma = randt({6}, rng, 0.5);
      auto beta = randt({6}, rng, 0.5);
      CHECK(grad_check(
                [&](const Tensor<double>& x) {
                  auto y = layer_norm(x, gamma, beta);
                  return sum(mul(y, y));
                },
                randt({4, 6}, rng)) < tol);
      // and through gamma/beta themselves
      auto x0 = randt({4, 6}, rng);
      CHECK(grad_check(
                [&](const Tensor<double>& g) {
                  auto y = layer_norm(x0, g, beta);
                  return sum(mul(y, y));
                },
                gamma) < tol);
      CHECK(grad_check(
                [&](const Tensor<double>& bb) {
                  auto y = layer_norm(x0, gamma, bb);
                  return sum(mul(y, y));
                },
                beta) < tol);
    }
    for (auto activation : {0, 1, 2}) {
      CHECK(grad_check(
                [&](const Tensor<double>& x) {
                  auto y = activation == 0 ? sigmoid(x) : activation == 1 ? tanh(x) : gelu(x);
                  return sum(mul(y, y));
                },
                randt({7}, rng)) < tol);
    }
    {
      auto w = randt({2, 3, 3, 3}, rng, 0.5);
      auto bias = randt({2}, rng, 0.5);
      auto x0 = randt({2, 3, 4, 4}, rng);
      CHECK(grad_check(
                [&](const Tensor<double>& x) {
                  auto y = conv2d(x, w, bias);
                  return sum(mul(y, y));
                },
                x0) < tol);
      CHECK(grad_check(
                [&](const Tensor<double>& ww) {
                  auto y = conv2d(x0, ww, bias);
                  return sum(mul(y, y));
                },
                w) < tol);
      CHECK(grad_check(
                [&](const Tensor<double>& bb) {
                  auto y = conv2d(x0, w, bb);
                  return sum(mul(y, y));
                },
                bias) < tol);
    }
    {
      // broadcast add reduces gradients over the broadcast axes
      auto big = randt({3, 2, 4}, rng);
      CHECK(grad_check(
                [&](const Tensor<double>& small) {
                  auto y = add(big, small);
                  return sum(mul(y, y));
                },
                randt({4}, rng)) < tol);
      CHECK(grad_check(
                [&](const Tensor<double>& small) {
                  auto y = mul(big, small);
                  return sum(mul(y, y));
                },
                randt({2, 1}, rng)) < tol);
    }
    {
      auto other = randt({2, 3, 4}, rng);
      CHECK(grad_check(
                [&](const Tensor<double>& x) {
                  auto y = concat(x, other, 1);
                  return sum(mul(y, y));
                },
                randt({2, 2, 4}, rng)) < tol);
      CHECK(grad_check(
                [](const Tensor<double>& x) {
                  auto y = permute(x, {1, 0, 2});
                  return sum(mul(y, y));
                },
                randt({2, 3, 4}, rng)) < tol);
      auto map = std::make_shared<const std::vector<std::size_t>>(
          std::vector<std::size_t>{1, 1, 0, 2});
      CHECK(grad_check(
                [&](const Tensor<double>& x) {
                  auto y = gather_axis(x, 1, map);
                  return sum(mul(y, y));
                },
                randt({2, 3, 2}, rng)) < tol);
    }
  }
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Tensor<double>::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  NoGradGuard guard;
  auto y = sum(mul(x, x));
  CHECK_FALSE(y.requires_grad());
}
