#include <doctest.h>

#include <array>
#include <cstring>

#include "incdyn/mathcore.hpp"
#include "support/mlp_oracle.hpp"
#include "support/test_util.hpp"

using namespace incdyn;
using namespace incdyn::testing;

namespace {

MlpParams hand_set_two_layer() {
  MlpParams p;
  p.activation = Activation::tanh;
  Mat W1(3, 1);
  W1 << 0.7, -1.3, 0.25;
  Vec b1(3);
  b1 << 0.1, 0.0, -0.4;
  Mat W2(1, 3);
  W2 << 1.5, 0.5, -2.0;
  Vec b2(1);
  b2 << 0.3;
  p.layers = {{W1, b1}, {W2, b2}};
  return p;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("mlp_forward: zero network maps everything to zero") {
  const std::array<int, 3> sizes{3, 5, 2};
  MlpParams p = init_params(sizes, 1);
  for (auto& layer : p.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  Vec x(3);
  x << 4.0, -7.0, 0.5;
  CHECK(mlp_forward(p, x).isZero(0.0));
}

TEST_CASE("mlp_forward: single identity layer") {
  MlpParams p;
  p.layers = {{Mat::Identity(2, 2), Vec::Zero(2)}};
  Vec x(2);
  x << 1.0, -2.0;
  const Vec y = mlp_forward(p, x);
  CHECK(y(0) == 1.0);
  CHECK(y(1) == -2.0);
}

TEST_CASE("mlp_forward: hand-set two-layer net against the loop oracle") {
  const MlpParams p = hand_set_two_layer();
  Vec x(1);
  x << 0.5;
  const double expected = oracle_forward(p, {0.5})[0];
  // independent arithmetic: 1.5 tanh(0.45) + 0.5 tanh(-0.65) - 2 tanh(-0.275) + 0.3
  const double by_hand =
      1.5 * std::tanh(0.45) + 0.5 * std::tanh(-0.65) - 2.0 * std::tanh(-0.275) + 0.3;
  CHECK(expected == doctest::Approx(by_hand).epsilon(1e-15));
  CHECK(mlp_forward(p, x)(0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("mlp_forward rejects a dimension mismatch") {
  const std::array<int, 2> sizes{3, 1};
  const MlpParams p = init_params(sizes, 1);
  try {
    mlp_forward(p, Vec::Zero(2));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::contract_violation);
  }
}

TEST_CASE("mlp_forward is pure") {
  Rng rng(3);
  const std::array<int, 4> sizes{4, 16, 16, 3};
  const MlpParams p = init_params(sizes, 9);
  const Vec x = random_vec(rng, 4);
  CHECK(bitwise_equal(mlp_forward(p, x), mlp_forward(p, x)));
  Mat batch = random_mat(rng, 4, 7);
  batch.col(2) = x;
  CHECK(bitwise_equal(mlp_forward_batch(p, batch), mlp_forward_batch(p, batch)));
}

TEST_CASE("mlp_backward: zero upstream gives a zero gradient") {
  const std::array<int, 3> sizes{3, 8, 2};
  const MlpParams p = init_params(sizes, 4);
  Rng rng(1);
  const Gradient g = mlp_backward(p, random_vec(rng, 3), Vec::Zero(2));
  for (const auto& layer : g.layers) {
    CHECK(layer.weight.isZero(0.0));
    CHECK(layer.bias.isZero(0.0));
  }
}

TEST_CASE("mlp_backward: single linear layer is u x^T and u") {
  Rng rng(2);
  MlpParams p;
  p.layers = {{random_mat(rng, 2, 3), random_vec(rng, 2)}};
  const Vec x = random_vec(rng, 3);
  const Vec u = random_vec(rng, 2);
  const Gradient g = mlp_backward(p, x, u);
  CHECK((g.layers[0].weight - u * x.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((g.layers[0].bias - u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp_backward matches central finite differences on random small nets") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int depth = 1 + trial % 3;
    std::vector<int> sizes{1 + static_cast<int>(rng() % 5)};
    for (int k = 0; k < depth; ++k) sizes.push_back(1 + static_cast<int>(rng() % 12));
    const Activation act = trial % 2 ? Activation::tanh : Activation::relu;
    const MlpParams p = init_params(sizes, rng(), act);
    const Vec x = random_vec(rng, sizes.front());
    const Vec u = random_vec(rng, sizes.back());
    const Gradient analytic = mlp_backward(p, x, u);
    const Gradient numeric = finite_difference_gradient(
        p, std::vector<double>(x.data(), x.data() + x.size()),
        std::vector<double>(u.data(), u.data() + u.size()), 1e-5);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      for (Eigen::Index i = 0; i < analytic.layers[k].weight.size(); ++i)
        CHECK(rel_error(analytic.layers[k].weight.data()[i], numeric.layers[k].weight.data()[i]) < 1e-4);
      for (Eigen::Index i = 0; i < analytic.layers[k].bias.size(); ++i)
        CHECK(rel_error(analytic.layers[k].bias(i), numeric.layers[k].bias(i)) < 1e-4);
    }
  }
}

TEST_CASE("batched backward sums per-sample gradients and returns input gradients") {
  Rng rng(5);
  const std::array<int, 3> sizes{3, 6, 2};
  const MlpParams p = init_params(sizes, 21);
  const Mat X = random_mat(rng, 3, 4);
  const Mat U = random_mat(rng, 2, 4);
  ForwardCache cache;
  mlp_forward_batch(p, X, cache);
  const BackwardResult batched = mlp_backward_batch(p, cache, U);
  Gradient summed = Gradient::zeros_like(p);
  for (int b = 0; b < 4; ++b) summed += mlp_backward(p, X.col(b), U.col(b));
  for (std::size_t k = 0; k < p.layers.size(); ++k)
    CHECK((batched.grad.layers[k].weight - summed.layers[k].weight).cwiseAbs().maxCoeff() < 1e-13);

  // input gradient against finite differences on the first sample
  const double h = 1e-6;
  for (int j = 0; j < 3; ++j) {
    Vec xp = X.col(0), xm = X.col(0);
    xp(j) += h;
    xm(j) -= h;
    const double fd = (U.col(0).dot(mlp_forward(p, xp)) - U.col(0).dot(mlp_forward(p, xm))) / (2 * h);
    CHECK(rel_error(batched.input_grad(j, 0), fd) < 1e-6);
  }
}

TEST_CASE("adam_step: zero gradient leaves parameters unchanged and counts the step") {
  const std::array<int, 3> sizes{2, 4, 1};
  MlpParams p = init_params(sizes, 3);
  const MlpParams before = p;
  AdamState state = AdamState::for_params(p);
  adam_step(state, p, Gradient::zeros_like(p));
  CHECK(state.step == 1);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    CHECK(bitwise_equal(p.layers[k].weight, before.layers[k].weight));
    CHECK(bitwise_equal(p.layers[k].bias, before.layers[k].bias));
  }
}

TEST_CASE("adam_step: first step of a scalar parameter is -lr g / (|g| + eps)") {
  MlpParams p;
  p.layers = {{Mat::Constant(1, 1, 0.75), Vec::Zero(1)}};
  AdamState state = AdamState::for_params(p);
  Gradient g = Gradient::zeros_like(p);
  const double grad = -0.3;
  g.layers[0].weight(0, 0) = grad;
  adam_step(state, p, g);
  const auto& c = state.config;
  CHECK(p.layers[0].weight(0, 0) ==
        doctest::Approx(0.75 - c.lr * grad / (std::abs(grad) + c.eps)).epsilon(1e-14));
}

TEST_CASE("adam_step: three steps on a quadratic follow the scalar recurrence") {
  // loss = 0.5 * k * (w - c)^2
  const double k = 2.5, c = -1.0;
  MlpParams p;
  p.layers = {{Mat::Constant(1, 1, 0.4), Vec::Zero(1)}};
  AdamState state = AdamState::for_params(p, {.lr = 0.05});
  ScalarAdam oracle{0.05, 0.9, 0.999, 1e-8};
  double w = 0.4;
  for (int t = 0; t < 3; ++t) {
    Gradient g = Gradient::zeros_like(p);
    g.layers[0].weight(0, 0) = k * (p.layers[0].weight(0, 0) - c);
    adam_step(state, p, g);
    w = oracle.step(w, k * (w - c));
    CHECK(p.layers[0].weight(0, 0) == doctest::Approx(w).epsilon(1e-14));
  }
  CHECK(state.step == 3);
}

TEST_CASE("adam_step rejects non-finite gradients without touching state") {
  const std::array<int, 2> sizes{2, 1};
  MlpParams p = init_params(sizes, 1);
  const MlpParams before = p;
  AdamState state = AdamState::for_params(p);
  Gradient g = Gradient::zeros_like(p);
  g.layers[0].weight(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(state, p, g);
    FAIL("expected divergence error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::diverged);
  }
  CHECK(state.step == 0);
  CHECK(bitwise_equal(p.layers[0].weight, before.layers[0].weight));
}

TEST_CASE("adam_step is deterministic") {
  Rng rng(8);
  const std::array<int, 3> sizes{3, 5, 2};
  MlpParams p1 = init_params(sizes, 2);
  MlpParams p2 = p1;
  AdamState s1 = AdamState::for_params(p1), s2 = AdamState::for_params(p2);
  const Gradient g = mlp_backward(p1, random_vec(rng, 3), random_vec(rng, 2));
  adam_step(s1, p1, g);
  adam_step(s2, p2, g);
  for (std::size_t k = 0; k < p1.layers.size(); ++k) {
    CHECK(bitwise_equal(p1.layers[k].weight, p2.layers[k].weight));
    CHECK(bitwise_equal(s1.v.layers[k].weight, s2.v.layers[k].weight));
  }
}

TEST_CASE("init_params: determinism, shapes and the fan-in bound") {
  const std::array<int, 3> sizes{2, 4, 1};
  const MlpParams a = init_params(sizes, 42);
  const MlpParams b = init_params(sizes, 42);
  REQUIRE(a.layers.size() == 2);
  CHECK(a.layers[0].weight.rows() == 4);
  CHECK(a.layers[0].weight.cols() == 2);
  CHECK(a.layers[0].bias.size() == 4);
  CHECK(a.layers[1].weight.rows() == 1);
  CHECK(a.layers[1].weight.cols() == 4);
  CHECK(a.layers[1].bias.size() == 1);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(bitwise_equal(a.layers[k].weight, b.layers[k].weight));
    CHECK(a.layers[k].bias.isZero(0.0));
  }
  CHECK_FALSE(bitwise_equal(init_params(sizes, 43).layers[0].weight, a.layers[0].weight));

  const std::array<int, 2> wide{100, 100};
  const Mat W = init_params(wide, 7).layers[0].weight;
  REQUIRE(W.size() == 10000);
  CHECK(W.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(W.cwiseAbs().maxCoeff() > 0.099);  // the bound is actually reached
  CHECK(std::abs(W.mean()) < 0.003);       // zero mean, 5 sigma of U(-0.1, 0.1)/sqrt(1e4)
}

TEST_CASE("init_params rejects bad sizes") {
  const std::array<int, 1> one{3};
  const std::array<int, 3> zero{3, 0, 1};
  CHECK_THROWS_AS(init_params(one, 1), Error);
  CHECK_THROWS_AS(init_params(zero, 1), Error);
}

TEST_CASE("tanh_elementwise agrees with std::tanh") {
  Rng rng(4);
  const Mat x = random_mat(rng, 7, 50, 30.0);
  const Mat y = tanh_elementwise(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(std::abs(y.data()[i] - std::tanh(x.data()[i])) < 1e-15);
}
