#pragma once

// Reference implementations kept independent of src/: plain loops, no Eigen
// expressions, no shared helpers.

#include <cmath>
#include <vector>

#include "incdyn/mathcore.hpp"

namespace incdyn::testing {

inline std::vector<double> oracle_forward(const MlpParams& params, const std::vector<double>& x) {
  std::vector<double> current = x;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& W = params.layers[k].weight;
    const auto& b = params.layers[k].bias;
    std::vector<double> next(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double acc = b(i);
      for (Eigen::Index j = 0; j < W.cols(); ++j) acc += W(i, j) * current[static_cast<std::size_t>(j)];
      if (k + 1 < params.layers.size()) {
        acc = params.activation == Activation::tanh ? std::tanh(acc) : (acc > 0.0 ? acc : 0.0);
      }
      next[static_cast<std::size_t>(i)] = acc;
    }
    current = std::move(next);
  }
  return current;
}

inline double oracle_inner(const MlpParams& params, const std::vector<double>& x,
                           const std::vector<double>& upstream) {
  const auto y = oracle_forward(params, x);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * upstream[i];
  return acc;
}

/// Central finite differences of <upstream, f(x)> for every parameter,
/// laid out like a Gradient.
inline Gradient finite_difference_gradient(MlpParams params, const std::vector<double>& x,
                                           const std::vector<double>& upstream, double h) {
  Gradient g = Gradient::zeros_like(params);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto perturb = [&](double& slot) {
      const double saved = slot;
      slot = saved + h;
      const double plus = oracle_inner(params, x, upstream);
      slot = saved - h;
      const double minus = oracle_inner(params, x, upstream);
      slot = saved;
      return (plus - minus) / (2.0 * h);
    };
    auto& layer = params.layers[k];
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        g.layers[k].weight(i, j) = perturb(layer.weight(i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) g.layers[k].bias(i) = perturb(layer.bias(i));
  }
  return g;
}

/// Textbook scalar Adam, written out step by step.
struct ScalarAdam {
  double lr, b1, b2, eps;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double param, double grad) {
    t += 1;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(b1, t));
    const double v_hat = v / (1.0 - std::pow(b2, t));
    return param - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

}  // namespace incdyn::testing
