#include "incdyn/mathcore.hpp"

#include <cmath>
#include <string>

#include "incdyn/rng.hpp"

namespace incdyn {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::contract_violation: return "contract violation";
    case Errc::no_data: return "no data";
    case Errc::diverged: return "diverged";
    case Errc::non_stabilizable: return "non-stabilizable";
    case Errc::missing_file: return "missing file";
    case Errc::malformed_line: return "malformed line";
    case Errc::unknown_key: return "unknown key";
    case Errc::out_of_range: return "out of range";
    case Errc::io: return "i/o error";
  }
  return "unknown";
}

namespace {

void apply_activation(Activation act, Mat& z) {
  if (act == Activation::tanh) {
    z = tanh_elementwise(z);
  } else {
    z = z.cwiseMax(0.0);
  }
}

// Derivative expressed through the activation output y.
void multiply_activation_derivative(Activation act, const Mat& y, Mat& delta) {
  if (act == Activation::tanh) {
    delta.array() *= 1.0 - y.array().square();
  } else {
    delta.array() *= (y.array() > 0.0).cast<double>();
  }
}

}  // namespace

Mat tanh_elementwise(const Mat& x) {
  // Eigen's double tanh is scalar; exp is vectorized. Absolute error ~1e-16.
  return 1.0 - 2.0 / ((2.0 * x.array().cwiseMin(40.0).cwiseMax(-40.0)).exp() + 1.0);
}

std::size_t MlpParams::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers) count += layer.weight.size() + layer.bias.size();
  return count;
}

bool MlpParams::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

Gradient Gradient::zeros_like(const MlpParams& params) {
  Gradient g;
  g.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    g.layers.push_back({Mat::Zero(layer.weight.rows(), layer.weight.cols()),
                        Vec::Zero(layer.bias.size())});
  }
  return g;
}

Gradient& Gradient::operator+=(const Gradient& other) {
  require(other.layers.size() == layers.size(), "gradient layer count mismatch");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].weight += other.layers[k].weight;
    layers[k].bias += other.layers[k].bias;
  }
  return *this;
}

Gradient& Gradient::operator*=(double factor) {
  for (auto& layer : layers) {
    layer.weight *= factor;
    layer.bias *= factor;
  }
  return *this;
}

bool Gradient::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs, ForwardCache& cache) {
  require(!params.layers.empty(), "network has no layers");
  require(inputs.rows() == params.in_dim(),
          "input dimension " + std::to_string(inputs.rows()) + " != network input " +
              std::to_string(params.in_dim()));
  cache.activations.resize(params.layers.size() + 1);
  cache.activations[0] = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    Mat& out = cache.activations[k + 1];
    out.noalias() = layer.weight * cache.activations[k];
    out.colwise() += layer.bias;
    if (k + 1 < params.layers.size()) apply_activation(params.activation, out);
  }
  return cache.activations.back();
}

Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs) {
  require(!params.layers.empty(), "network has no layers");
  require(inputs.rows() == params.in_dim(), "input dimension mismatch");
  Mat current = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    Mat next = layer.weight * current;
    next.colwise() += layer.bias;
    if (k + 1 < params.layers.size()) apply_activation(params.activation, next);
    current = std::move(next);
  }
  return current;
}

Vec mlp_forward(const MlpParams& params, const Vec& input) {
  return mlp_forward_batch(params, Mat(input)).col(0);
}

BackwardResult mlp_backward_batch(const MlpParams& params, const ForwardCache& cache,
                                  const Mat& upstream) {
  const std::size_t depth = params.layers.size();
  require(cache.activations.size() == depth + 1, "forward cache does not match network");
  require(upstream.rows() == params.out_dim() &&
              upstream.cols() == cache.activations[0].cols(),
          "upstream gradient shape mismatch");

  BackwardResult result;
  result.grad.layers.resize(depth);
  Mat delta = upstream;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = params.layers[k];
    const Mat& input = cache.activations[k];
    result.grad.layers[k].weight.noalias() = delta * input.transpose();
    result.grad.layers[k].bias = delta.rowwise().sum();
    Mat back = layer.weight.transpose() * delta;
    if (k > 0) multiply_activation_derivative(params.activation, input, back);
    delta = std::move(back);
  }
  result.input_grad = std::move(delta);
  return result;
}

Gradient mlp_backward(const MlpParams& params, const Vec& input, const Vec& upstream) {
  ForwardCache cache;
  mlp_forward_batch(params, Mat(input), cache);
  require(upstream.size() == params.out_dim(), "upstream dimension mismatch");
  return mlp_backward_batch(params, cache, Mat(upstream)).grad;
}

MlpParams init_params(std::span<const int> layer_sizes, std::uint64_t seed,
                      Activation activation) {
  require(layer_sizes.size() >= 2, "need at least input and output sizes");
  for (int size : layer_sizes) require(size > 0, "layer sizes must be positive");

  Rng rng(seed);
  MlpParams params;
  params.activation = activation;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    const int fan_in = layer_sizes[k];
    const int fan_out = layer_sizes[k + 1];
    const double bound = std::sqrt(1.0 / fan_in);
    DenseLayer layer{Mat(fan_out, fan_in), Vec::Zero(fan_out)};
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
        layer.weight(i, j) = uniform(rng, -bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

AdamState AdamState::for_params(const MlpParams& params, AdamConfig config) {
  return {config, Gradient::zeros_like(params), Gradient::zeros_like(params), 0};
}

void adam_step(AdamState& state, MlpParams& params, const Gradient& grad) {
  require(grad.layers.size() == params.layers.size() &&
              state.m.layers.size() == params.layers.size(),
          "adam: gradient/state shape mismatch");
  if (!grad.all_finite()) throw Error(Errc::diverged, "non-finite gradient in adam step");

  const auto& c = state.config;
  state.step += 1;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    require(param.size() == g.size(), "adam: parameter/gradient size mismatch");
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.lr * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + c.eps);
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    update(params.layers[k].weight, state.m.layers[k].weight, state.v.layers[k].weight,
           grad.layers[k].weight);
    update(params.layers[k].bias, state.m.layers[k].bias, state.v.layers[k].bias,
           grad.layers[k].bias);
  }
}

void polyak_update(MlpParams& target, const MlpParams& online, double tau) {
  require(target.layers.size() == online.layers.size(), "polyak: shape mismatch");
  for (std::size_t k = 0; k < target.layers.size(); ++k) {
    target.layers[k].weight = tau * online.layers[k].weight + (1.0 - tau) * target.layers[k].weight;
    target.layers[k].bias = tau * online.layers[k].bias + (1.0 - tau) * target.layers[k].bias;
  }
}

}  // namespace incdyn
