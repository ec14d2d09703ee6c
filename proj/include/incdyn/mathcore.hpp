#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "incdyn/error.hpp"

namespace incdyn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { tanh, relu };

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

/// Fully connected network. The activation is applied after every layer
/// except the last, which is affine.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;

  Eigen::Index in_dim() const { return layers.front().weight.cols(); }
  Eigen::Index out_dim() const { return layers.back().weight.rows(); }
  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Per-parameter partial derivatives, shape-congruent with an MlpParams.
struct Gradient {
  std::vector<DenseLayer> layers;

  static Gradient zeros_like(const MlpParams& params);
  Gradient& operator+=(const Gradient& other);
  Gradient& operator*=(double factor);
  bool all_finite() const;
};

/// Intermediate activations kept for the backward pass. activations[0] is
/// the input batch, activations.back() the network output.
struct ForwardCache {
  std::vector<Mat> activations;
};

struct BackwardResult {
  Gradient grad;
  Mat input_grad;  // in x batch
};

Mat tanh_elementwise(const Mat& x);

Vec mlp_forward(const MlpParams& params, const Vec& input);

// Batched variants work column-wise: one sample per column.
Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs);
Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs, ForwardCache& cache);

/// Reverse-mode gradient of sum_j <upstream_j, output_j> with respect to the
/// parameters and the inputs.
BackwardResult mlp_backward_batch(const MlpParams& params, const ForwardCache& cache,
                                  const Mat& upstream);

Gradient mlp_backward(const MlpParams& params, const Vec& input, const Vec& upstream);

/// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights, zero biases.
MlpParams init_params(std::span<const int> layer_sizes, std::uint64_t seed,
                      Activation activation = Activation::tanh);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Gradient m;
  Gradient v;
  std::int64_t step = 0;

  static AdamState for_params(const MlpParams& params, AdamConfig config = {});
};

/// One bias-corrected Adam descent step, in place. Throws Errc::diverged on a
/// non-finite gradient, leaving state and params untouched.
void adam_step(AdamState& state, MlpParams& params, const Gradient& grad);

/// target <- tau * online + (1 - tau) * target
void polyak_update(MlpParams& target, const MlpParams& online, double tau);

}  // namespace incdyn
