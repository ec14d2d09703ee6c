#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "incdyn/envs.hpp"
#include "incdyn/mathcore.hpp"
#include "incdyn/replay.hpp"

namespace incdyn {

// Incremental dynamics model
//
//   s_{t+1} ~= s_t + L(s_t, a_{t-1}[, a_t]) * (a_t - a_{t-1})
//
// A network produces the n x m matrix L. Only L is learned; the state
// carry-over and the increment structure are fixed. With a zero increment
// the prediction is s_t regardless of L.

enum class LMode { full, diagonal };

/// What the L network sees besides the encoded state.
enum class ModelInput {
  prev_action,             // (s_t, a_{t-1})
  prev_action_and_action,  // (s_t, a_{t-1}, a_t)
};

struct ModelArch {
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::tanh;
  LMode mode = LMode::full;
  ModelInput input = ModelInput::prev_action_and_action;
};

struct IncrementalModel {
  MlpParams net;
  LMode mode = LMode::full;
  ModelInput input = ModelInput::prev_action_and_action;
  std::optional<Mat> prior_L0;  // residual form: L = prior_L0 + net(.)
  int n = 0;
  int m = 0;
  std::vector<bool> angular;  // state encoding, see features()

  int input_dim() const;
  int output_dim() const { return mode == LMode::full ? n * m : n; }
};

/// With a prior the final layer starts at zero, so the initial model is
/// exactly L = prior_L0.
IncrementalModel make_model(const EnvSpec& env, const ModelArch& arch, std::uint64_t seed,
                            std::optional<Mat> prior_L0 = std::nullopt);

void validate(const IncrementalModel& model);

/// Columns are samples.
struct ModelBatch {
  Mat s;
  Mat a_prev;
  Mat a;
  Mat s_next;

  Eigen::Index size() const { return s.cols(); }
  static ModelBatch from(const std::vector<Transition>& transitions);
  static ModelBatch from(const ReplayBuffer& buf, const std::vector<std::size_t>& slots);
};

/// Network input rows for a batch of (s, a_prev, a) columns.
Mat model_inputs(const IncrementalModel& model, const Mat& s, const Mat& a_prev, const Mat& a);

/// `a` is ignored for ModelInput::prev_action models.
Mat eval_L(const IncrementalModel& model, const Vec& s, const Vec& a_prev, const Vec& a);
inline Mat eval_L(const IncrementalModel& model, const Vec& s, const Vec& a_prev) {
  return eval_L(model, s, a_prev, a_prev);
}

/// Embeds a raw network output as the n x m matrix (before the prior).
Mat embed_output(const IncrementalModel& model, const Vec& out);

Vec predict(const IncrementalModel& model, const Vec& s, const Vec& a_prev, const Vec& a);
Mat predict_batch(const IncrementalModel& model, const Mat& s, const Mat& a_prev, const Mat& a);

/// Mean over the batch of ||s_next - prediction||_2 (unsquared).
double model_loss(const IncrementalModel& model, const ModelBatch& batch);

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

/// The norm's subgradient at a zero residual is taken as zero.
LossAndGradient model_loss_and_gradient(const IncrementalModel& model, const ModelBatch& batch);

/// Cosine decay of the learning rate from its configured value to
/// `final_fraction` of it over the run; 1.0 keeps it constant.
struct LrSchedule {
  double final_fraction = 1.0;
};

struct ModelTrainResult {
  double final_loss = 0.0;
  int steps = 0;
  std::vector<double> losses;  // per step, before the update
};

/// `steps` Adam descent steps on minibatches drawn uniformly from `buf`.
/// With steps = 0 the reported loss is that of one sampled batch.
ModelTrainResult train_model(IncrementalModel& model, const ReplayBuffer& buf, int steps,
                             int batch_size, AdamState& opt, std::uint64_t seed,
                             LrSchedule schedule = {});

struct PredictionError {
  double mean_error = 0.0;        // mean ||s_next - prediction||_2
  double mean_delta = 0.0;        // mean ||s_next - s||_2
  double max_error_inf = 0.0;     // worst per-sample infinity norm
  double relative() const { return mean_delta > 0.0 ? mean_error / mean_delta : 0.0; }
};

PredictionError prediction_error(const IncrementalModel& model, const ModelBatch& batch);

/// h_hat = s - L * a_prev, the unknown-dynamics term carried over from the
/// previous step.
Vec estimate_h(const Vec& s, const Vec& a_prev, const Mat& L);

}  // namespace incdyn
