#include "incdyn/incmodel.hpp"

#include <cmath>
#include <numbers>

namespace incdyn {

int IncrementalModel::input_dim() const {
  int state_features = 0;
  for (bool is_angle : angular) state_features += is_angle ? 2 : 1;
  return state_features + m + (input == ModelInput::prev_action_and_action ? m : 0);
}

void validate(const IncrementalModel& model) {
  require(model.n >= 1 && model.m >= 1, "model dimensions must be >= 1");
  require(static_cast<int>(model.angular.size()) == model.n, "model angular mask size");
  require(model.mode == LMode::full || model.n == model.m,
          "diagonal mode requires a square L (n == m)");
  require(!model.net.layers.empty() && model.net.in_dim() == model.input_dim(),
          "model network input dimension mismatch");
  require(model.net.out_dim() == model.output_dim(), "model network output does not match mode");
  if (model.prior_L0) {
    require(model.prior_L0->rows() == model.n && model.prior_L0->cols() == model.m,
            "prior_L0 must be n x m");
  }
}

IncrementalModel make_model(const EnvSpec& env, const ModelArch& arch, std::uint64_t seed,
                            std::optional<Mat> prior_L0) {
  IncrementalModel model;
  model.mode = arch.mode;
  model.input = arch.input;
  model.n = env.state_dim;
  model.m = env.action_dim;
  model.angular = env.angular;
  model.prior_L0 = std::move(prior_L0);
  require(model.mode == LMode::full || model.n == model.m,
          "diagonal mode requires a square L (n == m)");

  std::vector<int> sizes{model.input_dim()};
  sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
  sizes.push_back(model.output_dim());
  model.net = init_params(sizes, seed, arch.activation);
  if (model.prior_L0) {
    model.net.layers.back().weight.setZero();
    model.net.layers.back().bias.setZero();
  }
  validate(model);
  return model;
}

ModelBatch ModelBatch::from(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw Error(Errc::no_data, "empty model batch");
  const auto n = transitions.front().s.size();
  const auto m = transitions.front().a.size();
  const auto count = static_cast<Eigen::Index>(transitions.size());
  ModelBatch batch{Mat(n, count), Mat(m, count), Mat(m, count), Mat(n, count)};
  for (Eigen::Index i = 0; i < count; ++i) {
    const Transition& t = transitions[static_cast<std::size_t>(i)];
    batch.s.col(i) = t.s;
    batch.a_prev.col(i) = t.a_prev;
    batch.a.col(i) = t.a;
    batch.s_next.col(i) = t.s_next;
  }
  return batch;
}

ModelBatch ModelBatch::from(const ReplayBuffer& buf, const std::vector<std::size_t>& slots) {
  if (slots.empty()) throw Error(Errc::no_data, "empty model batch");
  const Transition& first = buf.slot(slots.front());
  const auto count = static_cast<Eigen::Index>(slots.size());
  ModelBatch batch{Mat(first.s.size(), count), Mat(first.a.size(), count),
                   Mat(first.a.size(), count), Mat(first.s.size(), count)};
  for (Eigen::Index i = 0; i < count; ++i) {
    const Transition& t = buf.slot(slots[static_cast<std::size_t>(i)]);
    batch.s.col(i) = t.s;
    batch.a_prev.col(i) = t.a_prev;
    batch.a.col(i) = t.a;
    batch.s_next.col(i) = t.s_next;
  }
  return batch;
}

Mat model_inputs(const IncrementalModel& model, const Mat& s, const Mat& a_prev, const Mat& a) {
  require(s.rows() == model.n && a_prev.rows() == model.m && a.rows() == model.m &&
              s.cols() == a_prev.cols() && s.cols() == a.cols(),
          "model query dimension mismatch");
  const Mat encoded = features_batch(model.angular, s);
  Mat in(model.input_dim(), s.cols());
  in.topRows(encoded.rows()) = encoded;
  in.middleRows(encoded.rows(), model.m) = a_prev;
  if (model.input == ModelInput::prev_action_and_action) in.bottomRows(model.m) = a;
  return in;
}

Mat embed_output(const IncrementalModel& model, const Vec& out) {
  require(out.size() == model.output_dim(), "network output size does not match mode");
  Mat L = Mat::Zero(model.n, model.m);
  if (model.mode == LMode::full) {
    for (int i = 0; i < model.n; ++i)
      for (int j = 0; j < model.m; ++j) L(i, j) = out(i * model.m + j);
  } else {
    L.diagonal() = out;
  }
  return L;
}

Mat eval_L(const IncrementalModel& model, const Vec& s, const Vec& a_prev, const Vec& a) {
  require(s.allFinite() && a_prev.allFinite() && a.allFinite(), "non-finite model query");
  const Vec out = mlp_forward(model.net, model_inputs(model, s, a_prev, a).col(0));
  if (!out.allFinite()) throw Error(Errc::diverged, "model network produced non-finite output");
  Mat L = embed_output(model, out);
  if (model.prior_L0) L += *model.prior_L0;
  return L;
}

Vec predict(const IncrementalModel& model, const Vec& s, const Vec& a_prev, const Vec& a) {
  return s + eval_L(model, s, a_prev, a) * (a - a_prev);
}

namespace {

// increment-weighted network contribution: delta_i = sum_j L_ij * da_j
Mat apply_L(const IncrementalModel& model, const Mat& out, const Mat& da) {
  const Eigen::Index batch = da.cols();
  Mat delta(model.n, batch);
  if (model.mode == LMode::full) {
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int i = 0; i < model.n; ++i)
        delta(i, b) = out.col(b).segment(i * model.m, model.m).dot(da.col(b));
  } else {
    delta = out.cwiseProduct(da);
  }
  if (model.prior_L0) delta += *model.prior_L0 * da;
  return delta;
}

}  // namespace

Mat predict_batch(const IncrementalModel& model, const Mat& s, const Mat& a_prev, const Mat& a) {
  const Mat out = mlp_forward_batch(model.net, model_inputs(model, s, a_prev, a));
  if (!out.allFinite()) throw Error(Errc::diverged, "model network produced non-finite output");
  return s + apply_L(model, out, a - a_prev);
}

double model_loss(const IncrementalModel& model, const ModelBatch& batch) {
  if (batch.size() == 0) throw Error(Errc::no_data, "model loss on an empty batch");
  const Mat residual = batch.s_next - predict_batch(model, batch.s, batch.a_prev, batch.a);
  return residual.colwise().norm().sum() / static_cast<double>(batch.size());
}

LossAndGradient model_loss_and_gradient(const IncrementalModel& model, const ModelBatch& batch) {
  if (batch.size() == 0) throw Error(Errc::no_data, "model loss on an empty batch");
  const Eigen::Index count = batch.size();
  ForwardCache cache;
  const Mat out =
      mlp_forward_batch(model.net, model_inputs(model, batch.s, batch.a_prev, batch.a), cache);
  if (!out.allFinite()) throw Error(Errc::diverged, "model network produced non-finite output");
  const Mat da = batch.a - batch.a_prev;
  const Mat residual = batch.s_next - (batch.s + apply_L(model, out, da));

  LossAndGradient result;
  // d loss / d prediction = -r / ||r|| / count
  Mat d_pred(model.n, count);
  double total = 0.0;
  for (Eigen::Index b = 0; b < count; ++b) {
    const double norm = residual.col(b).norm();
    total += norm;
    if (norm > 0.0) {
      d_pred.col(b) = -residual.col(b) / (norm * static_cast<double>(count));
    } else {
      d_pred.col(b).setZero();
    }
  }
  result.loss = total / static_cast<double>(count);
  if (!std::isfinite(result.loss)) throw Error(Errc::diverged, "non-finite model loss");

  Mat upstream(model.output_dim(), count);
  if (model.mode == LMode::full) {
    for (Eigen::Index b = 0; b < count; ++b)
      for (int i = 0; i < model.n; ++i)
        upstream.col(b).segment(i * model.m, model.m) = d_pred(i, b) * da.col(b);
  } else {
    upstream = d_pred.cwiseProduct(da);
  }
  result.grad = mlp_backward_batch(model.net, cache, upstream).grad;
  return result;
}

ModelTrainResult train_model(IncrementalModel& model, const ReplayBuffer& buf, int steps,
                             int batch_size, AdamState& opt, std::uint64_t seed,
                             LrSchedule schedule) {
  if (buf.empty()) throw Error(Errc::no_data, "model training needs a non-empty buffer");
  require(steps >= 0 && batch_size >= 1, "steps must be >= 0 and batch_size >= 1");
  validate(model);

  Rng rng(seed);
  const double base_lr = opt.config.lr;
  ModelTrainResult result;
  result.losses.reserve(static_cast<std::size_t>(steps));
  if (steps == 0) {
    const auto batch = ModelBatch::from(buf, buf.sample_indices(batch_size, rng));
    result.final_loss = model_loss(model, batch);
    return result;
  }
  for (int k = 0; k < steps; ++k) {
    const auto batch = ModelBatch::from(buf, buf.sample_indices(batch_size, rng));
    auto [loss, grad] = model_loss_and_gradient(model, batch);
    if (schedule.final_fraction != 1.0) {
      const double progress = static_cast<double>(k) / steps;
      const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      opt.config.lr = base_lr * (schedule.final_fraction + (1.0 - schedule.final_fraction) * cosine);
    }
    adam_step(opt, model.net, grad);
    result.losses.push_back(loss);
    result.final_loss = loss;
  }
  opt.config.lr = base_lr;
  result.steps = steps;
  return result;
}

PredictionError prediction_error(const IncrementalModel& model, const ModelBatch& batch) {
  if (batch.size() == 0) throw Error(Errc::no_data, "prediction error on an empty batch");
  const Mat residual = batch.s_next - predict_batch(model, batch.s, batch.a_prev, batch.a);
  const auto count = static_cast<double>(batch.size());
  PredictionError err;
  err.mean_error = residual.colwise().norm().sum() / count;
  err.mean_delta = (batch.s_next - batch.s).colwise().norm().sum() / count;
  err.max_error_inf = residual.cwiseAbs().maxCoeff();
  return err;
}

Vec estimate_h(const Vec& s, const Vec& a_prev, const Mat& L) {
  require(L.rows() == s.size() && L.cols() == a_prev.size(), "estimate_h dimension mismatch");
  return s - L * a_prev;
}

}  // namespace incdyn
