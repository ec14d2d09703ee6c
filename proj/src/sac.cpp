#include "incdyn/sac.hpp"

#include <cmath>
#include <numbers>

namespace incdyn {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|
double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

struct SquashedBatch {
  Mat log_std;      // clamped
  Mat clamp_mask;   // 1 where the raw log_std was inside the clamp range
  Mat std;
  Mat u;
  Mat t;            // tanh(u), the normalized action
  Vec log_prob;
};

SquashedBatch squash_batch(const Mat& out, int m, const Mat& noise, const Vec& scale) {
  SquashedBatch sq;
  const Mat mean = out.topRows(m);
  const Mat raw = out.bottomRows(m);
  sq.log_std = raw.cwiseMax(GaussianPolicy::kLogStdMin).cwiseMin(GaussianPolicy::kLogStdMax);
  sq.clamp_mask = ((raw.array() > GaussianPolicy::kLogStdMin) &&
                   (raw.array() < GaussianPolicy::kLogStdMax))
                      .cast<double>();
  sq.std = sq.log_std.array().exp();
  sq.u = mean + sq.std.cwiseProduct(noise);
  sq.t = tanh_elementwise(sq.u);
  const double log_scale = scale.array().log().sum();
  sq.log_prob.resize(out.cols());
  for (Eigen::Index b = 0; b < out.cols(); ++b) {
    double lp = -log_scale;
    for (int j = 0; j < m; ++j) {
      lp += -0.5 * noise(j, b) * noise(j, b) - sq.log_std(j, b) - kHalfLog2Pi -
            log_one_minus_tanh_sq(sq.u(j, b));
    }
    sq.log_prob(b) = lp;
  }
  return sq;
}

Mat policy_inputs(const GaussianPolicy& policy, const Mat& s) {
  return features_batch(policy.angular, s);
}

Mat critic_inputs(const Critic& critic, const Mat& s, const Mat& normalized_a) {
  const Mat encoded = features_batch(critic.angular, s);
  Mat in(encoded.rows() + normalized_a.rows(), s.cols());
  in.topRows(encoded.rows()) = encoded;
  in.bottomRows(normalized_a.rows()) = normalized_a;
  return in;
}

Mat normalize_actions(const Critic& critic, const Mat& a) {
  return (a.colwise() - critic.action_offset).array().colwise() / critic.action_scale.array();
}

}  // namespace

void validate(const SacHyper& hyper) {
  require(hyper.gamma > 0.0 && hyper.gamma < 1.0, "gamma must lie in (0, 1)");
  require(hyper.tau > 0.0 && hyper.tau <= 1.0, "tau must lie in (0, 1]");
  require(hyper.alpha > 0.0, "alpha must be positive");
  require(hyper.lr_actor > 0.0 && hyper.lr_critic > 0.0, "learning rates must be positive");
  require(hyper.batch_size >= 1, "batch size must be >= 1");
}

GaussianPolicy make_policy(const EnvSpec& env, const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{feature_dim(env)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2 * env.action_dim);
  GaussianPolicy policy;
  policy.net = init_params(sizes, seed, Activation::tanh);
  policy.action_scale = 0.5 * (env.action_high - env.action_low);
  policy.action_offset = 0.5 * (env.action_high + env.action_low);
  policy.angular = env.angular;
  return policy;
}

Critic make_critic(const EnvSpec& env, const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{feature_dim(env) + env.action_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  Critic critic;
  critic.q1 = init_params(sizes, derive_seed(seed, 1), Activation::relu);
  critic.q2 = init_params(sizes, derive_seed(seed, 2), Activation::relu);
  critic.q1_target = critic.q1;
  critic.q2_target = critic.q2;
  critic.action_scale = 0.5 * (env.action_high - env.action_low);
  critic.action_offset = 0.5 * (env.action_high + env.action_low);
  critic.angular = env.angular;
  return critic;
}

Mat standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

ActionSample squash_gaussian(const Vec& mean, const Vec& log_std, const Vec& noise,
                             const Vec& scale, const Vec& offset) {
  const auto m = static_cast<int>(mean.size());
  require(log_std.size() == m && noise.size() == m && scale.size() == m && offset.size() == m,
          "squash_gaussian dimension mismatch");
  Mat out(2 * m, 1);
  out.col(0) << mean, log_std;
  const SquashedBatch sq = squash_batch(out, m, Mat(noise), scale);
  Vec a = offset + scale.cwiseProduct(sq.t.col(0));
  return {std::move(a), sq.log_prob(0)};
}

ActionSample sample_action(const GaussianPolicy& policy, const Vec& s, Rng& rng,
                           bool deterministic) {
  require(s.allFinite(), "policy query with non-finite state");
  const int m = policy.action_dim();
  const Vec out = mlp_forward(policy.net, features_batch(policy.angular, Mat(s)).col(0));
  if (!out.allFinite()) throw Error(Errc::diverged, "policy network produced non-finite output");
  const Vec noise = deterministic ? Vec(Vec::Zero(m)) : Vec(standard_normal(rng, m, 1).col(0));
  ActionSample sample = squash_gaussian(out.head(m), out.tail(m), noise, policy.action_scale,
                                        policy.action_offset);
  // tanh can round to exactly +-1; keep actions inside the box regardless
  const Vec low = policy.action_offset - policy.action_scale;
  const Vec high = policy.action_offset + policy.action_scale;
  sample.a = sample.a.cwiseMax(low).cwiseMin(high);
  return sample;
}

ActionSample sample_action(const GaussianPolicy& policy, const Vec& s, std::uint64_t seed,
                           bool deterministic) {
  Rng rng(seed);
  return sample_action(policy, s, rng, deterministic);
}

SacBatch SacBatch::from(const std::vector<Transition>& transitions) {
  require(!transitions.empty(), "empty SAC batch");
  const auto n = transitions.front().s.size();
  const auto m = transitions.front().a.size();
  const auto count = static_cast<Eigen::Index>(transitions.size());
  SacBatch batch{Mat(n, count), Mat(m, count), Vec(count), Mat(n, count), Vec(count)};
  for (Eigen::Index i = 0; i < count; ++i) {
    const Transition& t = transitions[static_cast<std::size_t>(i)];
    batch.s.col(i) = t.s;
    batch.a.col(i) = t.a;
    batch.reward(i) = t.reward;
    batch.s_next.col(i) = t.s_next;
    batch.done(i) = t.done ? 1.0 : 0.0;
  }
  return batch;
}

SacBatch SacBatch::from_slots(const ReplayBuffer& real, const std::vector<std::size_t>& real_slots,
                              const ReplayBuffer* imagined,
                              const std::vector<std::size_t>& imagined_slots) {
  require(!real_slots.empty() || !imagined_slots.empty(), "empty SAC batch");
  require(imagined_slots.empty() || imagined != nullptr, "imagined slots without a buffer");
  const Transition& first =
      real_slots.empty() ? imagined->slot(imagined_slots.front()) : real.slot(real_slots.front());
  const auto count = static_cast<Eigen::Index>(real_slots.size() + imagined_slots.size());
  SacBatch batch{Mat(first.s.size(), count), Mat(first.a.size(), count), Vec(count),
                 Mat(first.s.size(), count), Vec(count)};
  Eigen::Index col = 0;
  auto fill = [&](const Transition& t) {
    batch.s.col(col) = t.s;
    batch.a.col(col) = t.a;
    batch.reward(col) = t.reward;
    batch.s_next.col(col) = t.s_next;
    batch.done(col) = t.done ? 1.0 : 0.0;
    ++col;
  };
  for (std::size_t slot : real_slots) fill(real.slot(slot));
  for (std::size_t slot : imagined_slots) fill(imagined->slot(slot));
  return batch;
}

Mat critic_values(const Critic& critic, const Mat& s, const Mat& a, bool target) {
  const Mat in = critic_inputs(critic, s, normalize_actions(critic, a));
  Mat q(2, s.cols());
  q.row(0) = mlp_forward_batch(target ? critic.q1_target : critic.q1, in);
  q.row(1) = mlp_forward_batch(target ? critic.q2_target : critic.q2, in);
  return q;
}

Vec critic_target(const Critic& critic, const GaussianPolicy& policy, const SacHyper& hyper,
                  const SacBatch& batch, Rng& rng) {
  require(batch.size() >= 1, "critic target on an empty batch");
  const int m = policy.action_dim();
  const Mat out = mlp_forward_batch(policy.net, policy_inputs(policy, batch.s_next));
  if (!out.allFinite()) throw Error(Errc::diverged, "policy network produced non-finite output");
  const Mat noise = standard_normal(rng, m, batch.size());
  const SquashedBatch sq = squash_batch(out, m, noise, policy.action_scale);
  const Mat in = critic_inputs(critic, batch.s_next, sq.t);
  const Mat q1 = mlp_forward_batch(critic.q1_target, in);
  const Mat q2 = mlp_forward_batch(critic.q2_target, in);

  Vec y(batch.size());
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    if (batch.done(b) != 0.0) {
      y(b) = batch.reward(b);
    } else {
      const double soft_value = std::min(q1(0, b), q2(0, b)) - hyper.alpha * sq.log_prob(b);
      y(b) = batch.reward(b) + hyper.gamma * soft_value;
    }
  }
  return y;
}

Vec critic_target(const Critic& critic, const GaussianPolicy& policy, const SacHyper& hyper,
                  const SacBatch& batch, std::uint64_t seed) {
  Rng rng(seed);
  return critic_target(critic, policy, hyper, batch, rng);
}

CriticOptimizer make_critic_optimizer(const Critic& critic, double lr) {
  return {AdamState::for_params(critic.q1, {.lr = lr}),
          AdamState::for_params(critic.q2, {.lr = lr})};
}

double update_critic(Critic& critic, const Vec& targets, const SacBatch& batch,
                     CriticOptimizer& opt) {
  require(targets.size() == batch.size() && batch.size() >= 1,
          "critic targets must match the batch length");
  const Mat in = critic_inputs(critic, batch.s, normalize_actions(critic, batch.a));
  const auto count = static_cast<double>(batch.size());
  double total = 0.0;
  auto step_one = [&](MlpParams& q, AdamState& state) {
    ForwardCache cache;
    const Mat out = mlp_forward_batch(q, in, cache);
    const Mat residual = out - targets.transpose();
    const double mse = residual.squaredNorm() / count;
    if (!std::isfinite(mse)) throw Error(Errc::diverged, "non-finite critic loss");
    total += mse;
    const Gradient grad = mlp_backward_batch(q, cache, (2.0 / count) * residual).grad;
    adam_step(state, q, grad);
  };
  step_one(critic.q1, opt.q1);
  step_one(critic.q2, opt.q2);
  return total;
}

ActorLossAndGradient actor_loss_and_gradient(const GaussianPolicy& policy, const Critic& critic,
                                             double alpha, const Mat& s, const Mat& noise) {
  const int m = policy.action_dim();
  const Eigen::Index count = s.cols();
  require(count >= 1, "actor loss on an empty batch");
  require(noise.rows() == m && noise.cols() == count, "actor noise shape mismatch");

  ForwardCache policy_cache;
  const Mat out = mlp_forward_batch(policy.net, policy_inputs(policy, s), policy_cache);
  if (!out.allFinite()) throw Error(Errc::diverged, "policy network produced non-finite output");
  const SquashedBatch sq = squash_batch(out, m, noise, policy.action_scale);

  const Mat in = critic_inputs(critic, s, sq.t);
  ForwardCache c1, c2;
  const Mat q1 = mlp_forward_batch(critic.q1, in, c1);
  const Mat q2 = mlp_forward_batch(critic.q2, in, c2);

  Mat pick1 = Mat::Zero(1, count);
  Mat pick2 = Mat::Zero(1, count);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < count; ++b) {
    const bool first = q1(0, b) <= q2(0, b);
    (first ? pick1 : pick2)(0, b) = 1.0;
    loss += alpha * sq.log_prob(b) - (first ? q1(0, b) : q2(0, b));
  }
  loss /= static_cast<double>(count);
  if (!std::isfinite(loss)) throw Error(Errc::diverged, "non-finite actor loss");

  // d min(q1, q2) / d normalized action
  const Mat dq_dt = mlp_backward_batch(critic.q1, c1, pick1).input_grad.bottomRows(m) +
                    mlp_backward_batch(critic.q2, c2, pick2).input_grad.bottomRows(m);

  const Mat dt_du = 1.0 - sq.t.array().square();
  const Mat dq_du = dq_dt.cwiseProduct(dt_du);
  const Mat sigma_xi = sq.std.cwiseProduct(noise);
  const double inv = 1.0 / static_cast<double>(count);

  Mat upstream(2 * m, count);
  upstream.topRows(m) = inv * (alpha * 2.0 * sq.t - dq_du);
  upstream.bottomRows(m) =
      inv * ((alpha * (-1.0 + 2.0 * sq.t.array() * sigma_xi.array()) -
              dq_du.array() * sigma_xi.array()) *
             sq.clamp_mask.array())
                .matrix();
  return {loss, mlp_backward_batch(policy.net, policy_cache, upstream).grad};
}

double update_actor(GaussianPolicy& policy, const Critic& critic, const SacHyper& hyper,
                    const SacBatch& batch, AdamState& opt, Rng& rng) {
  const Mat noise = standard_normal(rng, policy.action_dim(), batch.size());
  auto [loss, grad] = actor_loss_and_gradient(policy, critic, hyper.alpha, batch.s, noise);
  adam_step(opt, policy.net, grad);
  return loss;
}

double update_actor(GaussianPolicy& policy, const Critic& critic, const SacHyper& hyper,
                    const SacBatch& batch, AdamState& opt, std::uint64_t seed) {
  Rng rng(seed);
  return update_actor(policy, critic, hyper, batch, opt, rng);
}

void soft_update(Critic& critic, double tau) {
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  polyak_update(critic.q1_target, critic.q1, tau);
  polyak_update(critic.q2_target, critic.q2, tau);
}

SacAgent make_agent(const EnvSpec& env, const SacHyper& hyper, std::uint64_t seed) {
  validate(hyper);
  SacAgent agent;
  agent.hyper = hyper;
  agent.policy = make_policy(env, hyper.hidden, derive_seed(seed, 10));
  agent.critic = make_critic(env, hyper.hidden, derive_seed(seed, 11));
  agent.actor_opt = AdamState::for_params(agent.policy.net, {.lr = hyper.lr_actor});
  agent.critic_opt = make_critic_optimizer(agent.critic, hyper.lr_critic);
  return agent;
}

SacUpdateStats sac_update(SacAgent& agent, const SacBatch& batch, Rng& rng) {
  SacUpdateStats stats;
  const Vec targets = critic_target(agent.critic, agent.policy, agent.hyper, batch, rng);
  stats.critic_loss = update_critic(agent.critic, targets, batch, agent.critic_opt);
  stats.actor_loss =
      update_actor(agent.policy, agent.critic, agent.hyper, batch, agent.actor_opt, rng);
  soft_update(agent.critic, agent.hyper.tau);
  return stats;
}

}  // namespace incdyn
