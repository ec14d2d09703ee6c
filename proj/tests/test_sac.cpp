#include <doctest.h>

#include <cmath>
#include <numbers>

#include "incdyn/sac.hpp"
#include "support/data.hpp"
#include "support/mlp_oracle.hpp"
#include "support/test_util.hpp"

using namespace incdyn;
using namespace incdyn::testing;

namespace {

void zero_weights(MlpParams& p) {
  for (auto& layer : p.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

// Policy whose output is the constant (mean, log_std).
GaussianPolicy constant_policy(const EnvSpec& env, const Vec& mean, const Vec& log_std) {
  GaussianPolicy policy = make_policy(env, {4}, 1);
  zero_weights(policy.net);
  policy.net.layers.back().bias << mean, log_std;
  return policy;
}

// Density of offset + scale * tanh(mean + std * xi), coded from scratch.
double oracle_log_density(double a, double mean, double log_std, double scale, double offset) {
  const double y = (a - offset) / scale;
  const double u = 0.5 * std::log((1 + y) / (1 - y));
  const double sigma = std::exp(log_std);
  const double z = (u - mean) / sigma;
  const double gauss = -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2 * std::numbers::pi);
  // da/du = scale * (1 - tanh(u)^2)
  return gauss - std::log(scale * (1 - y * y));
}

std::vector<double> critic_input_oracle(const Critic& critic, const Vec& s, const Vec& a) {
  std::vector<double> x;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (critic.angular[i]) {
      x.push_back(std::cos(s(i)));
      x.push_back(std::sin(s(i)));
    } else {
      x.push_back(s(i));
    }
  }
  for (Eigen::Index j = 0; j < a.size(); ++j)
    x.push_back((a(j) - critic.action_offset(j)) / critic.action_scale(j));
  return x;
}

double param_distance(const MlpParams& a, const MlpParams& b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    sq += (a.layers[k].weight - b.layers[k].weight).squaredNorm();
    sq += (a.layers[k].bias - b.layers[k].bias).squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace

TEST_CASE("hyperparameter defaults and validation") {
  const SacHyper h;
  CHECK(h.gamma == 0.99);
  CHECK(h.tau == 0.005);
  CHECK(h.alpha == 0.2);
  CHECK(h.lr_actor == 3e-4);
  CHECK(h.lr_critic == 3e-4);
  CHECK(h.batch_size == 256);
  CHECK(h.hidden == std::vector<int>{64, 64});
  validate(h);
  CHECK_THROWS_AS(validate(SacHyper{.gamma = 1.0}), Error);
  CHECK_THROWS_AS(validate(SacHyper{.tau = 0.0}), Error);
  CHECK_THROWS_AS(validate(SacHyper{.alpha = 0.0}), Error);
  CHECK_THROWS_AS(validate(SacHyper{.batch_size = 0}), Error);
}

TEST_CASE("deterministic action with zero mean is the offset") {
  const EnvSpec pend = make_env("pendulum");
  const GaussianPolicy policy = constant_policy(pend, Vec::Zero(1), Vec::Zero(1));
  CHECK(policy.action_scale(0) == 2.0);
  CHECK(policy.action_offset(0) == 0.0);
  const ActionSample s = sample_action(policy, Vec::Zero(2), 5, true);
  CHECK(s.a(0) == 0.0);
}

TEST_CASE("emitted actions stay inside the action box") {
  Rng rng(1);
  for (const char* name : {"pendulum", "cartpole", "linear"}) {
    const EnvSpec env = make_env(name);
    GaussianPolicy policy = make_policy(env, {16}, 3);
    for (auto& layer : policy.net.layers) layer.weight *= 40.0;  // saturate tanh
    for (int i = 0; i < 500; ++i) {
      const Vec s = random_vec(rng, env.state_dim, 5.0);
      for (bool det : {false, true}) {
        const Vec a = sample_action(policy, s, rng, det).a;
        CHECK((a.array() >= env.action_low.array()).all());
        CHECK((a.array() <= env.action_high.array()).all());
      }
    }
  }
}

TEST_CASE("log_prob matches the Gaussian-plus-tanh density oracle") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const double mean = uniform(rng, -1.5, 1.5);
    const double log_std = uniform(rng, -2.0, 1.0);
    const double xi = uniform(rng, -2.5, 2.5);
    const double scale = uniform(rng, 0.5, 10.0);
    const double offset = uniform(rng, -1.0, 1.0);
    const ActionSample s = squash_gaussian(Vec::Constant(1, mean), Vec::Constant(1, log_std),
                                           Vec::Constant(1, xi), Vec::Constant(1, scale),
                                           Vec::Constant(1, offset));
    CHECK(s.a(0) == doctest::Approx(offset + scale * std::tanh(mean + std::exp(log_std) * xi)));
    CHECK(std::abs(s.log_prob - oracle_log_density(s.a(0), mean, log_std, scale, offset)) < 1e-10);
  }
}

TEST_CASE("log_prob of independent dimensions adds up") {
  Vec mean(2), ls(2), xi(2), scale(2), offset(2);
  mean << 0.2, -0.4;
  ls << -0.3, 0.1;
  xi << 0.7, -1.1;
  scale << 2.0, 0.5;
  offset << 0.0, 1.0;
  const ActionSample joint = squash_gaussian(mean, ls, xi, scale, offset);
  double sum = 0.0;
  for (int j = 0; j < 2; ++j)
    sum += squash_gaussian(mean.segment(j, 1), ls.segment(j, 1), xi.segment(j, 1),
                           scale.segment(j, 1), offset.segment(j, 1))
               .log_prob;
  CHECK(joint.log_prob == doctest::Approx(sum).epsilon(1e-14));
}

TEST_CASE("exp(log_prob) integrates to one over the action interval") {
  for (auto [mean, log_std] : {std::pair{0.3, -0.5}, std::pair{-1.0, 0.2}, std::pair{0.0, -2.0}}) {
    const double scale = 2.0, lo = -2.0, hi = 2.0;
    const int grid = 10000;
    const double width = (hi - lo) / grid;
    double integral = 0.0;
    for (int i = 0; i < grid; ++i) {
      const double a = lo + (i + 0.5) * width;
      const double u = std::atanh(a / scale);
      const double xi = (u - mean) / std::exp(log_std);
      const ActionSample s = squash_gaussian(Vec::Constant(1, mean), Vec::Constant(1, log_std),
                                             Vec::Constant(1, xi), Vec::Constant(1, scale),
                                             Vec::Zero(1));
      integral += std::exp(s.log_prob) * width;
    }
    CHECK(std::abs(integral - 1.0) <= 0.02);
  }
}

TEST_CASE("log_std is clamped to [-20, 2]") {
  const ActionSample wide = squash_gaussian(Vec::Zero(1), Vec::Constant(1, 50.0), Vec::Constant(1, 0.3),
                                            Vec::Ones(1), Vec::Zero(1));
  const ActionSample at = squash_gaussian(Vec::Zero(1), Vec::Constant(1, 2.0), Vec::Constant(1, 0.3),
                                          Vec::Ones(1), Vec::Zero(1));
  CHECK(wide.a(0) == at.a(0));
  CHECK(wide.log_prob == at.log_prob);
}

TEST_CASE("critic_target: terminal transitions and gamma = 0 give the reward") {
  const EnvSpec pend = make_env("pendulum");
  const GaussianPolicy policy = make_policy(pend, {16}, 1);
  const Critic critic = make_critic(pend, {16}, 2);
  auto data = collect_random(pend, 20, 3);
  for (std::size_t i = 0; i < data.size(); i += 2) data[i].done = true;
  const SacBatch batch = SacBatch::from(data);
  const Vec y = critic_target(critic, policy, SacHyper{}, batch, 7);
  for (std::size_t i = 0; i < data.size(); i += 2) CHECK(y(i) == data[i].reward);
  const Vec y0 = critic_target(critic, policy, SacHyper{.gamma = 0.0}, batch, 7);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(y0(i) == data[i].reward);
}

TEST_CASE("critic_target: hand-set scalar case gives 2.89") {
  const EnvSpec pend = make_env("pendulum");
  const GaussianPolicy policy = constant_policy(pend, Vec::Zero(1), Vec::Zero(1));
  Critic critic = make_critic(pend, {8}, 3);
  zero_weights(critic.q1_target);
  zero_weights(critic.q2_target);
  critic.q1_target.layers.back().bias(0) = 2.0;
  critic.q2_target.layers.back().bias(0) = 3.5;

  Transition t;
  t.s = Vec::Zero(2);
  t.s_prev = t.s;
  t.a = Vec::Zero(1);
  t.a_prev = t.a;
  t.s_next = Vec::Constant(2, 0.4);
  t.reward = 1.0;
  const SacBatch batch = SacBatch::from({t});

  // replay the noise the target will draw and choose alpha so that alpha log pi = -0.1
  Rng replay(11);
  const Vec xi = standard_normal(replay, 1, 1).col(0);
  const double log_prob =
      squash_gaussian(Vec::Zero(1), Vec::Zero(1), xi, Vec::Constant(1, 2.0), Vec::Zero(1)).log_prob;
  REQUIRE(log_prob < 0.0);
  SacHyper hyper{.gamma = 0.9, .alpha = -0.1 / log_prob};
  const Vec y = critic_target(critic, policy, hyper, batch, 11);
  CHECK(y(0) == doctest::Approx(2.89).epsilon(1e-12));
}

TEST_CASE("update_critic: zero residual leaves the critic untouched") {
  const EnvSpec pend = make_env("pendulum");
  Critic critic = make_critic(pend, {16}, 4);
  critic.q2 = critic.q1;
  const SacBatch batch = SacBatch::from(collect_random(pend, 16, 5));
  const Vec targets = critic_values(critic, batch.s, batch.a, false).row(0).transpose();
  const Critic before = critic;
  CriticOptimizer opt = make_critic_optimizer(critic, 3e-4);
  CHECK(update_critic(critic, targets, batch, opt) == 0.0);
  CHECK(param_distance(critic.q1, before.q1) == 0.0);
  CHECK(param_distance(critic.q2, before.q2) == 0.0);
}

TEST_CASE("update_critic: single sample with zero output and target 2") {
  const EnvSpec pend = make_env("pendulum");
  Critic critic = make_critic(pend, {8}, 4);
  zero_weights(critic.q1);
  zero_weights(critic.q2);
  const SacBatch batch = SacBatch::from(collect_random(pend, 1, 5));
  CriticOptimizer opt = make_critic_optimizer(critic, 3e-4);
  CHECK(update_critic(critic, Vec::Constant(1, 2.0), batch, opt) == 8.0);  // 4 per network
}

TEST_CASE("update_critic: loss matches a brute-force recomputation") {
  const EnvSpec cart = make_env("cartpole");
  Critic critic = make_critic(cart, {16, 16}, 6);
  const auto data = collect_random(cart, 12, 7);
  const SacBatch batch = SacBatch::from(data);
  Rng rng(8);
  const Vec targets = random_vec(rng, 12, 3.0);
  double expected = 0.0;
  for (const MlpParams* q : {&critic.q1, &critic.q2}) {
    double sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double out = oracle_forward(*q, critic_input_oracle(critic, data[i].s, data[i].a))[0];
      sq += (out - targets(i)) * (out - targets(i));
    }
    expected += sq / 12.0;
  }
  CriticOptimizer opt = make_critic_optimizer(critic, 3e-4);
  CHECK(std::abs(update_critic(critic, targets, batch, opt) - expected) <= 1e-12);
}

TEST_CASE("actor: constant critic and alpha = 0 give a zero gradient") {
  const EnvSpec pend = make_env("pendulum");
  const GaussianPolicy policy = make_policy(pend, {8}, 1);
  Critic critic = make_critic(pend, {8}, 2);
  zero_weights(critic.q1);
  zero_weights(critic.q2);
  critic.q1.layers.back().bias(0) = 1.5;
  critic.q2.layers.back().bias(0) = 1.5;
  Rng rng(3);
  const Mat s = random_mat(rng, 2, 10);
  const ActorLossAndGradient lg = actor_loss_and_gradient(policy, critic, 0.0, s, standard_normal(rng, 1, 10));
  CHECK(lg.loss == -1.5);
  for (const auto& layer : lg.grad.layers) {
    CHECK(layer.weight.isZero(0.0));
    CHECK(layer.bias.isZero(0.0));
  }
}

TEST_CASE("actor: one-sample loss recomputed independently") {
  const EnvSpec pend = make_env("pendulum");
  const GaussianPolicy policy = make_policy(pend, {8}, 5);
  const Critic critic = make_critic(pend, {8}, 6);
  Vec s(2);
  s << 0.4, -1.2;
  const Vec xi = Vec::Constant(1, 0.37);
  const double alpha = 0.2;

  std::vector<double> x{std::cos(0.4), std::sin(0.4), -1.2};
  const auto out = oracle_forward(policy.net, x);
  const double ls = std::clamp(out[1], -20.0, 2.0);
  const double a = 2.0 * std::tanh(out[0] + std::exp(ls) * xi(0));
  const double log_prob = oracle_log_density(a, out[0], ls, 2.0, 0.0);
  const Vec av = Vec::Constant(1, a);
  const double q1 = oracle_forward(critic.q1, critic_input_oracle(critic, s, av))[0];
  const double q2 = oracle_forward(critic.q2, critic_input_oracle(critic, s, av))[0];
  const double expected = alpha * log_prob - std::min(q1, q2);

  const ActorLossAndGradient lg = actor_loss_and_gradient(policy, critic, alpha, Mat(s), Mat(xi));
  CHECK(std::abs(lg.loss - expected) < 1e-10);
}

TEST_CASE("actor gradient matches finite differences") {
  Rng rng(9);
  for (const char* name : {"pendulum", "linear"}) {
    const EnvSpec env = make_env(name);
    GaussianPolicy policy = make_policy(env, {6}, rng());
    const Critic critic = make_critic(env, {6}, rng());
    const Mat s = random_mat(rng, env.state_dim, 5);
    const Mat noise = standard_normal(rng, env.action_dim, 5);
    const ActorLossAndGradient lg = actor_loss_and_gradient(policy, critic, 0.2, s, noise);
    const double h = 1e-6;
    for (std::size_t k = 0; k < policy.net.layers.size(); ++k) {
      auto check_slot = [&](double& slot, double analytic) {
        const double saved = slot;
        slot = saved + h;
        const double plus = actor_loss_and_gradient(policy, critic, 0.2, s, noise).loss;
        slot = saved - h;
        const double minus = actor_loss_and_gradient(policy, critic, 0.2, s, noise).loss;
        slot = saved;
        CHECK(rel_error(analytic, (plus - minus) / (2 * h), 1e-5) < 1e-3);
      };
      auto& layer = policy.net.layers[k];
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
        check_slot(layer.weight.data()[i], lg.grad.layers[k].weight.data()[i]);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
        check_slot(layer.bias(i), lg.grad.layers[k].bias(i));
    }
  }
}

TEST_CASE("actor gradient ignores log_std outside the clamp") {
  const EnvSpec pend = make_env("pendulum");
  const GaussianPolicy policy = constant_policy(pend, Vec::Zero(1), Vec::Constant(1, 5.0));
  const Critic critic = make_critic(pend, {6}, 2);
  const ActorLossAndGradient lg =
      actor_loss_and_gradient(policy, critic, 0.2, Mat::Zero(2, 3), Mat::Constant(1, 3, 0.5));
  CHECK(lg.grad.layers.back().bias(1) == 0.0);
  CHECK(lg.grad.layers.back().bias(0) != 0.0);
}

TEST_CASE("soft_update: hard copy, scalar example, geometric decay") {
  const EnvSpec pend = make_env("pendulum");
  Critic critic = make_critic(pend, {8}, 3);
  Rng rng(4);
  for (auto& layer : critic.q1.layers) layer.weight = random_mat(rng, layer.weight.rows(), layer.weight.cols());
  soft_update(critic, 1.0);
  CHECK(param_distance(critic.q1_target, critic.q1) == 0.0);

  zero_weights(critic.q1_target);
  zero_weights(critic.q1);
  critic.q1.layers[0].weight(0, 0) = 1.0;
  soft_update(critic, 0.005);
  CHECK(critic.q1_target.layers[0].weight(0, 0) == doctest::Approx(0.005).epsilon(1e-15));

  Critic fresh = make_critic(pend, {8}, 5);
  for (auto& layer : fresh.q2.layers) layer.weight.array() += 0.5;
  double previous = param_distance(fresh.q2_target, fresh.q2);
  for (int i = 0; i < 50; ++i) {
    soft_update(fresh, 0.05);
    const double d = param_distance(fresh.q2_target, fresh.q2);
    CHECK(d / previous == doctest::Approx(0.95).epsilon(1e-9));
    previous = d;
  }
  CHECK_THROWS_AS(soft_update(fresh, 0.0), Error);
}

TEST_CASE("sac_update is deterministic and finite") {
  const EnvSpec pend = make_env("pendulum");
  const SacBatch batch = SacBatch::from(collect_random(pend, 64, 1));
  SacAgent a = make_agent(pend, SacHyper{.batch_size = 64}, 2);
  SacAgent b = make_agent(pend, SacHyper{.batch_size = 64}, 2);
  Rng ra(3), rb(3);
  for (int i = 0; i < 5; ++i) {
    const SacUpdateStats sa = sac_update(a, batch, ra);
    const SacUpdateStats sb = sac_update(b, batch, rb);
    CHECK(sa.critic_loss == sb.critic_loss);
    CHECK(sa.actor_loss == sb.actor_loss);
  }
  CHECK(param_distance(a.policy.net, b.policy.net) == 0.0);
  CHECK(param_distance(a.critic.q1_target, b.critic.q1_target) == 0.0);
  CHECK(a.policy.net.all_finite());
  CHECK(a.actor_opt.step == 5);
}

TEST_CASE("a few hundred updates on a fixed batch lower the critic loss") {
  const EnvSpec pend = make_env("pendulum");
  const SacBatch batch = SacBatch::from(collect_random(pend, 128, 4));
  SacAgent agent = make_agent(pend, SacHyper{.lr_critic = 1e-3, .batch_size = 128}, 5);
  Rng rng(6);
  const double first = sac_update(agent, batch, rng).critic_loss;
  double last = first;
  for (int i = 0; i < 300; ++i) last = sac_update(agent, batch, rng).critic_loss;
  CHECK(last < 0.5 * first);
}

TEST_CASE("SacBatch from mixed buffers keeps real rows first") {
  const EnvSpec pend = make_env("pendulum");
  const ReplayBuffer real = to_buffer(collect_random(pend, 10, 1));
  auto imagined_data = collect_random(pend, 10, 2);
  for (auto& t : imagined_data) t.is_imagined = true;
  const ReplayBuffer imagined = to_buffer(imagined_data);
  const SacBatch batch = SacBatch::from_slots(real, {3, 4}, &imagined, {7});
  CHECK(batch.size() == 3);
  CHECK(batch.s.col(0) == real.slot(3).s);
  CHECK(batch.s.col(2) == imagined.slot(7).s);
  CHECK(batch.reward(2) == imagined.slot(7).reward);
}
