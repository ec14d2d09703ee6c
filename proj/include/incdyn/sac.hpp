#pragma once

#include <cstdint>
#include <vector>

#include "incdyn/envs.hpp"
#include "incdyn/mathcore.hpp"
#include "incdyn/replay.hpp"
#include "incdyn/rng.hpp"

namespace incdyn {

struct SacHyper {
  double gamma = 0.99;
  double tau = 0.005;
  double alpha = 0.2;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  int batch_size = 256;
  std::vector<int> hidden{64, 64};
};

void validate(const SacHyper& hyper);

/// Squashed Gaussian: a = offset + scale * tanh(mean + std * xi).
struct GaussianPolicy {
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  MlpParams net;  // encoded state -> (mean[m], log_std[m])
  Vec action_scale;
  Vec action_offset;
  std::vector<bool> angular;

  int action_dim() const { return static_cast<int>(action_scale.size()); }
};

/// Twin Q networks on (encoded state, normalized action) with target copies.
/// Actions enter the critics mapped back to [-1, 1].
struct Critic {
  MlpParams q1;
  MlpParams q2;
  MlpParams q1_target;
  MlpParams q2_target;
  Vec action_scale;
  Vec action_offset;
  std::vector<bool> angular;
};

GaussianPolicy make_policy(const EnvSpec& env, const std::vector<int>& hidden, std::uint64_t seed);
Critic make_critic(const EnvSpec& env, const std::vector<int>& hidden, std::uint64_t seed);

struct ActionSample {
  Vec a;
  double log_prob = 0.0;
};

/// Deterministic core of action sampling: given network outputs and a fixed
/// standard-normal draw, returns the bounded action and its log density
/// (tanh and affine change of variables included).
ActionSample squash_gaussian(const Vec& mean, const Vec& log_std, const Vec& noise,
                             const Vec& scale, const Vec& offset);

ActionSample sample_action(const GaussianPolicy& policy, const Vec& s, Rng& rng,
                           bool deterministic);
ActionSample sample_action(const GaussianPolicy& policy, const Vec& s, std::uint64_t seed,
                           bool deterministic);

/// Columns are samples.
struct SacBatch {
  Mat s;
  Mat a;
  Vec reward;
  Mat s_next;
  Vec done;  // 1.0 for terminal transitions

  Eigen::Index size() const { return s.cols(); }
  static SacBatch from(const std::vector<Transition>& transitions);
  static SacBatch from_slots(const ReplayBuffer& real, const std::vector<std::size_t>& real_slots,
                             const ReplayBuffer* imagined,
                             const std::vector<std::size_t>& imagined_slots);
};

/// Q values of the online (or target) pair on a batch; row 0 = q1, row 1 = q2.
Mat critic_values(const Critic& critic, const Mat& s, const Mat& a, bool target);

Vec critic_target(const Critic& critic, const GaussianPolicy& policy, const SacHyper& hyper,
                  const SacBatch& batch, Rng& rng);
Vec critic_target(const Critic& critic, const GaussianPolicy& policy, const SacHyper& hyper,
                  const SacBatch& batch, std::uint64_t seed);

struct CriticOptimizer {
  AdamState q1;
  AdamState q2;
};

CriticOptimizer make_critic_optimizer(const Critic& critic, double lr);

/// Summed MSE of both critics against `targets`, measured before the step.
double update_critic(Critic& critic, const Vec& targets, const SacBatch& batch,
                     CriticOptimizer& opt);

struct ActorLossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

/// Reparameterized actor objective mean[alpha * log pi(a~|s) - min(q1, q2)(s, a~)]
/// for fixed standard-normal draws (m x batch).
ActorLossAndGradient actor_loss_and_gradient(const GaussianPolicy& policy, const Critic& critic,
                                             double alpha, const Mat& s, const Mat& noise);

/// One Adam step on the actor objective; returns the loss before the step.
double update_actor(GaussianPolicy& policy, const Critic& critic, const SacHyper& hyper,
                    const SacBatch& batch, AdamState& opt, Rng& rng);
double update_actor(GaussianPolicy& policy, const Critic& critic, const SacHyper& hyper,
                    const SacBatch& batch, AdamState& opt, std::uint64_t seed);

void soft_update(Critic& critic, double tau);

/// Policy, critics and their optimizers.
struct SacAgent {
  SacHyper hyper;
  GaussianPolicy policy;
  Critic critic;
  AdamState actor_opt;
  CriticOptimizer critic_opt;
};

SacAgent make_agent(const EnvSpec& env, const SacHyper& hyper, std::uint64_t seed);

struct SacUpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

/// Target computation, critic step, actor step, target smoothing.
SacUpdateStats sac_update(SacAgent& agent, const SacBatch& batch, Rng& rng);

Mat standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace incdyn
