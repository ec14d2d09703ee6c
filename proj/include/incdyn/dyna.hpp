#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "incdyn/envs.hpp"
#include "incdyn/incmodel.hpp"
#include "incdyn/replay.hpp"
#include "incdyn/sac.hpp"

namespace incdyn {

/// Loop constants and knobs of the model-based training loop.
struct TrainConfig {
  std::string env = "pendulum";
  int epochs = 30;             // N
  int steps_per_epoch = 1000;  // E
  int rollouts_per_step = 20;  // M
  int updates_per_step = 20;   // G
  int model_train_steps = 5000;
  int model_batch_size = 256;
  double model_lr = 3e-3;
  double real_data_fraction = 0.05;
  int warmup_steps = 1000;
  std::uint64_t seed = 0;
  std::size_t env_capacity = 100000;
  std::size_t model_capacity = 400000;
  int eval_episodes = 5;
  // Stop as soon as an evaluation reaches this return.
  std::optional<double> stop_return;
  SacHyper sac;
  ModelArch model;
  std::optional<Mat> prior_L0;
};

void validate(const TrainConfig& cfg);

struct CurveRecord {
  std::int64_t env_steps = 0;
  double episodic_return = 0.0;
  double model_holdout_error = 0.0;  // NaN until the model has been scored
  double wall_time = 0.0;            // seconds since the run started
};

struct LearningCurve {
  std::vector<CurveRecord> records;
};

struct LoopCounters {
  std::int64_t env_steps = 0;
  std::int64_t rollouts_attempted = 0;
  std::int64_t rollouts_discarded = 0;
  std::int64_t gradient_rounds = 0;
  std::int64_t model_trainings = 0;
  std::int64_t episodes = 0;
};

struct TrainingResult {
  LearningCurve curve;
  GaussianPolicy policy;
  IncrementalModel model;
  LoopCounters counters;
  bool aborted = false;
  std::string abort_reason;
};

/// One-step imagined transition from a real sample. Returns nullopt when the
/// model predicts a non-finite state.
std::optional<Transition> model_rollout(const IncrementalModel& model,
                                        const GaussianPolicy& policy, const EnvSpec& env,
                                        const Transition& source, Rng& rng);
std::optional<Transition> model_rollout(const IncrementalModel& model,
                                        const GaussianPolicy& policy, const EnvSpec& env,
                                        const Transition& source, std::uint64_t seed);

/// Runs `episodes` deterministic-mode episodes; episode i starts from
/// reset(env, derive_seed(seed, i)) unless `start` is given.
double evaluate_policy(const GaussianPolicy& policy, const EnvSpec& env, int episodes,
                       std::uint64_t seed, const std::optional<Vec>& start = std::nullopt);

/// Number of real samples in a SAC minibatch of size `batch_size`.
int real_sample_count(int batch_size, double real_data_fraction, bool have_imagined);

/// Seed streams used by run_training. The model-free reduction relies on
/// these being independent of the model and rollout streams.
namespace streams {
inline constexpr std::uint64_t kAct = 1;
inline constexpr std::uint64_t kUpdate = 2;
inline constexpr std::uint64_t kRollout = 3;
inline constexpr std::uint64_t kEval = 4;
inline constexpr std::uint64_t kEpisode = 5;
inline constexpr std::uint64_t kAgent = 6;
inline constexpr std::uint64_t kModelInit = 7;
inline constexpr std::uint64_t kModelTrain = 8;
}  // namespace streams

TrainingResult run_training(const TrainConfig& cfg);

}  // namespace incdyn
