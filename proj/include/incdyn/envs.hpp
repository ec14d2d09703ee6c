#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "incdyn/mathcore.hpp"

namespace incdyn {

enum class EnvKind { pendulum, cartpole, linear };

/// Static description of an environment: dimensions, action box, integrator
/// step and episode length.
struct EnvSpec {
  EnvKind kind = EnvKind::pendulum;
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  Vec action_low;
  Vec action_high;
  double dt = 0.0;
  int max_episode_steps = 0;
  // State components that are angles; networks see them as (cos, sin).
  std::vector<bool> angular;
  // Input matrix of the linear diagnostic system (state_dim x action_dim).
  Mat B;
};

/// Builds one of "pendulum", "cartpole", "linear". Unknown names throw
/// Errc::contract_violation.
EnvSpec make_env(std::string_view name);

/// Linear diagnostic system with a caller-chosen input matrix; state_dim and
/// action_dim follow B's shape. Actions are boxed to [-1, 1].
EnvSpec make_linear_env(const Mat& B);

void validate(const EnvSpec& spec);

struct EnvState {
  Vec s;
  Vec prev_action;  // a_{t-1}; zero at episode start
  int step_count = 0;
  bool done = false;
};

enum class DoneReason { none, termination, time_limit };

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::none;
  Vec applied_action;  // after clipping
  bool clipped = false;

  const Vec& next_state() const { return next.s; }
};

EnvState reset(const EnvSpec& spec, std::uint64_t seed);

/// Starts an episode at a given state with a zero previous action.
EnvState reset_to(const EnvSpec& spec, const Vec& s);

StepResult step(const EnvSpec& spec, const EnvState& state, const Vec& action);

double reward_fn(const EnvSpec& spec, const Vec& s, const Vec& a);

/// State-based termination only; the time limit is not a termination.
bool termination_fn(const EnvSpec& spec, const Vec& s);

Vec clip_action(const EnvSpec& spec, const Vec& a);

/// Network-facing encoding of a state: angular components become (cos, sin).
Vec features(const EnvSpec& spec, const Vec& s);
int feature_dim(const EnvSpec& spec);
Mat features_batch(const std::vector<bool>& angular, const Mat& states);

/// Maps an angle onto (-pi, pi].
double wrap_angle(double theta);

/// Total mechanical energy of the pendulum (unit mass and length).
double pendulum_energy(const Vec& s);

}  // namespace incdyn
