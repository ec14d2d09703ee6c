#include "incdyn/envs.hpp"

#include <cmath>
#include <numbers>

#include "incdyn/rng.hpp"

namespace incdyn {

namespace {

constexpr double kPendulumGravity = 10.0;
constexpr double kPendulumLength = 1.0;
constexpr double kPendulumMass = 1.0;

constexpr double kCartGravity = 9.8;
constexpr double kCartMass = 1.0;
constexpr double kPoleMass = 0.1;
constexpr double kPoleHalfLength = 0.5;
constexpr double kCartAngleLimit = 0.2;
constexpr double kCartPositionLimit = 2.4;

// State derivative of the cart-pole, state = (x, x_dot, theta, theta_dot).
Vec cartpole_derivative(const Vec& s, double force) {
  const double total_mass = kCartMass + kPoleMass;
  const double polemass_length = kPoleMass * kPoleHalfLength;
  const double sin_t = std::sin(s(2));
  const double cos_t = std::cos(s(2));
  const double temp = (force + polemass_length * s(3) * s(3) * sin_t) / total_mass;
  const double theta_acc =
      (kCartGravity * sin_t - cos_t * temp) /
      (kPoleHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;
  Vec d(4);
  d << s(1), x_acc, s(3), theta_acc;
  return d;
}

Vec rk4(const Vec& s, double force, double dt) {
  const Vec k1 = cartpole_derivative(s, force);
  const Vec k2 = cartpole_derivative(s + 0.5 * dt * k1, force);
  const Vec k3 = cartpole_derivative(s + 0.5 * dt * k2, force);
  const Vec k4 = cartpole_derivative(s + dt * k3, force);
  return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

double wrap_angle(double theta) {
  double wrapped = std::remainder(theta, 2.0 * std::numbers::pi);
  if (wrapped <= -std::numbers::pi) wrapped += 2.0 * std::numbers::pi;
  return wrapped;
}

EnvSpec make_linear_env(const Mat& B) {
  require(B.rows() >= 1 && B.cols() >= 1, "linear env needs a non-empty B");
  EnvSpec spec;
  spec.kind = EnvKind::linear;
  spec.name = "linear";
  spec.state_dim = static_cast<int>(B.rows());
  spec.action_dim = static_cast<int>(B.cols());
  spec.action_low = Vec::Constant(spec.action_dim, -1.0);
  spec.action_high = Vec::Constant(spec.action_dim, 1.0);
  spec.dt = 1.0;
  spec.max_episode_steps = 100;
  spec.angular.assign(spec.state_dim, false);
  spec.B = B;
  return spec;
}

EnvSpec make_env(std::string_view name) {
  EnvSpec spec;
  if (name == "pendulum") {
    spec.kind = EnvKind::pendulum;
    spec.state_dim = 2;
    spec.action_dim = 1;
    spec.action_low = Vec::Constant(1, -2.0);
    spec.action_high = Vec::Constant(1, 2.0);
    spec.dt = 0.05;
    spec.max_episode_steps = 200;
    spec.angular = {true, false};
  } else if (name == "cartpole") {
    spec.kind = EnvKind::cartpole;
    spec.state_dim = 4;
    spec.action_dim = 1;
    spec.action_low = Vec::Constant(1, -10.0);
    spec.action_high = Vec::Constant(1, 10.0);
    spec.dt = 0.02;
    spec.max_episode_steps = 500;
    spec.angular.assign(4, false);
  } else if (name == "linear") {
    Mat B = Mat::Zero(2, 2);
    B.diagonal() << 0.8, 1.2;
    return make_linear_env(B);
  } else {
    throw Error(Errc::contract_violation, "unknown environment '" + std::string(name) + "'");
  }
  spec.name = std::string(name);
  return spec;
}

void validate(const EnvSpec& spec) {
  require(spec.state_dim >= 1 && spec.action_dim >= 1, "env dimensions must be >= 1");
  require(spec.action_low.size() == spec.action_dim &&
              spec.action_high.size() == spec.action_dim,
          "action bounds size mismatch");
  require((spec.action_low.array() < spec.action_high.array()).all(),
          "action_low must be below action_high");
  require(spec.dt > 0.0, "dt must be positive");
  require(static_cast<int>(spec.angular.size()) == spec.state_dim, "angular mask size");
}

EnvState reset_to(const EnvSpec& spec, const Vec& s) {
  require(s.size() == spec.state_dim && s.allFinite(), "reset state mismatch");
  return {s, Vec::Zero(spec.action_dim), 0, false};
}

EnvState reset(const EnvSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  Vec s(spec.state_dim);
  switch (spec.kind) {
    case EnvKind::pendulum:
      s(0) = uniform(rng, -std::numbers::pi, std::numbers::pi);
      s(1) = uniform(rng, -1.0, 1.0);
      break;
    case EnvKind::cartpole:
      for (auto& x : s) x = uniform(rng, -0.05, 0.05);
      break;
    case EnvKind::linear:
      for (auto& x : s) x = uniform(rng, -1.0, 1.0);
      break;
  }
  return reset_to(spec, s);
}

Vec clip_action(const EnvSpec& spec, const Vec& a) {
  return a.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
}

double reward_fn(const EnvSpec& spec, const Vec& s, const Vec& a) {
  switch (spec.kind) {
    case EnvKind::pendulum: {
      const double theta = wrap_angle(s(0));
      return -(theta * theta + 0.1 * s(1) * s(1) + 0.001 * a.squaredNorm());
    }
    case EnvKind::cartpole:
      return 1.0;
    case EnvKind::linear:
      return -s.squaredNorm();
  }
  return 0.0;
}

bool termination_fn(const EnvSpec& spec, const Vec& s) {
  if (spec.kind == EnvKind::cartpole) {
    return std::abs(s(2)) > kCartAngleLimit || std::abs(s(0)) > kCartPositionLimit;
  }
  return false;
}

StepResult step(const EnvSpec& spec, const EnvState& state, const Vec& action) {
  require(!state.done, "step called on a finished episode");
  require(action.size() == spec.action_dim && action.allFinite(),
          "action must be finite with matching dimension");
  StepResult result;
  result.applied_action = clip_action(spec, action);
  result.clipped = (result.applied_action.array() != action.array()).any();
  const Vec& a = result.applied_action;

  Vec next;
  switch (spec.kind) {
    case EnvKind::pendulum: {
      // Semi-implicit Euler, theta measured from upright.
      const double theta_acc = kPendulumGravity / kPendulumLength * std::sin(state.s(0)) +
                               a(0) / (kPendulumMass * kPendulumLength * kPendulumLength);
      const double omega = state.s(1) + spec.dt * theta_acc;
      next = Vec(2);
      next << state.s(0) + spec.dt * omega, omega;
      break;
    }
    case EnvKind::cartpole:
      next = rk4(state.s, a(0), spec.dt);
      break;
    case EnvKind::linear:
      next = state.s + spec.B * (a - state.prev_action);
      break;
  }

  result.reward = reward_fn(spec, state.s, a);
  result.next = {std::move(next), a, state.step_count + 1, false};
  if (termination_fn(spec, result.next.s)) {
    result.done_reason = DoneReason::termination;
  } else if (result.next.step_count >= spec.max_episode_steps) {
    result.done_reason = DoneReason::time_limit;
  }
  result.done = result.done_reason != DoneReason::none;
  result.next.done = result.done;
  return result;
}

int feature_dim(const EnvSpec& spec) {
  int dim = 0;
  for (bool is_angle : spec.angular) dim += is_angle ? 2 : 1;
  return dim;
}

Mat features_batch(const std::vector<bool>& angular, const Mat& states) {
  Eigen::Index rows = 0;
  for (bool is_angle : angular) rows += is_angle ? 2 : 1;
  require(static_cast<Eigen::Index>(angular.size()) == states.rows(), "feature mask mismatch");
  Mat out(rows, states.cols());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < angular.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (angular[i]) {
      out.row(r++) = states.row(row).array().cos();
      out.row(r++) = states.row(row).array().sin();
    } else {
      out.row(r++) = states.row(row);
    }
  }
  return out;
}

Vec features(const EnvSpec& spec, const Vec& s) {
  return features_batch(spec.angular, Mat(s)).col(0);
}

double pendulum_energy(const Vec& s) {
  const double inertia = kPendulumMass * kPendulumLength * kPendulumLength;
  return 0.5 * inertia * s(1) * s(1) +
         kPendulumMass * kPendulumGravity * kPendulumLength * std::cos(s(0));
}

}  // namespace incdyn
