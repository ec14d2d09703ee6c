#include "incdyn/dyna.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace incdyn {

void validate(const TrainConfig& cfg) {
  require(cfg.epochs >= 0 && cfg.steps_per_epoch >= 0 && cfg.rollouts_per_step >= 0 &&
              cfg.updates_per_step >= 0 && cfg.model_train_steps >= 0 && cfg.warmup_steps >= 0,
          "loop counts must be non-negative");
  require(cfg.real_data_fraction >= 0.0 && cfg.real_data_fraction <= 1.0,
          "real_data_fraction must lie in [0, 1]");
  require(cfg.model_batch_size >= 1 && cfg.model_lr > 0.0, "invalid model training settings");
  require(cfg.env_capacity >= 1 && cfg.model_capacity >= 1, "buffer capacities must be >= 1");
  require(cfg.eval_episodes >= 1, "eval_episodes must be >= 1");
  validate(cfg.sac);
}

std::optional<Transition> model_rollout(const IncrementalModel& model,
                                        const GaussianPolicy& policy, const EnvSpec& env,
                                        const Transition& source, Rng& rng) {
  const ActionSample action = sample_action(policy, source.s, rng, false);
  const Vec s_next = predict(model, source.s, source.a_prev, action.a);
  if (!s_next.allFinite()) return std::nullopt;
  Transition t;
  t.s_prev = source.s_prev;
  t.a_prev = source.a_prev;
  t.s = source.s;
  t.a = action.a;
  t.reward = reward_fn(env, source.s, action.a);
  t.done = termination_fn(env, s_next);
  t.s_next = s_next;
  t.is_imagined = true;
  return t;
}

std::optional<Transition> model_rollout(const IncrementalModel& model,
                                        const GaussianPolicy& policy, const EnvSpec& env,
                                        const Transition& source, std::uint64_t seed) {
  Rng rng(seed);
  return model_rollout(model, policy, env, source, rng);
}

double evaluate_policy(const GaussianPolicy& policy, const EnvSpec& env, int episodes,
                       std::uint64_t seed, const std::optional<Vec>& start) {
  require(episodes >= 1, "evaluate_policy needs at least one episode");
  Rng unused(0);
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    EnvState state = start ? reset_to(env, *start)
                           : reset(env, derive_seed(seed, static_cast<std::uint64_t>(i)));
    while (!state.done) {
      const ActionSample action = sample_action(policy, state.s, unused, true);
      StepResult res = step(env, state, action.a);
      total += res.reward;
      state = std::move(res.next);
    }
  }
  return total / episodes;
}

int real_sample_count(int batch_size, double real_data_fraction, bool have_imagined) {
  if (!have_imagined) return batch_size;
  return static_cast<int>(std::lround(real_data_fraction * batch_size));
}

namespace {

// Rollouts for one env step, batched through the policy and model networks.
// Same semantics as model_rollout applied to each sampled source.
void imagine(const IncrementalModel& model, const GaussianPolicy& policy, const EnvSpec& env,
             const ReplayBuffer& real, ReplayBuffer& imagined, int count, Rng& rng,
             LoopCounters& counters) {
  const std::vector<std::size_t> slots = real.sample_indices(count, rng);
  const auto n = env.state_dim;
  const auto m = env.action_dim;
  Mat s(n, count), a_prev(m, count);
  for (int i = 0; i < count; ++i) {
    s.col(i) = real.slot(slots[i]).s;
    a_prev.col(i) = real.slot(slots[i]).a_prev;
  }
  const Mat out = mlp_forward_batch(policy.net, features_batch(policy.angular, s));
  if (!out.allFinite()) throw Error(Errc::diverged, "policy network produced non-finite output");
  const Mat noise = standard_normal(rng, m, count);
  const Vec low = policy.action_offset - policy.action_scale;
  const Vec high = policy.action_offset + policy.action_scale;
  Mat a(m, count);
  for (int i = 0; i < count; ++i) {
    const ActionSample sample = squash_gaussian(out.col(i).head(m), out.col(i).tail(m),
                                                noise.col(i), policy.action_scale,
                                                policy.action_offset);
    a.col(i) = sample.a.cwiseMax(low).cwiseMin(high);
  }
  Mat s_next;
  try {
    s_next = predict_batch(model, s, a_prev, a);
  } catch (const Error& e) {
    if (e.code() != Errc::diverged) throw;
    counters.rollouts_attempted += count;
    counters.rollouts_discarded += count;
    return;
  }
  for (int i = 0; i < count; ++i) {
    counters.rollouts_attempted += 1;
    if (!s_next.col(i).allFinite()) {
      counters.rollouts_discarded += 1;
      continue;
    }
    const Transition& source = real.slot(slots[i]);
    Transition t;
    t.s_prev = source.s_prev;
    t.a_prev = source.a_prev;
    t.s = source.s;
    t.a = a.col(i);
    t.reward = reward_fn(env, t.s, t.a);
    t.s_next = s_next.col(i);
    t.done = termination_fn(env, t.s_next);
    t.is_imagined = true;
    imagined.push(std::move(t));
  }
}

}  // namespace

TrainingResult run_training(const TrainConfig& cfg) {
  validate(cfg);
  const auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };

  const EnvSpec env = make_env(cfg.env);
  Rng act_rng(derive_seed(cfg.seed, streams::kAct));
  Rng update_rng(derive_seed(cfg.seed, streams::kUpdate));
  Rng rollout_rng(derive_seed(cfg.seed, streams::kRollout));
  const std::uint64_t eval_seed = derive_seed(cfg.seed, streams::kEval);
  const std::uint64_t episode_seed = derive_seed(cfg.seed, streams::kEpisode);

  SacAgent agent = make_agent(env, cfg.sac, derive_seed(cfg.seed, streams::kAgent));
  TrainingResult result;
  result.model = make_model(env, cfg.model, derive_seed(cfg.seed, streams::kModelInit), cfg.prior_L0);
  AdamState model_opt = AdamState::for_params(result.model.net, {.lr = cfg.model_lr});
  const bool use_model = cfg.rollouts_per_step > 0;

  ReplayBuffer real(cfg.env_capacity);
  ReplayBuffer imagined(cfg.model_capacity);
  LoopCounters& counters = result.counters;
  double holdout_error = std::numeric_limits<double>::quiet_NaN();
  bool model_trained = false;

  EnvState state = reset(env, derive_seed(episode_seed, 0));
  Vec s_prev = state.s;
  std::vector<Transition> epoch_data;

  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      if (use_model && !real.empty()) {
        // Score on last epoch's data before the model sees it.
        if (model_trained && !epoch_data.empty()) {
          holdout_error = prediction_error(result.model, ModelBatch::from(epoch_data)).relative();
        }
        train_model(result.model, real, cfg.model_train_steps, cfg.model_batch_size, model_opt,
                    derive_seed(derive_seed(cfg.seed, streams::kModelTrain),
                                static_cast<std::uint64_t>(epoch)));
        model_trained = true;
        counters.model_trainings += 1;
      }
      epoch_data.clear();

      for (int k = 0; k < cfg.steps_per_epoch; ++k) {
        const bool warming_up = counters.env_steps < cfg.warmup_steps;
        Vec action(env.action_dim);
        if (warming_up) {
          for (int j = 0; j < env.action_dim; ++j)
            action(j) = uniform(act_rng, env.action_low(j), env.action_high(j));
        } else {
          action = sample_action(agent.policy, state.s, act_rng, false).a;
        }
        StepResult res = step(env, state, action);
        Transition t{s_prev,     state.prev_action,
                     state.s,    res.applied_action,
                     res.reward, res.next.s,
                     res.done_reason == DoneReason::termination,
                     false};
        if (use_model) epoch_data.push_back(t);
        real.push(std::move(t));
        counters.env_steps += 1;

        if (!warming_up) {
          if (use_model) {
            imagine(result.model, agent.policy, env, real, imagined, cfg.rollouts_per_step,
                    rollout_rng, counters);
          }
          for (int g = 0; g < cfg.updates_per_step; ++g) {
            const bool have_imagined = !imagined.empty();
            const int n_real =
                real_sample_count(cfg.sac.batch_size, cfg.real_data_fraction, have_imagined);
            const int n_imagined = cfg.sac.batch_size - n_real;
            std::vector<std::size_t> real_slots, imagined_slots;
            if (n_real > 0) real_slots = real.sample_indices(n_real, update_rng);
            if (n_imagined > 0) imagined_slots = imagined.sample_indices(n_imagined, update_rng);
            sac_update(agent, SacBatch::from_slots(real, real_slots, &imagined, imagined_slots),
                       update_rng);
            counters.gradient_rounds += 1;
          }
        }

        if (res.done) {
          counters.episodes += 1;
          const double ret = evaluate_policy(agent.policy, env, cfg.eval_episodes, eval_seed);
          result.curve.records.push_back({counters.env_steps, ret, holdout_error, elapsed()});
          state = reset(env, derive_seed(episode_seed, static_cast<std::uint64_t>(counters.episodes)));
          s_prev = state.s;
          if (cfg.stop_return && ret >= *cfg.stop_return) {
            result.policy = agent.policy;
            return result;
          }
        } else {
          s_prev = state.s;
          state = std::move(res.next);
        }
      }
    }
  } catch (const Error& e) {
    if (e.code() != Errc::diverged) throw;
    result.aborted = true;
    result.abort_reason = e.what();
  }
  // A trailing partial episode still gets a row, so short runs are not empty.
  auto& records = result.curve.records;
  if (!result.aborted && counters.env_steps > 0 &&
      (records.empty() || records.back().env_steps < counters.env_steps)) {
    const double ret = evaluate_policy(agent.policy, env, cfg.eval_episodes, eval_seed);
    records.push_back({counters.env_steps, ret, holdout_error, elapsed()});
  }
  result.policy = agent.policy;
  return result;
}

}  // namespace incdyn
