// incdyn: train, compare, plot and fine-tune from the command line.
//
//   incdyn train    --config exp.ini [--seed 3] [--env pendulum] [--method incdyn] [--out dir]
//   incdyn compare  --config exp.ini [--out dir]
//   incdyn plot     --in curves.csv --out curves.svg
//   incdyn finetune --env linear --reference ref.txt [--model model.bin] [--steps 50] --out dir

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "incdyn/checkpoint.hpp"
#include "incdyn/finetune.hpp"
#include "incdyn/harness.hpp"

namespace fs = std::filesystem;
using namespace incdyn;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> env;
  std::optional<std::string> method;
  std::optional<std::string> out;
};

ExperimentConfig load(const CommonFlags& flags) {
  ExperimentConfig cfg = flags.config.empty() ? default_experiment() : parse_config(flags.config);
  if (flags.env) {
    default_threshold(*flags.env);  // rejects unknown names
    cfg.env = *flags.env;
  }
  if (flags.seed) cfg.seeds = {*flags.seed};
  if (flags.method) cfg.methods = {parse_method(*flags.method)};
  if (flags.out) cfg.output_dir = *flags.out;
  return cfg;
}

void print_stats(const ExperimentResult& result, double threshold) {
  std::printf("threshold %.1f\n", threshold);
  for (const auto& s : result.stats) {
    std::printf("%-13s solved %d/%d  steps-to-threshold median %.0f  IQR [%.0f, %.0f]\n",
                to_string(s.method), s.solved, s.runs, s.median_steps, s.q25_steps, s.q75_steps);
  }
  for (const auto& run : result.runs) {
    if (run.status == RunStatus::aborted)
      std::printf("%s seed %llu aborted: %s\n", to_string(run.method),
                  static_cast<unsigned long long>(run.seed), run.detail.c_str());
  }
}

int run_train(const CommonFlags& flags, bool compare) {
  ExperimentConfig cfg = load(flags);
  if (compare && !flags.method) cfg.methods = {Method::sac_baseline, Method::incdyn};
  const ExperimentResult result = run_experiment(cfg);
  write_experiment(cfg, result, compare);
  print_stats(result, cfg.effective_threshold());
  for (const auto& run : result.runs)
    if (run.status == RunStatus::aborted) return exit_code(Errc::diverged);
  return 0;
}

int run_finetune(const std::string& env_name, const std::string& reference_path,
                 const std::string& model_path, int steps, const std::string& out_dir,
                 double q_weight, double r_weight) {
  const EnvSpec env = make_env(env_name);
  const auto reference = read_reference(reference_path, env.state_dim, env.action_dim);
  if (reference.empty()) throw Error(Errc::no_data, "reference file has no rows");
  const int horizon = steps > 0 ? steps : static_cast<int>(reference.size());

  Mat L_bar;
  const Vec a0 = Vec::Zero(env.action_dim);
  if (!model_path.empty()) {
    const IncrementalModel model = load_model(model_path);
    L_bar = eval_L(model, reference.front().s_d, a0, a0);
  } else if (env.kind == EnvKind::linear) {
    L_bar = env.B;
  } else {
    throw Error(Errc::contract_violation, "--model is required for nonlinear environments");
  }
  ErrorSystem sys{L_bar, q_weight * Mat::Identity(env.state_dim, env.state_dim),
                  r_weight * Mat::Identity(env.action_dim, env.action_dim)};
  const LqrSolution sol = solve_lqr(sys);
  const TrackingResult tracking =
      track_reference(sol, env, reference, horizon, reset_to(env, reference.front().s_d));

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + out_dir);
  std::ofstream trace(fs::path(out_dir) / "tracking.csv", std::ios::binary);
  if (!trace) throw Error(Errc::io, "cannot write tracking.csv");
  trace << "step,error_norm\n";
  for (std::size_t k = 0; k < tracking.error_norms.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", tracking.error_norms[k]);
    trace << k << ',' << buf << '\n';
  }
  std::printf("LQR converged in %d iterations, closed-loop spectral radius %.6f\n",
              sol.iterations, closed_loop_spectral_radius(sys, sol));
  std::printf("tracked %zu steps%s, %d clipped actions, final error %.6g\n",
              tracking.error_norms.size(), tracking.truncated ? " (episode ended early)" : "",
              tracking.clip_events,
              tracking.error_norms.empty() ? 0.0 : tracking.error_norms.back());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental-model reinforcement learning experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "experiment config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "run a single seed");
    cmd->add_option("--env", flags.env, "pendulum | cartpole | linear");
    cmd->add_option("--method", flags.method, "incdyn | sac_baseline");
    cmd->add_option("--out", flags.out, "output directory");
  };
  auto* train = app.add_subcommand("train", "train one method and write its learning curves");
  add_common(train);
  auto* compare = app.add_subcommand("compare", "run the SAC baseline and incdyn side by side");
  add_common(compare);

  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plot", "render a curves CSV as SVG");
  plot->add_option("--in", plot_in, "curves.csv")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "output SVG path")->required();

  std::string ft_env = "linear", ft_reference, ft_model, ft_out = "out";
  int ft_steps = 0;
  double ft_q = 1.0, ft_r = 0.1;
  auto* finetune = app.add_subcommand("finetune", "LQR residual tracking of a reference");
  finetune->add_option("--env", ft_env, "environment");
  finetune->add_option("--reference", ft_reference, "reference rows: s_d then da_d")
      ->required()
      ->check(CLI::ExistingFile);
  finetune->add_option("--model", ft_model, "incremental model checkpoint");
  finetune->add_option("--steps", ft_steps, "steps to track (default: whole reference)");
  finetune->add_option("--out", ft_out, "output directory");
  finetune->add_option("--q", ft_q, "state cost weight (Q = q I)");
  finetune->add_option("--r", ft_r, "input cost weight (R = r I)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return run_train(flags, false);
    if (*compare) return run_train(flags, true);
    if (*plot) {
      emit_plot(read_csv(plot_in), plot_out);
      return 0;
    }
    if (*finetune) return run_finetune(ft_env, ft_reference, ft_model, ft_steps, ft_out, ft_q, ft_r);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
