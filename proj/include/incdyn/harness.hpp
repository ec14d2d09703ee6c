#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "incdyn/dyna.hpp"

namespace incdyn {

enum class Method { sac_baseline, incdyn };

const char* to_string(Method method);
Method parse_method(const std::string& text);

/// Return an evaluation must reach to count as "solved" for the
/// steps-to-threshold metric.
double default_threshold(const std::string& env);

struct ExperimentConfig {
  std::vector<Method> methods{Method::incdyn};
  std::string env = "pendulum";
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "out";
  std::optional<double> threshold;  // defaults per environment
  int jobs = 0;                     // worker threads; 0 = hardware concurrency
  TrainConfig train;                // used by incdyn
  TrainConfig baseline;             // used by sac_baseline (M and mixing forced)

  double effective_threshold() const { return threshold.value_or(default_threshold(env)); }
  TrainConfig train_config(Method method, std::uint64_t seed) const;
};

/// Defaults: TrainConfig defaults for incdyn; the baseline runs one gradient
/// update per environment step.
ExperimentConfig default_experiment();

/// Parses `key = value` lines under [experiment], [train], [sac], [model] and
/// [baseline] sections. '#' starts a comment. Keys before the first section
/// belong to [experiment]. Errors: Errc::missing_file, malformed_line,
/// unknown_key, out_of_range.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

inline constexpr const char* kCurveHeader =
    "method,env,seed,env_steps,episodic_return,model_holdout_error,wall_time_s";

struct CurveRow {
  std::string method;
  std::string env;
  std::uint64_t seed = 0;
  std::int64_t env_steps = 0;
  double episodic_return = 0.0;
  double model_holdout_error = 0.0;
  double wall_time_s = 0.0;
};

struct CurveFile {
  std::vector<CurveRow> rows;
};

/// Exact-text CSV: LF endings, returns and errors printed with 17
/// significant digits, wall time with millisecond precision.
std::string to_csv(const CurveFile& curve);
CurveFile parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const CurveFile& curve);
CurveFile read_csv(const std::filesystem::path& path);

/// Same CSV with the wall-time column blanked, for determinism checks.
std::string csv_without_wall_time(const CurveFile& curve);

/// First env_steps whose evaluation return reaches `threshold`.
std::optional<std::int64_t> steps_to_threshold(const std::vector<CurveRecord>& records,
                                               double threshold);

enum class RunStatus { completed, reached_threshold, aborted };
const char* to_string(RunStatus status);

struct RunSummary {
  Method method = Method::incdyn;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::completed;
  std::optional<std::int64_t> steps_to_threshold;
  std::int64_t env_steps = 0;
  double final_return = 0.0;
  std::string detail;
  GaussianPolicy policy;
  IncrementalModel model;
};

struct MethodStats {
  Method method = Method::incdyn;
  // Unsolved runs count as +infinity.
  double median_steps = 0.0;
  double q25_steps = 0.0;
  double q75_steps = 0.0;
  int solved = 0;
  int runs = 0;
};

struct ExperimentResult {
  CurveFile curve;
  std::vector<RunSummary> runs;  // (method, seed) order
  std::vector<MethodStats> stats;
};

/// Linear-interpolated quantile; +inf entries sort last.
double quantile(std::vector<double> values, double q);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes curves.csv, summary.csv, per-run checkpoints
/// (<method>_seed<k>_policy.bin, incdyn_seed<k>_model.bin) and, when `plot`,
/// curves.svg into the configured output directory.
void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& result, bool plot);

std::string summary_csv(const ExperimentConfig& cfg, const ExperimentResult& result);

/// SVG of median return against env_steps per method with interquartile
/// shading. Throws Errc::no_data on an empty curve.
std::string render_plot(const CurveFile& curve);
void emit_plot(const CurveFile& curve, const std::filesystem::path& out);

/// Exit code for an error category: 1 config, 2 diverged, 3 I/O.
int exit_code(Errc code);

}  // namespace incdyn
