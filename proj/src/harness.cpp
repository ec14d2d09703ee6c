#include "incdyn/harness.hpp"

#include "incdyn/checkpoint.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

namespace incdyn {

const char* to_string(Method method) {
  return method == Method::incdyn ? "incdyn" : "sac_baseline";
}

Method parse_method(const std::string& text) {
  if (text == "incdyn") return Method::incdyn;
  if (text == "sac_baseline") return Method::sac_baseline;
  throw Error(Errc::out_of_range, "unknown method '" + text + "'");
}

const char* to_string(RunStatus status) {
  switch (status) {
    case RunStatus::completed: return "completed";
    case RunStatus::reached_threshold: return "reached_threshold";
    case RunStatus::aborted: return "aborted";
  }
  return "unknown";
}

double default_threshold(const std::string& env) {
  if (env == "pendulum") return -200.0;
  if (env == "cartpole") return 450.0;
  if (env == "linear") return -5.0;
  throw Error(Errc::out_of_range, "unknown environment '" + env + "'");
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::missing_file:
    case Errc::malformed_line:
    case Errc::unknown_key:
    case Errc::out_of_range:
    case Errc::contract_violation:
    case Errc::no_data:
      return 1;
    case Errc::diverged:
    case Errc::non_stabilizable:
      return 2;
    case Errc::io:
      return 3;
  }
  return 1;
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;
  cfg.baseline = cfg.train;
  cfg.baseline.updates_per_step = 1;
  return cfg;
}

TrainConfig ExperimentConfig::train_config(Method method, std::uint64_t seed) const {
  TrainConfig out = method == Method::incdyn ? train : baseline;
  out.env = env;
  out.seed = seed;
  out.sac = train.sac;
  out.model = train.model;
  out.prior_L0 = train.prior_L0;
  if (method == Method::sac_baseline) {
    out.rollouts_per_step = 0;
    out.real_data_fraction = 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// config parsing

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) parts.push_back(trim(item));
  return parts;
}

struct Line {
  int number = 0;
  std::string key;
  std::string value;
};

[[noreturn]] void bad_value(const Line& line, const std::string& why) {
  throw Error(Errc::malformed_line, "line " + std::to_string(line.number) + ": '" + line.key +
                                        " = " + line.value + "': " + why);
}

[[noreturn]] void out_of_range(const Line& line, const std::string& why) {
  throw Error(Errc::out_of_range,
              "line " + std::to_string(line.number) + ": " + line.key + " " + why);
}

double as_double(const Line& line, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty() || !std::isfinite(v))
    bad_value(line, "expected a finite number");
  return v;
}

long long as_int(const Line& line, const std::string& text) {
  long long v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) bad_value(line, "expected an integer");
  return v;
}

int count(const Line& line, long long min = 0) {
  const long long v = as_int(line, line.value);
  if (v < min || v > std::numeric_limits<int>::max())
    out_of_range(line, "must be >= " + std::to_string(min));
  return static_cast<int>(v);
}

double positive(const Line& line) {
  const double v = as_double(line, line.value);
  if (!(v > 0.0)) out_of_range(line, "must be > 0");
  return v;
}

std::vector<int> layer_list(const Line& line) {
  std::vector<int> sizes;
  for (const auto& part : split_list(line.value)) {
    const long long v = as_int(line, part);
    if (v < 1 || v > 1 << 16) out_of_range(line, "layer sizes must be in [1, 65536]");
    sizes.push_back(static_cast<int>(v));
  }
  if (sizes.empty()) out_of_range(line, "needs at least one hidden layer");
  return sizes;
}

using Setter = std::function<void(const Line&)>;

std::map<std::string, Setter> train_keys(TrainConfig& t) {
  return {
      {"epochs", [&t](const Line& l) { t.epochs = count(l); }},
      {"steps_per_epoch", [&t](const Line& l) { t.steps_per_epoch = count(l); }},
      {"rollouts_per_step", [&t](const Line& l) { t.rollouts_per_step = count(l); }},
      {"updates_per_step", [&t](const Line& l) { t.updates_per_step = count(l); }},
      {"model_train_steps", [&t](const Line& l) { t.model_train_steps = count(l); }},
      {"model_batch_size", [&t](const Line& l) { t.model_batch_size = count(l, 1); }},
      {"model_lr", [&t](const Line& l) { t.model_lr = positive(l); }},
      {"real_data_fraction",
       [&t](const Line& l) {
         const double v = as_double(l, l.value);
         if (v < 0.0 || v > 1.0) out_of_range(l, "must lie in [0, 1]");
         t.real_data_fraction = v;
       }},
      {"warmup_steps", [&t](const Line& l) { t.warmup_steps = count(l); }},
      {"env_capacity", [&t](const Line& l) { t.env_capacity = static_cast<std::size_t>(count(l, 1)); }},
      {"model_capacity",
       [&t](const Line& l) { t.model_capacity = static_cast<std::size_t>(count(l, 1)); }},
      {"eval_episodes", [&t](const Line& l) { t.eval_episodes = count(l, 1); }},
      {"stop_return", [&t](const Line& l) { t.stop_return = as_double(l, l.value); }},
  };
}

std::map<std::string, Setter> sac_keys(SacHyper& h) {
  return {
      {"gamma",
       [&h](const Line& l) {
         const double v = as_double(l, l.value);
         if (!(v > 0.0 && v < 1.0)) out_of_range(l, "must lie in (0, 1)");
         h.gamma = v;
       }},
      {"tau",
       [&h](const Line& l) {
         const double v = as_double(l, l.value);
         if (!(v > 0.0 && v <= 1.0)) out_of_range(l, "must lie in (0, 1]");
         h.tau = v;
       }},
      {"alpha", [&h](const Line& l) { h.alpha = positive(l); }},
      {"lr_actor", [&h](const Line& l) { h.lr_actor = positive(l); }},
      {"lr_critic", [&h](const Line& l) { h.lr_critic = positive(l); }},
      {"batch_size", [&h](const Line& l) { h.batch_size = count(l, 1); }},
      {"hidden", [&h](const Line& l) { h.hidden = layer_list(l); }},
  };
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg = default_experiment();
  std::vector<Line> baseline_lines;
  std::optional<std::vector<double>> prior_values;
  std::optional<Line> prior_line;
  bool baseline_updates_set = false;

  std::map<std::string, std::map<std::string, Setter>> sections;
  sections["experiment"] = {
      {"method",
       [&](const Line& l) {
         cfg.methods.clear();
         for (const auto& part : split_list(l.value)) {
           if (part == "both") {
             cfg.methods = {Method::sac_baseline, Method::incdyn};
           } else if (part == "incdyn" || part == "sac_baseline") {
             cfg.methods.push_back(parse_method(part));
           } else {
             out_of_range(l, "must be incdyn, sac_baseline or both");
           }
         }
         if (cfg.methods.empty()) out_of_range(l, "needs at least one method");
       }},
      {"env",
       [&](const Line& l) {
         if (l.value != "pendulum" && l.value != "cartpole" && l.value != "linear")
           out_of_range(l, "must be pendulum, cartpole or linear");
         cfg.env = l.value;
       }},
      {"seeds",
       [&](const Line& l) {
         cfg.seeds.clear();
         for (const auto& part : split_list(l.value)) {
           const long long v = as_int(l, part);
           if (v < 0) out_of_range(l, "seeds must be non-negative");
           cfg.seeds.push_back(static_cast<std::uint64_t>(v));
         }
         if (cfg.seeds.empty()) out_of_range(l, "needs at least one seed");
       }},
      {"output_dir",
       [&](const Line& l) {
         if (l.value.empty()) bad_value(l, "empty path");
         cfg.output_dir = l.value;
       }},
      {"threshold", [&](const Line& l) { cfg.threshold = as_double(l, l.value); }},
      {"jobs", [&](const Line& l) { cfg.jobs = count(l); }},
  };
  sections["train"] = train_keys(cfg.train);
  sections["sac"] = sac_keys(cfg.train.sac);
  sections["model"] = {
      {"hidden", [&](const Line& l) { cfg.train.model.hidden = layer_list(l); }},
      {"activation",
       [&](const Line& l) {
         if (l.value == "tanh") cfg.train.model.activation = Activation::tanh;
         else if (l.value == "relu") cfg.train.model.activation = Activation::relu;
         else out_of_range(l, "must be tanh or relu");
       }},
      {"mode",
       [&](const Line& l) {
         if (l.value == "full") cfg.train.model.mode = LMode::full;
         else if (l.value == "diagonal") cfg.train.model.mode = LMode::diagonal;
         else out_of_range(l, "must be full or diagonal");
       }},
      {"input",
       [&](const Line& l) {
         if (l.value == "prev_action") cfg.train.model.input = ModelInput::prev_action;
         else if (l.value == "prev_action_and_action")
           cfg.train.model.input = ModelInput::prev_action_and_action;
         else out_of_range(l, "must be prev_action or prev_action_and_action");
       }},
      {"prior",
       [&](const Line& l) {
         std::vector<double> values;
         for (const auto& part : split_list(l.value)) values.push_back(as_double(l, part));
         prior_values = std::move(values);
         prior_line = l;
       }},
  };
  // Baseline overrides are applied after the whole file is read.
  std::map<std::string, Setter> baseline_probe = train_keys(cfg.baseline);
  sections["baseline"] = {};
  for (const auto& [key, setter] : baseline_probe) {
    sections["baseline"][key] = [&, key](const Line& l) {
      if (key == "updates_per_step") baseline_updates_set = true;
      baseline_lines.push_back(l);
    };
  }

  std::string section = "experiment";
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw Error(Errc::malformed_line,
                    "line " + std::to_string(number) + ": bad section header '" + line + "'");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!sections.contains(section)) {
        throw Error(Errc::unknown_key,
                    "line " + std::to_string(number) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::malformed_line,
                  "line " + std::to_string(number) + ": expected 'key = value'");
    }
    Line parsed{number, trim(std::string_view(line).substr(0, eq)),
                trim(std::string_view(line).substr(eq + 1))};
    if (parsed.key.empty()) {
      throw Error(Errc::malformed_line, "line " + std::to_string(number) + ": empty key");
    }
    auto& keys = sections.at(section);
    const auto it = keys.find(parsed.key);
    if (it == keys.end()) {
      throw Error(Errc::unknown_key, "line " + std::to_string(number) + ": unknown key '" +
                                         parsed.key + "' in [" + section + "]");
    }
    it->second(parsed);
  }

  cfg.baseline = cfg.train;
  if (!baseline_updates_set) cfg.baseline.updates_per_step = 1;
  auto baseline_setters = train_keys(cfg.baseline);
  for (const auto& l : baseline_lines) {
    if (l.key == "rollouts_per_step" && as_int(l, l.value) != 0)
      out_of_range(l, "is fixed to 0 for the baseline");
    if (l.key == "real_data_fraction" && as_double(l, l.value) != 1.0)
      out_of_range(l, "is fixed to 1 for the baseline");
    baseline_setters.at(l.key)(l);
  }

  if (prior_values) {
    const EnvSpec env = make_env(cfg.env);
    const auto expected = static_cast<std::size_t>(env.state_dim * env.action_dim);
    if (prior_values->size() != expected)
      out_of_range(*prior_line, "needs " + std::to_string(expected) + " values (row-major n x m)");
    Mat prior(env.state_dim, env.action_dim);
    for (int i = 0; i < env.state_dim; ++i)
      for (int j = 0; j < env.action_dim; ++j)
        prior(i, j) = (*prior_values)[static_cast<std::size_t>(i * env.action_dim + j)];
    cfg.train.prior_L0 = prior;
  }
  if (cfg.train.model.mode == LMode::diagonal) {
    const EnvSpec env = make_env(cfg.env);
    if (env.state_dim != env.action_dim) {
      throw Error(Errc::out_of_range, "diagonal model mode needs state_dim == action_dim");
    }
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_file, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

// ---------------------------------------------------------------------------
// curve files

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_row(std::string& out, const CurveRow& row, bool with_wall_time) {
  out += row.method;
  out += ',';
  out += row.env;
  out += ',';
  out += std::to_string(row.seed);
  out += ',';
  out += std::to_string(row.env_steps);
  out += ',';
  out += format_double(row.episodic_return);
  out += ',';
  out += format_double(row.model_holdout_error);
  out += ',';
  if (with_wall_time) out += format_double(row.wall_time_s);
  out += '\n';
}

}  // namespace

std::string to_csv(const CurveFile& curve) {
  std::string out = kCurveHeader;
  out += '\n';
  for (const auto& row : curve.rows) append_row(out, row, true);
  return out;
}

std::string csv_without_wall_time(const CurveFile& curve) {
  std::string out = kCurveHeader;
  out += '\n';
  for (const auto& row : curve.rows) append_row(out, row, false);
  return out;
}

CurveFile parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) {
    throw Error(Errc::malformed_line, "curve file header must be exactly '" +
                                          std::string(kCurveHeader) + "'");
  }
  CurveFile curve;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 7) {
      throw Error(Errc::malformed_line, "curve line " + std::to_string(number) + ": 7 fields expected");
    }
    auto number_of = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0')
        throw Error(Errc::malformed_line, "curve line " + std::to_string(number) + ": bad number");
      return v;
    };
    CurveRow r;
    r.method = fields[0];
    r.env = fields[1];
    r.seed = std::stoull(fields[2]);
    r.env_steps = std::stoll(fields[3]);
    r.episodic_return = number_of(fields[4]);
    r.model_holdout_error = number_of(fields[5]);
    r.wall_time_s = number_of(fields[6]);
    curve.rows.push_back(std::move(r));
  }
  return curve;
}

void write_csv(const std::filesystem::path& path, const CurveFile& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << to_csv(curve);
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

CurveFile read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

std::optional<std::int64_t> steps_to_threshold(const std::vector<CurveRecord>& records,
                                               double threshold) {
  for (const auto& r : records) {
    if (r.episodic_return >= threshold) return r.env_steps;
  }
  return std::nullopt;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  if (lo == hi || values[lo] == values[hi]) return values[lo];
  if (std::isinf(values[hi])) return std::numeric_limits<double>::infinity();
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------
// experiments

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  require(!cfg.seeds.empty(), "experiment needs at least one seed");
  require(!cfg.methods.empty(), "experiment needs at least one method");
  const double threshold = cfg.effective_threshold();

  struct Job {
    Method method;
    std::uint64_t seed;
    TrainingResult result;
    std::optional<Error> error;
  };
  std::vector<Job> jobs;
  for (Method method : cfg.methods)
    for (std::uint64_t seed : cfg.seeds) jobs.push_back({method, seed, {}, std::nullopt});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        jobs[i].result = run_training(cfg.train_config(jobs[i].method, jobs[i].seed));
      } catch (const Error& e) {
        jobs[i].error = e;
      }
    }
  };
  unsigned workers = cfg.jobs > 0 ? static_cast<unsigned>(cfg.jobs)
                                  : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  ExperimentResult out;
  for (auto& job : jobs) {
    if (job.error) throw *job.error;  // contract/config problems are not run outcomes
    RunSummary summary;
    summary.method = job.method;
    summary.seed = job.seed;
    const auto& records = job.result.curve.records;
    summary.steps_to_threshold = steps_to_threshold(records, threshold);
    summary.env_steps = job.result.counters.env_steps;
    summary.final_return = records.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : records.back().episodic_return;
    if (job.result.aborted) {
      summary.status = RunStatus::aborted;
      summary.detail = job.result.abort_reason;
    } else if (summary.steps_to_threshold) {
      summary.status = RunStatus::reached_threshold;
    }
    for (const auto& r : records) {
      out.curve.rows.push_back({to_string(job.method), cfg.env, job.seed, r.env_steps,
                                r.episodic_return, r.model_holdout_error, r.wall_time});
    }
    summary.policy = std::move(job.result.policy);
    summary.model = std::move(job.result.model);
    out.runs.push_back(std::move(summary));
  }

  for (Method method : cfg.methods) {
    MethodStats stats;
    stats.method = method;
    std::vector<double> steps;
    for (const auto& run : out.runs) {
      if (run.method != method) continue;
      stats.runs += 1;
      if (run.steps_to_threshold) {
        stats.solved += 1;
        steps.push_back(static_cast<double>(*run.steps_to_threshold));
      } else {
        steps.push_back(std::numeric_limits<double>::infinity());
      }
    }
    stats.median_steps = quantile(steps, 0.5);
    stats.q25_steps = quantile(steps, 0.25);
    stats.q75_steps = quantile(steps, 0.75);
    out.stats.push_back(stats);
  }
  return out;
}

std::string summary_csv(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::string out = "method,env,seed,status,threshold,steps_to_threshold,env_steps,final_return\n";
  for (const auto& run : result.runs) {
    out += std::string(to_string(run.method)) + ',' + cfg.env + ',' + std::to_string(run.seed) +
           ',' + to_string(run.status) + ',' + format_double(cfg.effective_threshold()) + ',' +
           (run.steps_to_threshold ? std::to_string(*run.steps_to_threshold) : "") + ',' +
           std::to_string(run.env_steps) + ',' + format_double(run.final_return) + '\n';
  }
  return out;
}

void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& result, bool plot) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + cfg.output_dir.string() + ": " + ec.message());
  write_csv(cfg.output_dir / "curves.csv", result.curve);
  std::ofstream summary(cfg.output_dir / "summary.csv", std::ios::binary);
  if (!summary) throw Error(Errc::io, "cannot write summary.csv");
  summary << summary_csv(cfg, result);
  for (const auto& run : result.runs) {
    const std::string stem = std::string(to_string(run.method)) + "_seed" + std::to_string(run.seed);
    if (!run.policy.net.layers.empty()) save_policy(cfg.output_dir / (stem + "_policy.bin"), run.policy);
    if (run.method == Method::incdyn && !run.model.net.layers.empty())
      save_model(cfg.output_dir / (stem + "_model.bin"), run.model);
  }
  if (plot && !result.curve.rows.empty()) emit_plot(result.curve, cfg.output_dir / "curves.svg");
}

// ---------------------------------------------------------------------------
// plotting

namespace {

struct Band {
  std::vector<double> x, median, q25, q75;
};

Band aggregate(const std::vector<const CurveRow*>& rows) {
  std::map<std::uint64_t, std::vector<const CurveRow*>> by_seed;
  std::vector<double> grid;
  for (const CurveRow* r : rows) {
    by_seed[r->seed].push_back(r);
    grid.push_back(static_cast<double>(r->env_steps));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (auto& [seed, seq] : by_seed) {
    std::stable_sort(seq.begin(), seq.end(),
                     [](const CurveRow* a, const CurveRow* b) { return a->env_steps < b->env_steps; });
  }
  Band band;
  for (double x : grid) {
    std::vector<double> values;
    for (const auto& [seed, seq] : by_seed) {
      // last value at or before x, once the seed has data
      const CurveRow* latest = nullptr;
      for (const CurveRow* r : seq) {
        if (static_cast<double>(r->env_steps) <= x) latest = r;
        else break;
      }
      if (latest) values.push_back(latest->episodic_return);
    }
    band.x.push_back(x);
    band.median.push_back(quantile(values, 0.5));
    band.q25.push_back(quantile(values, 0.25));
    band.q75.push_back(quantile(values, 0.75));
  }
  return band;
}

std::pair<double, double> padded(double lo, double hi) {
  const double span = hi - lo;
  if (span > 0.0) return {lo - 0.05 * span, hi + 0.05 * span};
  const double pad = lo != 0.0 ? 0.05 * std::abs(lo) : 0.5;
  return {lo - pad, hi + pad};
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

}  // namespace

std::string render_plot(const CurveFile& curve) {
  if (curve.rows.empty()) throw Error(Errc::no_data, "cannot plot an empty curve");
  std::vector<std::string> methods;
  for (const auto& row : curve.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end())
      methods.push_back(row.method);
  }
  std::vector<Band> bands;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& method : methods) {
    std::vector<const CurveRow*> rows;
    for (const auto& row : curve.rows)
      if (row.method == method) rows.push_back(&row);
    bands.push_back(aggregate(rows));
    const Band& b = bands.back();
    x_lo = std::min(x_lo, b.x.front());
    x_hi = std::max(x_hi, b.x.back());
    y_lo = std::min(y_lo, *std::min_element(b.q25.begin(), b.q25.end()));
    y_hi = std::max(y_hi, *std::max_element(b.q75.begin(), b.q75.end()));
  }
  const auto [x_min, x_max] = padded(x_lo, x_hi);
  const auto [y_min, y_max] = padded(y_lo, y_hi);

  constexpr double kWidth = 800, kHeight = 500;
  constexpr double kLeft = 80, kTop = 30, kPlotW = 560, kPlotH = 400;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * kPlotW; };
  auto py = [&](double y) { return kTop + (y_max - y) / (y_max - y_min) * kPlotH; };
  auto num = [](double v) { return format_double(v); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 " +
         num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<g id=\"plot-area\" data-left=\"" + num(kLeft) + "\" data-top=\"" + num(kTop) +
         "\" data-width=\"" + num(kPlotW) + "\" data-height=\"" + num(kPlotH) +
         "\" data-x-min=\"" + num(x_min) + "\" data-x-max=\"" + num(x_max) + "\" data-y-min=\"" +
         num(y_min) + "\" data-y-max=\"" + num(y_max) + "\">\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(kPlotW) +
         "\" height=\"" + num(kPlotH) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 4.0;
    const double yv = y_min + (y_max - y_min) * i / 4.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.0f", xv);
    svg += "<text class=\"tick\" x=\"" + num(px(xv)) + "\" y=\"" + num(kTop + kPlotH + 18) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + buf + "</text>\n";
    std::snprintf(buf, sizeof buf, "%.1f", yv);
    svg += "<text class=\"tick\" x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(yv) + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + buf + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + kPlotW / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" font-size=\"13\" text-anchor=\"middle\">environment steps</text>\n";
  svg += "<text x=\"16\" y=\"" + num(kTop + kPlotH / 2) +
         "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + kPlotH / 2) + ")\">evaluation return</text>\n";

  for (std::size_t k = 0; k < bands.size(); ++k) {
    const Band& b = bands[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string band_points, line_points;
    for (std::size_t i = 0; i < b.x.size(); ++i)
      band_points += num(px(b.x[i])) + "," + num(py(b.q75[i])) + " ";
    for (std::size_t i = b.x.size(); i-- > 0;)
      band_points += num(px(b.x[i])) + "," + num(py(b.q25[i])) + " ";
    for (std::size_t i = 0; i < b.x.size(); ++i)
      line_points += num(px(b.x[i])) + "," + num(py(b.median[i])) + " ";
    svg += "<g class=\"series\" data-method=\"" + methods[k] + "\">\n";
    svg += "<polygon class=\"iqr\" points=\"" + band_points + "\" fill=\"" + color +
           "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    svg += "<polyline class=\"median\" points=\"" + line_points + "\" fill=\"none\" stroke=\"" +
           color + "\" stroke-width=\"1.5\"/>\n";
    for (std::size_t i = 0; i < b.x.size(); ++i) {
      svg += "<circle class=\"marker\" cx=\"" + num(px(b.x[i])) + "\" cy=\"" +
             num(py(b.median[i])) + "\" r=\"2\" fill=\"" + color + "\"/>\n";
    }
    svg += "</g>\n";
  }
  svg += "</g>\n";
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const double y = kTop + 20 + 20 * static_cast<double>(k);
    const char* color = kPalette[k % std::size(kPalette)];
    svg += "<g class=\"legend\"><rect x=\"" + num(kLeft + kPlotW + 15) + "\" y=\"" + num(y - 9) +
           "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/><text x=\"" +
           num(kLeft + kPlotW + 32) + "\" y=\"" + num(y + 1) + "\" font-size=\"12\">" +
           methods[k] + "</text></g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const CurveFile& curve, const std::filesystem::path& out) {
  const std::string svg = render_plot(curve);
  std::ofstream file(out, std::ios::binary);
  if (!file) throw Error(Errc::io, "cannot write " + out.string());
  file << svg;
  if (!file) throw Error(Errc::io, "write failed for " + out.string());
}

}  // namespace incdyn
