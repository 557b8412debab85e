#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "linpo/env.hpp"
#include "linpo/policy_opt.hpp"
#include "linpo/regret.hpp"
#include "linpo/warmup.hpp"

namespace linpo {

struct InstanceSpec {
  std::string kind = "lowrank";  // "lowrank" or "file"
  int feature_dim = 6;
  int num_states = 6;
  int num_actions = 3;
  int horizon = 3;
  std::uint64_t seed = 42;
  std::string path;  // kind == "file"
};

struct LossSpec {
  std::uint64_t seed = 7;
  double scale = 0.9;
  double noise_width = 0.2;  // bandit noise half-width
  int block_len = 50;        // adversarial sign-block length
  double bias_weight = 0.5;  // adversarial fixed-bias share
};

struct AlgoParams {
  double eta = 0.0;   // 0: Theorem-recipe default sqrt(log A)/(H sqrt(K))
  double beta = 0.0;  // 0: practical default (or the theory formula in theory mode)
  bool theory_mode = false;
  double eps_cov = 0.05;
  double delta = 0.05;
  int warmup_budget = 2000;  // episodes per horizon step
  bool warmup_oracle_dynamics = false;
  double explore_bonus = 1.0;
};

struct ExperimentConfig {
  InstanceSpec instance;
  FeedbackMode mode = FeedbackMode::stochastic_bandit;
  std::vector<int> k_grid = {250, 500, 1000, 2000};
  std::vector<std::uint64_t> seeds = {1};
  AlgoParams algo;
  LossSpec loss;
  std::string output_dir = "experiment";
  bool parallel = true;
  bool diagnostics = true;  // decomposition audit + OMD check per run
  int coverage_probe_policies = 200;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::string& path);

/// Output root: $LINPO_OUT_ROOT when set, else the current directory.
/// Relative experiment output dirs resolve against it.
std::string output_root();
std::string resolve_output_dir(const std::string& dir);

/// Environment pieces built from a config (instance + loss model sized for
/// the largest K in the grid; per-run schedules are prefixes of it).
struct BuiltEnvironment {
  LinearMdpInstance mdp;
  LossModel losses;  // schedule for max K
  nlohmann::json instance_json;

  LossModel losses_for(int num_episodes) const;
};
BuiltEnvironment build_environment(const ExperimentConfig& cfg);

/// Deterministic warmup artifacts with on-disk caching keyed by
/// (instance, warmup parameters, seed). A fresh computation is saved and
/// re-loaded before use so cached and uncached paths replay identically.
WarmupArtifacts warmup_with_cache(const BuiltEnvironment& env, const ExperimentConfig& cfg,
                                  std::uint64_t seed, const std::string& cache_dir,
                                  bool* cache_hit = nullptr);

struct RunSummary {
  int num_episodes = 0;
  std::uint64_t seed = 0;
  double final_regret = 0.0;
  double warmup_regret = 0.0;
  int warmup_episodes = 0;
  bool warmup_warning = false;
  bool assertions_ok = true;
  bool good_event_ok = true;
  bool bound_holds = true;
  int omd_violations = 0;
  bool failed = false;
  std::string error;
};

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points_used = 0;
  std::vector<std::string> warnings;
};

/// Ordinary least squares of log(regret) on log(K). Nonpositive medians are
/// excluded with a warning. Requires >= 3 usable grid points.
ScalingFit fit_scaling(const std::vector<double>& k_values,
                       const std::vector<double>& median_regrets);

struct ExperimentResult {
  std::string dir;
  std::vector<RunSummary> runs;
  std::optional<ScalingFit> fit;
  bool all_ok = true;  // every run's invariant assertions passed
};

/// Full sweep: for each (K, seed) runs warmup (or cache hit), the main
/// phase, the exact regret series, and the diagnostics; writes per-run CSVs,
/// JSON summaries, and a manifest carrying the config hash. Failing runs are
/// isolated and recorded without disturbing sibling outputs.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Tidy plot-ready CSVs (regret curves and medians, bonus decay, epoch
/// events, coverage probes) from a completed artifact directory. Missing
/// runs produce warnings and partial output, never a failure.
std::vector<std::string> emit_plotdata(const std::string& artifact_dir);

/// Recomputes the scaling fit from the summaries in an artifact directory.
ScalingFit fit_from_artifacts(const std::string& artifact_dir);

}  // namespace linpo
