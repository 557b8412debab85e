#pragma once

#include <cstdint>
#include <vector>

#include "linpo/covariance.hpp"
#include "linpo/dp.hpp"
#include "linpo/env.hpp"

namespace linpo {

/// Reward-free warmup parameters. `partition_levels` and `gamma` are derived:
/// m = ceil(log2(1 / eps_cov)) and gamma = 1 / (2 beta H), the same tolerance
/// at every level.
struct WarmupConfig {
  double delta = 0.05;
  double beta = 1.0;
  double eps_cov = 0.05;
  int partition_levels = 0;
  double gamma = 0.0;
  int episode_budget = 2000;  // hard cap per step h
  bool oracle_dynamics = false;  // exact-dynamics planner; tests only
  double explore_bonus = 1.0;    // optimism scale of the learned planner

  static WarmupConfig make(double delta, double beta, double eps_cov, int episode_budget,
                           int horizon);
};

struct LevelStats {
  int level = 0;     // 1-based partition level
  int episodes = 0;  // rollouts spent in the level
  double uncovered_fraction = 0.0;  // rollouts whose step-h state was still uncovered
};

/// Explorer policy actually played in one warmup episode, stored compactly.
/// Planning steps are uniform over the recorded argmax set, the target step
/// takes the stored max-weighted-norm action, later steps are uniform.
struct ExplorerPolicyRecord {
  int target_step = 0;
  std::vector<std::vector<std::uint32_t>> argmax_masks;  // [h < target][s]
  std::vector<int> target_actions;                       // [s]

  TabularPolicy to_tabular(int horizon, int num_states, int num_actions) const;
};

struct CoverStepResult {
  std::vector<TrajectoryStep> dataset;  // step-h transitions of this run only
  CovarianceAccumulator covariates;     // I + sum phi phi^T over the dataset
  std::vector<LevelStats> levels;
  int episodes_used = 0;
  bool budget_exhausted = false;
  double trailing_uncovered = 0.0;  // uncovered fraction in the stop window
  std::vector<ExplorerPolicyRecord> episode_policies;

  CoverStepResult(int dim) : covariates(dim) {}
};

/// Coverage collection for one horizon step: iterated optimistic exploration
/// toward directions with weighted norm above gamma, with a halving level
/// schedule. A level ends once a full trailing window of rollouts saw no
/// uncovered step-h state; the budget cap ends the run with a warning status
/// instead of an error.
CoverStepResult cover_step(const LinearMdpInstance& mdp, int h, const WarmupConfig& cfg,
                           std::uint64_t seed);

struct WarmupArtifacts {
  std::vector<std::vector<TrajectoryStep>> datasets;       // per h
  std::vector<CovarianceAccumulator> covariates;           // per h
  std::vector<std::vector<LevelStats>> level_stats;        // per h
  std::vector<double> trailing_uncovered;                  // per h
  std::vector<bool> budget_exhausted;                      // per h
  std::vector<int> episodes_per_step;                      // per h
  std::vector<std::vector<ExplorerPolicyRecord>> episode_policies;  // per h
  int episodes_used = 0;  // total warmup rounds (K_0 - 1)

  bool any_warning() const;
};

/// Runs cover_step independently for every horizon step (independent runs;
/// the step-h covariates are built only from that step's own run) and
/// aggregates the per-step artifacts.
WarmupArtifacts reward_free_warmup(const LinearMdpInstance& mdp, const WarmupConfig& cfg,
                                   std::uint64_t seed, bool parallel = true);

/// Membership test for the known-state sets: s is known at step h iff every
/// action direction satisfies ||phi(s,a)||_{Lambda_{0,h}^{-1}} <= 1/(2 beta H).
/// Membership is pure and fixed after warmup; the table is precomputed so the
/// oracle stays immutable and freely shareable across threads.
class KnownSetOracle {
 public:
  KnownSetOracle(const LinearMdpInstance& mdp, const WarmupArtifacts& artifacts, double beta);
  KnownSetOracle(const LinearMdpInstance& mdp,
                 const std::vector<CovarianceAccumulator>& covariates, double beta);

  bool is_known(int h, int s) const {
    return known_[static_cast<std::size_t>(h)][static_cast<std::size_t>(s)] != 0;
  }
  double max_feature_norm(int h, int s) const {
    return max_norm_[static_cast<std::size_t>(h)][static_cast<std::size_t>(s)];
  }
  double threshold() const { return threshold_; }
  int horizon() const { return static_cast<int>(known_.size()); }
  double known_fraction(int h) const;
  /// The warmup covariates Lambda_{0,h} the sets are defined by.
  const std::vector<CovarianceAccumulator>& covariates() const { return covariates_; }

 private:
  void build(const LinearMdpInstance& mdp);
  double threshold_ = 0.0;
  std::vector<CovarianceAccumulator> covariates_;
  std::vector<std::vector<char>> known_;
  std::vector<std::vector<double>> max_norm_;
};

struct CoverageProbeResult {
  std::vector<double> exact_max;  // per h: max over probed policies of Pr[s_h unknown]
  std::vector<double> mc_max;     // per h: Monte-Carlo estimate (empty when disabled)
};

/// Exact uncovered-mass probe: evaluates Pr[s_h not in Z_h] via exact
/// occupancies for `policy_sample_size` random policies plus the exact-DP
/// optimal policy of the mean loss, and reports the per-h maximum. A positive
/// `rollouts_per_policy` additionally produces Monte-Carlo estimates.
/// Data-parallel over policies; `parallel=false` is the serial reference.
CoverageProbeResult coverage_probe(const LinearMdpInstance& mdp, const LossModel& losses,
                                   const KnownSetOracle& oracle, int policy_sample_size,
                                   int rollouts_per_policy, std::uint64_t seed,
                                   bool parallel = true);

nlohmann::json warmup_to_json(const WarmupArtifacts& artifacts);
WarmupArtifacts warmup_from_json(const nlohmann::json& j);

}  // namespace linpo
