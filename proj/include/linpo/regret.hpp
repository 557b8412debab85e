#pragma once

#include <string>
#include <vector>

#include "linpo/dp.hpp"
#include "linpo/policy_opt.hpp"
#include "linpo/warmup.hpp"

namespace linpo {

struct RegretSeries {
  std::vector<double> agent_value;       // exact V of the episode's policy
  std::vector<double> comparator_value;  // exact V of the fixed comparator
  std::vector<double> instant;
  std::vector<double> cumulative;

  double final_cumulative() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

/// Comparator the regret is measured against: best policy in hindsight for
/// an adversarial schedule, the optimal policy of the true mean loss in
/// bandit mode. Both reduce to exact DP on the schedule mean.
TabularPolicy comparator_policy(const LinearMdpInstance& mdp, const LossModel& losses);

/// Exact per-episode pseudo-regret of the recorded policies. Episode values
/// come from exact DP, not realized losses. Data-parallel over episodes;
/// `parallel=false` is the serial reference and gives bit-identical output.
RegretSeries regret_series(const RunRecord& record, const LinearMdpInstance& mdp,
                           const LossModel& losses, bool parallel = true);

/// Exact pseudo-regret of the recorded warmup exploration policies against
/// the same comparator, valued at the schedule mean loss (warmup is
/// reward-free, so no per-episode schedule applies to it).
double warmup_phase_regret(const WarmupArtifacts& warmup, const LinearMdpInstance& mdp,
                           const LossModel& losses, bool parallel = true);

/// Empirical good-event audit, computed exactly over all states and actions
/// of the finite instance per episode and step.
struct GoodEventReport {
  bool coverage_ok = true;   // occupancy outside the known sets <= eps_cov
  bool qbound_ok = true;     // |restricted Q| <= 2H everywhere
  bool value_reg_ok = true;  // |(P - P_hat) restricted-V| <= beta/2 ||phi||
  bool loss_est_ok = true;   // |loss estimate error| <= beta/2 ||phi||
  bool martingale_ok = true; // expected visited norms vs realized norms bound
  double max_uncovered_mass = 0.0;
  double max_restricted_q = 0.0;

  bool all_ok() const {
    return coverage_ok && qbound_ok && value_reg_ok && loss_est_ok && martingale_ok;
  }
  std::string summary() const;
};

/// Regret-decomposition audit: splits the measured main-phase regret into
/// the Bias / OMD / Optimism terms (conditional expectations at known states
/// under the exact agent and comparator occupancies) plus the coverage slack
/// 4 eps_cov H^2 K, and checks the bound whenever the good event held.
struct DecompositionDiag {
  Mat bias_kh;      // K x H
  Mat omd_kh;       // K x H
  Mat optimism_kh;  // K x H
  double bias_total = 0.0;
  double omd_total = 0.0;
  double optimism_total = 0.0;
  double slack = 0.0;
  double measured_regret = 0.0;
  double max_abs_delta = 0.0;  // worst estimate error at known pairs
  GoodEventReport good_event;
  bool bound_holds = true;

  nlohmann::json to_json() const;
};

DecompositionDiag decomposition_diag(const RunRecord& record, const LinearMdpInstance& mdp,
                                     const LossModel& losses, const KnownSetOracle& oracle,
                                     bool parallel = true);

/// Mirror-descent regret check at recorded states: the multiplicative-weights
/// iterates must beat every fixed comparator up to log(A)/eta + 4 eta H^2 K
/// whenever the recorded action values stay within 2H. The best response is
/// computed exactly in hindsight.
struct OmdCheckResult {
  int states_checked = 0;
  int states_skipped = 0;  // action values out of range somewhere
  int violations = 0;
  double worst_margin = 0.0;  // most negative slack observed
};

OmdCheckResult check_omd_regret(const RunRecord& record, const LinearMdpInstance& mdp,
                                bool parallel = true);

}  // namespace linpo
