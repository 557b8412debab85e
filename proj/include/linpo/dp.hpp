#pragma once

#include <utility>
#include <vector>

#include "linpo/env.hpp"

namespace linpo {

/// Exact dense transition tables P_h, computed once per instance and shared
/// by the evaluation kernels.
struct ExactDynamics {
  std::vector<Mat> P;  // H-1 entries, (S*A) x S

  static ExactDynamics from(const LinearMdpInstance& mdp) {
    ExactDynamics dyn;
    for (int h = 0; h + 1 < mdp.horizon; ++h) dyn.P.push_back(mdp.transition_matrix(h));
    return dyn;
  }
};

/// Exact value tables for one policy under one loss function.
/// V has H+1 rows (row H is the all-zero terminal row).
struct ValueTables {
  Mat v;               // (H+1) x S
  std::vector<Mat> q;  // H entries, S x A

  double initial_value(const LinearMdpInstance& mdp) const { return v(0, mdp.initial_state); }
};

struct OccupancyTable {
  std::vector<Mat> mu;  // H entries, S x A

  /// Pr[s_h = s] marginals.
  Vec state_marginal(int h) const { return mu[static_cast<std::size_t>(h)].rowwise().sum(); }
};

/// Exact backward policy evaluation. `loss_g` is the H x d loss matrix.
ValueTables policy_value(const LinearMdpInstance& mdp, const ExactDynamics& dyn,
                         const Policy& policy, const Mat& loss_g);
ValueTables policy_value(const LinearMdpInstance& mdp, const Policy& policy, const Mat& loss_g);

/// Exact loss-minimizing policy (greedy on Q*, ties to the lowest action id).
std::pair<TabularPolicy, ValueTables> optimal_policy(const LinearMdpInstance& mdp,
                                                     const ExactDynamics& dyn,
                                                     const Mat& loss_g);
std::pair<TabularPolicy, ValueTables> optimal_policy(const LinearMdpInstance& mdp,
                                                     const Mat& loss_g);

/// Best fixed policy in hindsight for a loss schedule. Values are affine in
/// the losses and the dynamics are shared, so this is the optimal policy for
/// the per-step mean loss.
TabularPolicy best_in_hindsight(const LinearMdpInstance& mdp,
                                const std::vector<Mat>& loss_schedule);

/// Exact forward occupancy recursion.
OccupancyTable occupancy(const LinearMdpInstance& mdp, const ExactDynamics& dyn,
                         const Policy& policy);
OccupancyTable occupancy(const LinearMdpInstance& mdp, const Policy& policy);

/// Initial-state values for many (policy, loss) pairs; data-parallel kernel
/// with `parallel=false` as the serial reference path.
std::vector<double> policy_values_batch(const LinearMdpInstance& mdp,
                                        const std::vector<const Policy*>& policies,
                                        const std::vector<const Mat*>& loss_gs,
                                        bool parallel = true);

}  // namespace linpo
