#include "linpo/dp.hpp"

#include <stdexcept>

#include "linpo/parallel.hpp"

namespace linpo {

namespace {

/// Reshapes the (S*A) loss value vector into an S x A table.
Mat loss_table(const LinearMdpInstance& mdp, const Vec& g_h) {
  const Vec vals = mdp.loss_values(g_h);
  Mat L(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) L(s, a) = vals(mdp.row(s, a));
  return L;
}

}  // namespace

ValueTables policy_value(const LinearMdpInstance& mdp, const ExactDynamics& dyn,
                         const Policy& policy, const Mat& loss_g) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  ValueTables t;
  t.v = Mat::Zero(H + 1, S);
  t.q.assign(static_cast<std::size_t>(H), Mat::Zero(S, A));

  for (int h = H - 1; h >= 0; --h) {
    Mat& Q = t.q[static_cast<std::size_t>(h)];
    Q = loss_table(mdp, loss_g.row(h).transpose());
    if (h + 1 < H) {
      const Mat& P = dyn.P[static_cast<std::size_t>(h)];  // (S*A) x S
      const Vec v_next = t.v.row(h + 1).transpose();
      const Vec backup = P * v_next;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) Q(s, a) += backup(mdp.row(s, a));
    }
    for (int s = 0; s < S; ++s) t.v(h, s) = policy.action_probs(h, s).dot(Q.row(s).transpose());
  }
  return t;
}

ValueTables policy_value(const LinearMdpInstance& mdp, const Policy& policy, const Mat& loss_g) {
  return policy_value(mdp, ExactDynamics::from(mdp), policy, loss_g);
}

std::pair<TabularPolicy, ValueTables> optimal_policy(const LinearMdpInstance& mdp,
                                                     const ExactDynamics& dyn,
                                                     const Mat& loss_g) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  ValueTables t;
  t.v = Mat::Zero(H + 1, S);
  t.q.assign(static_cast<std::size_t>(H), Mat::Zero(S, A));
  std::vector<std::vector<int>> actions(static_cast<std::size_t>(H),
                                        std::vector<int>(static_cast<std::size_t>(S), 0));

  for (int h = H - 1; h >= 0; --h) {
    Mat& Q = t.q[static_cast<std::size_t>(h)];
    Q = loss_table(mdp, loss_g.row(h).transpose());
    if (h + 1 < H) {
      const Mat& P = dyn.P[static_cast<std::size_t>(h)];
      const Vec backup = P * t.v.row(h + 1).transpose();
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) Q(s, a) += backup(mdp.row(s, a));
    }
    for (int s = 0; s < S; ++s) {
      int best = 0;
      for (int a = 1; a < A; ++a)
        if (Q(s, a) < Q(s, best)) best = a;  // strict: ties keep the lowest id
      actions[static_cast<std::size_t>(h)][static_cast<std::size_t>(s)] = best;
      t.v(h, s) = Q(s, best);
    }
  }
  return {TabularPolicy::deterministic(actions, A), std::move(t)};
}

std::pair<TabularPolicy, ValueTables> optimal_policy(const LinearMdpInstance& mdp,
                                                     const Mat& loss_g) {
  return optimal_policy(mdp, ExactDynamics::from(mdp), loss_g);
}

TabularPolicy best_in_hindsight(const LinearMdpInstance& mdp,
                                const std::vector<Mat>& loss_schedule) {
  if (loss_schedule.empty()) throw std::invalid_argument("empty loss schedule");
  Mat mean = Mat::Zero(loss_schedule.front().rows(), loss_schedule.front().cols());
  for (const Mat& g : loss_schedule) mean += g;
  mean /= static_cast<double>(loss_schedule.size());
  return optimal_policy(mdp, mean).first;
}

OccupancyTable occupancy(const LinearMdpInstance& mdp, const ExactDynamics& dyn,
                         const Policy& policy) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  OccupancyTable t;
  t.mu.assign(static_cast<std::size_t>(H), Mat::Zero(S, A));

  Vec state_dist = Vec::Zero(S);
  state_dist(mdp.initial_state) = 1.0;
  for (int h = 0; h < H; ++h) {
    Mat& mu = t.mu[static_cast<std::size_t>(h)];
    for (int s = 0; s < S; ++s) {
      if (state_dist(s) == 0.0) continue;
      mu.row(s) = state_dist(s) * policy.action_probs(h, s).transpose();
    }
    if (h + 1 < H) {
      const Mat& P = dyn.P[static_cast<std::size_t>(h)];
      Vec next = Vec::Zero(S);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          const double m = mu(s, a);
          if (m != 0.0) next += m * P.row(mdp.row(s, a)).transpose();
        }
      state_dist = next;
    }
  }
  return t;
}

OccupancyTable occupancy(const LinearMdpInstance& mdp, const Policy& policy) {
  return occupancy(mdp, ExactDynamics::from(mdp), policy);
}

std::vector<double> policy_values_batch(const LinearMdpInstance& mdp,
                                        const std::vector<const Policy*>& policies,
                                        const std::vector<const Mat*>& loss_gs,
                                        bool parallel) {
  if (policies.size() != loss_gs.size())
    throw std::invalid_argument("policy_values_batch: size mismatch");
  const ExactDynamics dyn = ExactDynamics::from(mdp);
  std::vector<double> out(policies.size(), 0.0);
  parallel_for(static_cast<long>(policies.size()), parallel, [&](long i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = policy_value(mdp, dyn, *policies[idx], *loss_gs[idx]).initial_value(mdp);
  });
  return out;
}

}  // namespace linpo
