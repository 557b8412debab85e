#include "linpo/regret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "linpo/parallel.hpp"

namespace linpo {

TabularPolicy comparator_policy(const LinearMdpInstance& mdp, const LossModel& losses) {
  if (losses.mode == FeedbackMode::adversarial_full_info)
    return best_in_hindsight(mdp, losses.loss_vectors);
  return optimal_policy(mdp, losses.loss_vectors.front()).first;
}

RegretSeries regret_series(const RunRecord& record, const LinearMdpInstance& mdp,
                           const LossModel& losses, bool parallel) {
  const int K = static_cast<int>(record.policy_snapshots.size());
  const ExactDynamics dyn = ExactDynamics::from(mdp);
  const TabularPolicy comp = comparator_policy(mdp, losses);

  RegretSeries out;
  out.agent_value.assign(static_cast<std::size_t>(K), 0.0);
  out.comparator_value.assign(static_cast<std::size_t>(K), 0.0);
  out.instant.assign(static_cast<std::size_t>(K), 0.0);
  out.cumulative.assign(static_cast<std::size_t>(K), 0.0);

  parallel_for(K, parallel, [&](long k) {
    const auto ks = static_cast<std::size_t>(k);
    const Mat& g = losses.loss_matrix(static_cast<int>(k));
    out.agent_value[ks] =
        policy_value(mdp, dyn, record.policy_snapshots[ks], g).initial_value(mdp);
    out.comparator_value[ks] = policy_value(mdp, dyn, comp, g).initial_value(mdp);
    out.instant[ks] = out.agent_value[ks] - out.comparator_value[ks];
  });
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    acc += out.instant[static_cast<std::size_t>(k)];
    out.cumulative[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

double warmup_phase_regret(const WarmupArtifacts& warmup, const LinearMdpInstance& mdp,
                           const LossModel& losses, bool parallel) {
  const ExactDynamics dyn = ExactDynamics::from(mdp);
  const Mat mean_loss = losses.mean_loss_matrix();
  const TabularPolicy comp = comparator_policy(mdp, losses);
  const double comp_value = policy_value(mdp, dyn, comp, mean_loss).initial_value(mdp);

  std::vector<const ExplorerPolicyRecord*> episodes;
  for (const auto& per_h : warmup.episode_policies)
    for (const auto& rec : per_h) episodes.push_back(&rec);

  std::vector<double> values(episodes.size(), 0.0);
  parallel_for(static_cast<long>(episodes.size()), parallel, [&](long i) {
    const TabularPolicy pol = episodes[static_cast<std::size_t>(i)]->to_tabular(
        mdp.horizon, mdp.num_states, mdp.num_actions);
    values[static_cast<std::size_t>(i)] =
        policy_value(mdp, dyn, pol, mean_loss).initial_value(mdp);
  });
  double regret = 0.0;
  for (double v : values) regret += v - comp_value;
  return regret;
}

std::string GoodEventReport::summary() const {
  std::ostringstream os;
  os << "coverage=" << (coverage_ok ? "ok" : "FAIL") << " (max " << max_uncovered_mass << ")"
     << " qbound=" << (qbound_ok ? "ok" : "FAIL") << " (max " << max_restricted_q << ")"
     << " value_reg=" << (value_reg_ok ? "ok" : "FAIL")
     << " loss_est=" << (loss_est_ok ? "ok" : "FAIL")
     << " martingale=" << (martingale_ok ? "ok" : "FAIL");
  return os.str();
}

nlohmann::json DecompositionDiag::to_json() const {
  nlohmann::json j;
  j["bias_total"] = bias_total;
  j["omd_total"] = omd_total;
  j["optimism_total"] = optimism_total;
  j["slack"] = slack;
  j["measured_regret"] = measured_regret;
  j["max_abs_delta"] = max_abs_delta;
  j["bound_holds"] = bound_holds;
  j["good_event"] = {{"coverage_ok", good_event.coverage_ok},
                     {"qbound_ok", good_event.qbound_ok},
                     {"value_reg_ok", good_event.value_reg_ok},
                     {"loss_est_ok", good_event.loss_est_ok},
                     {"martingale_ok", good_event.martingale_ok},
                     {"max_uncovered_mass", good_event.max_uncovered_mass},
                     {"max_restricted_q", good_event.max_restricted_q}};
  return j;
}

namespace {

/// Restricted state values for one (episode, step): zero off the known set,
/// entry S (terminal) zero.
Vec restricted_state_values(const LinearMdpInstance& mdp, const RunRecord& rec,
                            const KnownSetOracle& oracle, int k, int h) {
  Vec vals = Vec::Zero(mdp.num_states + 1);
  const QEstimate& est = rec.estimates[static_cast<std::size_t>(k)][static_cast<std::size_t>(h)];
  const SoftmaxPolicy& pol = rec.policy_snapshots[static_cast<std::size_t>(k)];
  for (int s = 0; s < mdp.num_states; ++s)
    vals(s) = restricted_v(mdp, est, pol, h, s, oracle.is_known(h, s));
  return vals;
}

}  // namespace

DecompositionDiag decomposition_diag(const RunRecord& rec, const LinearMdpInstance& mdp,
                                     const LossModel& losses, const KnownSetOracle& oracle,
                                     bool parallel) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  const int K = static_cast<int>(rec.policy_snapshots.size());
  const ExactDynamics dyn = ExactDynamics::from(mdp);

  DecompositionDiag diag;
  diag.bias_kh = Mat::Zero(std::max(K, 1), H);
  diag.omd_kh = Mat::Zero(std::max(K, 1), H);
  diag.optimism_kh = Mat::Zero(std::max(K, 1), H);
  diag.slack = 4.0 * rec.cfg.eps_cov * H * H * K;
  if (K == 0) return diag;

  const TabularPolicy comp = comparator_policy(mdp, losses);
  const OccupancyTable mu_star = occupancy(mdp, dyn, comp);

  // Exact occupancies of every played policy, shared by all passes below.
  std::vector<OccupancyTable> mu(static_cast<std::size_t>(K));
  parallel_for(K, parallel, [&](long k) {
    mu[static_cast<std::size_t>(k)] =
        occupancy(mdp, dyn, rec.policy_snapshots[static_cast<std::size_t>(k)]);
  });

  std::vector<double> uncovered_max(static_cast<std::size_t>(K), 0.0);
  std::vector<double> restricted_q_max(static_cast<std::size_t>(K), 0.0);
  std::vector<double> delta_max(static_cast<std::size_t>(K), 0.0);

  parallel_for(K, parallel, [&](long kl) {
    const int k = static_cast<int>(kl);
    const auto ks = static_cast<std::size_t>(k);
    const SoftmaxPolicy& pol = rec.policy_snapshots[ks];
    const OccupancyTable& mu_k = mu[ks];
    const Mat& g_true = losses.loss_matrix(k);

    for (int h = 0; h < H; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      const QEstimate& est = rec.estimates[ks][hs];
      const Vec v_next = h + 1 < H ? restricted_state_values(mdp, rec, oracle, k, h + 1)
                                   : Vec::Zero(S + 1);

      const Vec loss_true = mdp.loss_values(g_true.row(h).transpose());
      const Vec loss_hat = mdp.loss_values(est.g_hat);
      const Vec p_hat = mdp.loss_values(est.v_hat);

      double bias_num = 0.0, bias_mass = 0.0;
      double omd_num = 0.0, optimism_num = 0.0, star_mass = 0.0;
      double unknown_mass_k = 0.0, unknown_mass_star = 0.0;

      const Vec marg_k = mu_k.state_marginal(h);
      const Vec marg_star = mu_star.state_marginal(h);

      for (int s = 0; s < S; ++s) {
        const bool known = oracle.is_known(h, s);
        if (!known) {
          unknown_mass_k += marg_k(s);
          unknown_mass_star += marg_star(s);
          continue;
        }
        for (int a = 0; a < A; ++a) {
          const int r = mdp.row(s, a);
          double p_true = 0.0;
          if (h + 1 < H) p_true = dyn.P[hs].row(r) * v_next.head(S);
          const double delta = (loss_hat(r) - loss_true(r)) + (p_hat(r) - p_true);
          const double bonus = est.bonus(mdp, s, a);
          delta_max[ks] = std::max(delta_max[ks], std::abs(delta));
          bias_num += mu_k.mu[hs](s, a) * (-delta + bonus);
          optimism_num += mu_star.mu[hs](s, a) * (delta - bonus);
        }
        bias_mass += marg_k(s);
        star_mass += marg_star(s);

        // OMD gap against the comparator's action choice, unrestricted
        // action values (they coincide with the restricted ones on the
        // known set).
        const Vec pi_k = pol.action_probs(h, s);
        const Vec pi_star = comp.action_probs(h, s);
        double gap = 0.0;
        for (int a = 0; a < A; ++a) {
          const double q = est.q_value(mdp, s, a);
          restricted_q_max[ks] = std::max(restricted_q_max[ks], std::abs(q));
          gap += q * (pi_k(a) - pi_star(a));
        }
        omd_num += marg_star(s) * gap;
      }

      diag.bias_kh(k, h) = bias_mass > 0.0 ? bias_num / bias_mass : 0.0;
      diag.omd_kh(k, h) = star_mass > 0.0 ? omd_num / star_mass : 0.0;
      diag.optimism_kh(k, h) = star_mass > 0.0 ? optimism_num / star_mass : 0.0;
      uncovered_max[ks] = std::max({uncovered_max[ks], unknown_mass_k, unknown_mass_star});
    }
  });

  for (int k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    diag.good_event.max_uncovered_mass =
        std::max(diag.good_event.max_uncovered_mass, uncovered_max[ks]);
    diag.good_event.max_restricted_q =
        std::max(diag.good_event.max_restricted_q, restricted_q_max[ks]);
    diag.max_abs_delta = std::max(diag.max_abs_delta, delta_max[ks]);
    for (int h = 0; h < H; ++h) {
      diag.bias_total += diag.bias_kh(k, h);
      diag.omd_total += diag.omd_kh(k, h);
      diag.optimism_total += diag.optimism_kh(k, h);
    }
  }
  diag.good_event.coverage_ok = diag.good_event.max_uncovered_mass <= rec.cfg.eps_cov + 1e-12;
  diag.good_event.qbound_ok = diag.good_event.max_restricted_q <= 2.0 * H + 1e-9;

  // The regression-error and loss-estimate events compare against the
  // episode covariates Lambda_{k,h}; those are replayed from the warmup
  // covariates held by the oracle plus the recorded trajectories.
  std::vector<char> value_ok(static_cast<std::size_t>(H), 1);
  std::vector<char> loss_ok(static_cast<std::size_t>(H), 1);
  std::vector<char> mart_ok(static_cast<std::size_t>(H), 1);
  parallel_for(H, parallel, [&](long hl) {
    const int h = static_cast<int>(hl);
    const auto hs = static_cast<std::size_t>(h);
    CovarianceAccumulator acc = oracle.covariates()[hs];
    double visited_sum = 0.0, expected_sum = 0.0;
    const double half_beta = 0.5 * rec.beta;
    for (int k = 0; k < K; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const QEstimate& est = rec.estimates[ks][hs];
      const Vec v_next = h + 1 < H ? restricted_state_values(mdp, rec, oracle, k, h + 1)
                                   : Vec::Zero(S + 1);
      const Mat& g_true = losses.loss_matrix(k);
      const Vec loss_true = mdp.loss_values(g_true.row(h).transpose());
      const Vec loss_hat = mdp.loss_values(est.g_hat);
      const Vec p_hat = mdp.loss_values(est.v_hat);

      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          const int r = mdp.row(s, a);
          const double norm = acc.weighted_norm(mdp.phi(s, a));
          double p_true = 0.0;
          if (h + 1 < H) p_true = dyn.P[hs].row(r) * v_next.head(S);
          if (std::abs(p_hat(r) - p_true) > half_beta * norm + 1e-9) value_ok[hs] = 0;
          if (std::abs(loss_hat(r) - loss_true(r)) > half_beta * norm + 1e-9) loss_ok[hs] = 0;
          expected_sum += mu[ks].mu[hs](s, a) * norm;
        }
      const TrajectoryStep& vs = rec.trajectories[ks].steps[hs];
      visited_sum += acc.weighted_norm(mdp.phi(vs.state, vs.action));
      acc.rank_one_update(mdp.phi(vs.state, vs.action));
    }
    const double cap =
        2.0 * visited_sum + 4.0 * std::log(4.0 * std::max(K, 2) * H / rec.cfg.delta);
    if (expected_sum > cap + 1e-9) mart_ok[hs] = 0;
  });
  for (int h = 0; h < H; ++h) {
    diag.good_event.value_reg_ok =
        diag.good_event.value_reg_ok && value_ok[static_cast<std::size_t>(h)] != 0;
    diag.good_event.loss_est_ok =
        diag.good_event.loss_est_ok && loss_ok[static_cast<std::size_t>(h)] != 0;
    diag.good_event.martingale_ok =
        diag.good_event.martingale_ok && mart_ok[static_cast<std::size_t>(h)] != 0;
  }

  diag.measured_regret = regret_series(rec, mdp, losses, parallel).final_cumulative();
  const double rhs = diag.bias_total + diag.omd_total + diag.optimism_total + diag.slack;
  diag.bound_holds = diag.measured_regret <= rhs + 1e-6;
  return diag;
}

OmdCheckResult check_omd_regret(const RunRecord& rec, const LinearMdpInstance& mdp,
                                bool parallel) {
  const int A = mdp.num_actions, H = mdp.horizon;
  const int K = static_cast<int>(rec.policy_snapshots.size());
  OmdCheckResult out;
  if (K == 0) return out;

  std::vector<std::pair<int, int>> tasks;  // (h, s) pairs recorded in trajectories
  for (int h = 0; h < H; ++h) {
    std::vector<char> seen(static_cast<std::size_t>(mdp.num_states), 0);
    for (const auto& t : rec.trajectories)
      seen[static_cast<std::size_t>(t.steps[static_cast<std::size_t>(h)].state)] = 1;
    for (int s = 0; s < mdp.num_states; ++s)
      if (seen[static_cast<std::size_t>(s)]) tasks.push_back({h, s});
  }

  const double cap = 2.0 * H;
  std::vector<int> status(tasks.size(), 0);  // 0 ok, 1 skipped, 2 violation
  std::vector<double> margins(tasks.size(), 0.0);
  parallel_for(static_cast<long>(tasks.size()), parallel, [&](long i) {
    const auto [h, s] = tasks[static_cast<std::size_t>(i)];
    Vec cum_q = Vec::Zero(A);
    double played = 0.0;
    bool in_range = true;
    for (int k = 0; k < K && in_range; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const QEstimate& est = rec.estimates[ks][static_cast<std::size_t>(h)];
      const Vec pi = rec.policy_snapshots[ks].action_probs(h, s);
      for (int a = 0; a < A; ++a) {
        const double q = est.q_value(mdp, s, a);
        if (std::abs(q) > cap || rec.eta * std::abs(q) > 1.0) {
          in_range = false;
          break;
        }
        cum_q(a) += q;
        played += pi(a) * q;
      }
    }
    if (!in_range) {
      status[static_cast<std::size_t>(i)] = 1;
      return;
    }
    // Any fixed comparator on the simplex is dominated by the best single
    // action against the cumulative action values.
    const double best_fixed = cum_q.minCoeff();
    const double regret = played - best_fixed;
    const double bound = std::log(static_cast<double>(A)) / rec.eta +
                         4.0 * rec.eta * H * H * static_cast<double>(K);
    margins[static_cast<std::size_t>(i)] = bound - regret;
    if (regret > bound + 1e-9) status[static_cast<std::size_t>(i)] = 2;
  });

  out.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (status[i] == 1) {
      ++out.states_skipped;
      continue;
    }
    ++out.states_checked;
    out.worst_margin = std::min(out.worst_margin, margins[i]);
    if (status[i] == 2) ++out.violations;
  }
  if (out.states_checked == 0) out.worst_margin = 0.0;
  return out;
}

}  // namespace linpo
