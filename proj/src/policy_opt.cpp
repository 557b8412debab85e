#include "linpo/policy_opt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "linpo/jsonio.hpp"

namespace linpo {

double default_eta(int num_actions, int horizon, int num_episodes) {
  const double k = std::max(num_episodes, 1);
  return std::sqrt(std::log(std::max(num_actions, 2))) / (horizon * std::sqrt(k));
}

namespace {
double beta_log_term(int feature_dim, int horizon, int num_episodes, double delta) {
  const double k = std::max(num_episodes, 2);
  return std::log(feature_dim * horizon * k / delta);
}
}  // namespace

double practical_beta(int feature_dim, int horizon, int num_episodes, double delta) {
  return 0.5 * std::sqrt(static_cast<double>(feature_dim)) *
         beta_log_term(feature_dim, horizon, num_episodes, delta);
}

double theory_beta(int feature_dim, int horizon, int num_episodes, double delta) {
  const double d = feature_dim;
  return 2.0 * std::pow(d, 1.5) * horizon *
         beta_log_term(feature_dim, horizon, num_episodes, delta);
}

double restricted_value_cap(int horizon, int h) {
  return (horizon - h) * (1.0 + 2.0 / horizon);
}

double RunConfig::resolved_eta(int num_actions, int horizon) const {
  return eta > 0.0 ? eta : default_eta(num_actions, horizon, num_episodes);
}

double RunConfig::resolved_beta(int feature_dim, int horizon) const {
  if (beta > 0.0) return beta;
  return theory_mode ? theory_beta(feature_dim, horizon, num_episodes, delta)
                     : practical_beta(feature_dim, horizon, num_episodes, delta);
}

SoftmaxPolicy::SoftmaxPolicy(const LinearMdpInstance* mdp, int horizon) : mdp_(mdp) {
  theta_.assign(static_cast<std::size_t>(horizon), Vec::Zero(mdp->feature_dim));
  bonus_terms_.assign(static_cast<std::size_t>(horizon), {});
}

Vec SoftmaxPolicy::logits(int h, int s) const {
  const int A = mdp_->num_actions;
  Vec out(A);
  const auto& terms = bonus_terms_[static_cast<std::size_t>(h)];
  for (int a = 0; a < A; ++a) {
    const Vec phi = mdp_->phi(s, a);
    double logit = phi.dot(theta_[static_cast<std::size_t>(h)]);
    for (const BonusTerm& t : terms) logit += t.coefficient * t.snapshot->weighted_norm(phi);
    out(a) = logit;
  }
  return out;
}

Vec SoftmaxPolicy::action_probs(int h, int s) const {
  Vec l = logits(h, s);
  const double top = l.maxCoeff();
  Vec p = (l.array() - top).exp();
  return p / p.sum();
}

void SoftmaxPolicy::omd_step(int h, const Vec& grad, double eta, double beta,
                             const std::shared_ptr<const EpochSnapshot>& active_snapshot) {
  theta_[static_cast<std::size_t>(h)] -= eta * grad;
  auto& terms = bonus_terms_[static_cast<std::size_t>(h)];
  if (terms.empty() || terms.back().snapshot != active_snapshot)
    terms.push_back({0.0, active_snapshot});
  terms.back().coefficient += eta * beta;
}

double QEstimate::bonus(const LinearMdpInstance& mdp, int s, int a) const {
  return beta * bonus_snapshot->weighted_norm(mdp.phi(s, a));
}

double QEstimate::q_value(const LinearMdpInstance& mdp, int s, int a) const {
  const Vec phi = mdp.phi(s, a);
  return phi.dot(g_hat) + phi.dot(v_hat) - beta * bonus_snapshot->weighted_norm(phi);
}

double restricted_q(const LinearMdpInstance& mdp, const QEstimate& est, int s, int a,
                    bool known) {
  return known ? est.q_value(mdp, s, a) : 0.0;
}

double restricted_v(const LinearMdpInstance& mdp, const QEstimate& est, const Policy& policy,
                    int h, int s, bool known) {
  if (!known) return 0.0;
  const Vec p = policy.action_probs(h, s);
  double v = 0.0;
  for (int a = 0; a < mdp.num_actions; ++a) v += p(a) * est.q_value(mdp, s, a);
  return v;
}

Vec regress_value(const LinearMdpInstance& mdp, const TransitionDataset& data,
                  const CovarianceAccumulator& acc,
                  const std::function<double(int)>& v_next) {
  // sum_i phi_i v(s'_i) grouped by (s,a,s') counts.
  Vec next_vals(mdp.num_states + 1);
  for (int sp = 0; sp <= mdp.num_states; ++sp) next_vals(sp) = v_next(sp);
  const Vec row_weights = data.counts * next_vals;  // per (s,a)
  const Vec target_sum = mdp.features.transpose() * row_weights;
  return acc.solve(target_sum);
}

Vec estimate_loss(FeedbackMode mode, const Vec* observed_g, const TransitionDataset& data,
                  const CovarianceAccumulator& acc) {
  if (mode == FeedbackMode::adversarial_full_info) {
    if (observed_g == nullptr)
      throw std::invalid_argument("full-info loss estimate needs the observed loss vector");
    return *observed_g;  // pass-through, bit-identical
  }
  if (observed_g != nullptr)
    throw std::invalid_argument("bandit mode carries no loss vector feedback");
  return acc.solve(data.loss_feature_sum);
}

RunRecord run(const LinearMdpInstance& mdp, const LossModel& losses,
              const WarmupArtifacts& warmup, const RunConfig& cfg) {
  KnownSetOracle oracle(mdp, warmup, cfg.resolved_beta(mdp.feature_dim, mdp.horizon));
  return run(mdp, losses, warmup, oracle, cfg);
}

RunRecord run(const LinearMdpInstance& mdp, const LossModel& losses,
              const WarmupArtifacts& warmup, const KnownSetOracle& oracle,
              const RunConfig& cfg) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon, d = mdp.feature_dim;
  const int K = cfg.num_episodes;
  if (losses.mode != cfg.mode)
    throw std::invalid_argument("run config and loss model disagree on feedback mode");
  if (losses.mode == FeedbackMode::adversarial_full_info && losses.schedule_length() < K)
    throw std::invalid_argument("adversarial schedule shorter than the episode count");

  RunRecord rec;
  rec.cfg = cfg;
  rec.eta = cfg.resolved_eta(A, H);
  rec.beta = cfg.resolved_beta(d, H);
  rec.warmup_episodes = warmup.episodes_used;
  rec.warmup_warning = warmup.any_warning();
  rec.warmup_trailing_uncovered = warmup.trailing_uncovered;
  rec.epochs.assign(static_cast<std::size_t>(H), {});
  rec.epoch_count_per_h.assign(static_cast<std::size_t>(H), 0);
  rec.elliptical_sum_per_h.assign(static_cast<std::size_t>(H), 0.0);
  rec.visited_norm_sum_per_h.assign(static_cast<std::size_t>(H), 0.0);
  rec.total_updates_per_h.assign(static_cast<std::size_t>(H), 0);

  // Per-step state: covariates seeded by warmup, datasets in count form.
  // Warmup transitions contribute features and regression targets; their
  // realized losses are never used.
  std::vector<CovarianceAccumulator> acc = warmup.covariates;
  std::vector<TransitionDataset> data(static_cast<std::size_t>(H),
                                      TransitionDataset(S, A, d));
  for (int h = 0; h < H; ++h) {
    for (const TrajectoryStep& t : warmup.datasets[static_cast<std::size_t>(h)]) {
      const int col = t.next_state >= S ? S : t.next_state;
      data[static_cast<std::size_t>(h)].counts(mdp.row(t.state, t.action), col) += 1.0;
      ++data[static_cast<std::size_t>(h)].size;
    }
  }

  std::vector<std::shared_ptr<const EpochSnapshot>> active(static_cast<std::size_t>(H));
  SoftmaxPolicy policy(&mdp, H);

  rec.trajectories.reserve(static_cast<std::size_t>(K));
  rec.estimates.reserve(static_cast<std::size_t>(K));
  rec.policy_snapshots.reserve(static_cast<std::size_t>(K));

  for (int k = 0; k < K; ++k) {
    rec.policy_snapshots.push_back(policy);

    Rng rng = Rng::keyed(cfg.seed, rng_stream::kRollout, static_cast<std::uint64_t>(k));
    Trajectory traj = rollout(mdp, losses, policy, k, rng);

    std::vector<QEstimate> ests(static_cast<std::size_t>(H));
    EpisodeDiag diag;
    int known_visits = 0;

    // Restricted value of the step below, memoized over states. Step H-1
    // regresses against the all-zero terminal value.
    Vec v_next_vals = Vec::Zero(S + 1);

    for (int h = H - 1; h >= 0; --h) {
      auto& acc_h = acc[static_cast<std::size_t>(h)];
      auto& data_h = data[static_cast<std::size_t>(h)];

      // Determinant-doubling epoch check; the very first check compares
      // against the empty snapshot and always refreshes.
      if (should_refresh_epoch(acc_h, active[static_cast<std::size_t>(h)].get())) {
        const int index = rec.epoch_count_per_h[static_cast<std::size_t>(h)]++;
        auto snap = std::make_shared<const EpochSnapshot>(
            EpochSnapshot::freeze(acc_h, index, k));
        active[static_cast<std::size_t>(h)] = snap;
        rec.epochs[static_cast<std::size_t>(h)].push_back(snap);
        rec.epoch_events.push_back({h, index, k, acc_h.log_det()});
      }

      QEstimate est;
      est.beta = rec.beta;
      est.bonus_snapshot = active[static_cast<std::size_t>(h)];
      if (h == H - 1) {
        est.v_hat = Vec::Zero(d);
      } else {
        est.v_hat = regress_value(mdp, data_h, acc_h,
                                  [&](int sp) { return sp >= S ? 0.0 : v_next_vals(sp); });
      }
      const Vec* observed = cfg.mode == FeedbackMode::adversarial_full_info
                                ? &traj.feedback_vectors[static_cast<std::size_t>(h)]
                                : nullptr;
      est.g_hat = estimate_loss(cfg.mode, observed, data_h, acc_h);

      // Diagnostics at the visited pair, against the pre-update covariates.
      const TrajectoryStep& vs = traj.steps[static_cast<std::size_t>(h)];
      const Vec phi_visit = mdp.phi(vs.state, vs.action);
      const double wnorm = acc_h.weighted_norm(phi_visit);
      rec.visited_norm_sum_per_h[static_cast<std::size_t>(h)] += wnorm;
      rec.elliptical_sum_per_h[static_cast<std::size_t>(h)] += wnorm * wnorm;
      diag.max_bonus = std::max(diag.max_bonus, est.bonus(mdp, vs.state, vs.action));

      const bool known = oracle.is_known(h, vs.state);
      if (known) {
        ++known_visits;
        const double q = est.q_value(mdp, vs.state, vs.action);
        if (std::abs(q) > restricted_value_cap(H, h) + 1e-9) {
          diag.qbound_ok = false;
          ++rec.qbound_violations;
        }
        // Optimism at the visited known pair: the optimistic estimate should
        // not exceed the true loss plus the true backup of the restricted
        // value below.
        const Mat& g_true = losses.loss_matrix(k);
        double backup = 0.0;
        if (h + 1 < H) {
          const Vec p = mdp.transition_probs(h, vs.state, vs.action);
          for (int sp = 0; sp < S; ++sp) backup += p(sp) * v_next_vals(sp);
        }
        const double truth = phi_visit.dot(g_true.row(h).transpose()) + backup;
        if (q > truth + 1e-9) {
          diag.optimism_ok = false;
          ++rec.optimism_violations;
        }
      }

      // Memoize this step's restricted value for the regression one level up.
      if (h > 0) {
        Vec vals = Vec::Zero(S + 1);
        for (int s = 0; s < S; ++s)
          vals(s) = restricted_v(mdp, est, policy, h, s, oracle.is_known(h, s));
        v_next_vals = std::move(vals);
      }
      ests[static_cast<std::size_t>(h)] = std::move(est);
    }

    diag.known_fraction_visited = static_cast<double>(known_visits) / H;
    rec.episode_diags.push_back(diag);

    // Policy improvement with this episode's estimates.
    for (int h = 0; h < H; ++h) {
      const QEstimate& est = ests[static_cast<std::size_t>(h)];
      policy.omd_step(h, est.g_hat + est.v_hat, rec.eta, rec.beta,
                      active[static_cast<std::size_t>(h)]);
    }

    // The episode's own transitions enter the datasets only now, so episode
    // k+1 regresses on data strictly prior to it.
    for (int h = 0; h < H; ++h) {
      const TrajectoryStep& t = traj.steps[static_cast<std::size_t>(h)];
      const int col = t.next_state >= S ? S : t.next_state;
      auto& data_h = data[static_cast<std::size_t>(h)];
      data_h.counts(mdp.row(t.state, t.action), col) += 1.0;
      data_h.loss_feature_sum += mdp.phi(t.state, t.action) * t.realized_loss;
      ++data_h.size;
      acc[static_cast<std::size_t>(h)].rank_one_update(mdp.phi(t.state, t.action));
    }

    rec.estimates.push_back(std::move(ests));
    rec.trajectories.push_back(std::move(traj));
  }

  for (int h = 0; h < H; ++h)
    rec.total_updates_per_h[static_cast<std::size_t>(h)] =
        acc[static_cast<std::size_t>(h)].n_updates();

  // Run-level invariant assertions.
  const long total_rounds = static_cast<long>(warmup.episodes_used) + K;
  for (int h = 0; h < H; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const int refreshes = std::max(0, rec.epoch_count_per_h[hs] - 1);
    const double refresh_cap = d * std::log2(static_cast<double>(rec.total_updates_per_h[hs]) + 1.0);
    if (refreshes > refresh_cap + 1e-9) {
      std::ostringstream os;
      os << "epoch refresh count " << refreshes << " exceeds d*log2(N+1) = " << refresh_cap
         << " at h=" << h;
      rec.assertion_failures.push_back(os.str());
    }
    const double epoch_cap = d * std::log2(static_cast<double>(total_rounds) + 1.0);
    if (K > 0 && rec.epoch_count_per_h[hs] > epoch_cap + 1e-9) {
      std::ostringstream os;
      os << "epoch count " << rec.epoch_count_per_h[hs] << " exceeds d*ln(K+1)/ln2 = "
         << epoch_cap << " at h=" << h;
      rec.assertion_failures.push_back(os.str());
    }
    // Elliptical potential over the full update stream (warmup included)
    // bounds the main-phase sum of squared pre-update norms.
    const double ell_cap =
        2.0 * d * std::log(1.0 + static_cast<double>(rec.total_updates_per_h[hs]) / d);
    if (rec.elliptical_sum_per_h[hs] > ell_cap + 1e-9) {
      std::ostringstream os;
      os << "elliptical potential sum " << rec.elliptical_sum_per_h[hs] << " exceeds "
         << ell_cap << " at h=" << h;
      rec.assertion_failures.push_back(os.str());
    }
  }
  if (K >= 2) {
    double norm_total = 0.0;
    for (double v : rec.visited_norm_sum_per_h) norm_total += v;
    const double cap = 2.0 * H * std::sqrt(static_cast<double>(K) * d * std::log(K));
    if (norm_total > cap + 1e-9) {
      std::ostringstream os;
      os << "visited-norm sum " << norm_total << " exceeds 2H sqrt(K d log K) = " << cap;
      rec.assertion_failures.push_back(os.str());
    }
  }
  for (int h = 0; h < H; ++h) {
    // Bonus-term count of the compact parameterization.
    if (K > 0) {
      const double cap = 2.0 * d * std::log(std::max(K, 2));
      const auto terms =
          static_cast<double>(rec.policy_snapshots.empty()
                                  ? 0
                                  : rec.epoch_count_per_h[static_cast<std::size_t>(h)]);
      if (terms > cap + 1e-9) {
        std::ostringstream os;
        os << "bonus terms " << terms << " exceed 2 d log K = " << cap << " at h=" << h;
        rec.assertion_failures.push_back(os.str());
      }
    }
  }
  return rec;
}

nlohmann::json run_record_to_json(const RunRecord& rec) {
  json j;
  j["schema_version"] = 1;
  j["config"] = {{"num_episodes", rec.cfg.num_episodes},
                 {"eta", rec.eta},
                 {"beta", rec.beta},
                 {"eps_cov", rec.cfg.eps_cov},
                 {"delta", rec.cfg.delta},
                 {"mode", to_string(rec.cfg.mode)},
                 {"seed", rec.cfg.seed},
                 {"theory_mode", rec.cfg.theory_mode}};
  j["warmup"] = {{"episodes", rec.warmup_episodes},
                 {"warning", rec.warmup_warning},
                 {"trailing_uncovered", rec.warmup_trailing_uncovered}};

  json epochs = json::array();
  for (const auto& e : rec.epoch_events)
    epochs.push_back(
        {{"h", e.h}, {"index", e.index}, {"episode", e.episode}, {"log_det", e.log_det}});
  j["epoch_events"] = std::move(epochs);

  json eps = json::array();
  for (std::size_t k = 0; k < rec.trajectories.size(); ++k) {
    json e;
    json steps = json::array();
    for (const auto& st : rec.trajectories[k].steps)
      steps.push_back({st.state, st.action, st.realized_loss, st.next_state});
    e["trajectory"] = std::move(steps);
    json ests = json::array();
    for (const auto& est : rec.estimates[k])
      ests.push_back({{"v_hat", vec_to_json(est.v_hat)},
                      {"g_hat", vec_to_json(est.g_hat)},
                      {"epoch", est.bonus_snapshot->epoch_index}});
    e["estimates"] = std::move(ests);
    const auto& diag = rec.episode_diags[k];
    e["diag"] = {{"max_bonus", diag.max_bonus},
                 {"known_fraction_visited", diag.known_fraction_visited},
                 {"qbound_ok", diag.qbound_ok},
                 {"optimism_ok", diag.optimism_ok}};
    const auto& pol = rec.policy_snapshots[k];
    json thetas = json::array(), terms = json::array();
    for (int h = 0; h < static_cast<int>(rec.epochs.size()); ++h) {
      thetas.push_back(vec_to_json(pol.theta(h)));
      json ts = json::array();
      for (const auto& t : pol.bonus_terms(h))
        ts.push_back({{"coefficient", t.coefficient}, {"epoch", t.snapshot->epoch_index}});
      terms.push_back(std::move(ts));
    }
    e["policy"] = {{"theta", std::move(thetas)}, {"bonus_terms", std::move(terms)}};
    eps.push_back(std::move(e));
  }
  j["episodes"] = std::move(eps);

  j["assertions"] = {{"failures", rec.assertion_failures},
                     {"epoch_count_per_h", rec.epoch_count_per_h},
                     {"elliptical_sum_per_h", rec.elliptical_sum_per_h},
                     {"visited_norm_sum_per_h", rec.visited_norm_sum_per_h},
                     {"qbound_violations", rec.qbound_violations},
                     {"optimism_violations", rec.optimism_violations}};
  return j;
}

}  // namespace linpo
