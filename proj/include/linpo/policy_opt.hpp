#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "linpo/covariance.hpp"
#include "linpo/env.hpp"
#include "linpo/warmup.hpp"

namespace linpo {

double default_eta(int num_actions, int horizon, int num_episodes);
double practical_beta(int feature_dim, int horizon, int num_episodes, double delta);
double theory_beta(int feature_dim, int horizon, int num_episodes, double delta);

/// |restricted Q| cap per step (0-based): (H - h)(1 + 2/H).
double restricted_value_cap(int horizon, int h);

struct RunConfig {
  int num_episodes = 0;  // main-phase episodes
  double eta = 0.0;      // 0 resolves to the default step size
  double beta = 0.0;     // 0 resolves to the practical (or theory-mode) scale
  double eps_cov = 0.05;
  double delta = 0.05;
  FeedbackMode mode = FeedbackMode::stochastic_bandit;
  std::uint64_t seed = 0;
  bool theory_mode = false;

  double resolved_eta(int num_actions, int horizon) const;
  double resolved_beta(int feature_dim, int horizon) const;
};

/// One bonus summand of the compact softmax parameterization. The
/// coefficient accumulates eta*beta per episode the snapshot stayed active,
/// i.e. eta*beta*(k_{j+1} - k_j) once the epoch closes.
struct BonusTerm {
  double coefficient = 0.0;
  std::shared_ptr<const EpochSnapshot> snapshot;
};

/// Softmax policy in compact form: the logit at (s,a) is
///   phi(s,a).theta_h + sum_j c_j ||phi(s,a)||_{Lambda_hat_j^{-1}},
/// which reproduces the multiplicative-weights recursion from the uniform
/// initialization without storing per-episode action values.
class SoftmaxPolicy final : public Policy {
 public:
  SoftmaxPolicy() = default;
  SoftmaxPolicy(const LinearMdpInstance* mdp, int horizon);

  Vec logits(int h, int s) const;
  /// Numerically safe softmax of the logits (max subtracted before exp).
  Vec action_probs(int h, int s) const override;

  /// One mirror-descent step for step h: theta -= eta * grad and the active
  /// snapshot's bonus coefficient grows by eta * beta.
  void omd_step(int h, const Vec& grad, double eta, double beta,
                const std::shared_ptr<const EpochSnapshot>& active_snapshot);

  const Vec& theta(int h) const { return theta_[static_cast<std::size_t>(h)]; }
  const std::vector<BonusTerm>& bonus_terms(int h) const {
    return bonus_terms_[static_cast<std::size_t>(h)];
  }

 private:
  const LinearMdpInstance* mdp_ = nullptr;
  std::vector<Vec> theta_;
  std::vector<std::vector<BonusTerm>> bonus_terms_;
};

/// Per-(episode, step) estimate bundle; the optimistic action value is
/// reproducible from these fields alone.
struct QEstimate {
  Vec v_hat;  // value-regression solution
  Vec g_hat;  // loss estimate
  double beta = 0.0;
  std::shared_ptr<const EpochSnapshot> bonus_snapshot;

  double bonus(const LinearMdpInstance& mdp, int s, int a) const;
  /// phi.g_hat + phi.v_hat - beta ||phi||_{Lambda_hat^{-1}}.
  double q_value(const LinearMdpInstance& mdp, int s, int a) const;
};

double restricted_q(const LinearMdpInstance& mdp, const QEstimate& est, int s, int a,
                    bool known);
double restricted_v(const LinearMdpInstance& mdp, const QEstimate& est, const Policy& policy,
                    int h, int s, bool known);

/// Per-step transition dataset in count form plus the running loss-feature
/// sum; the regression target sum is rebuilt on every call because the
/// restricted value target changes with the episode.
struct TransitionDataset {
  Mat counts;  // (S*A) x (S+1); column S is the terminal state
  Vec loss_feature_sum;
  long size = 0;

  TransitionDataset(int num_states, int num_actions, int feature_dim)
      : counts(Mat::Zero(num_states * num_actions, num_states + 1)),
        loss_feature_sum(Vec::Zero(feature_dim)) {}
};

/// Ridge regression of the next-state value on features over the dataset:
/// Lambda^{-1} sum_i phi_i v_next(s'_i). v_next takes a next-state id and
/// must return 0 for the terminal state.
Vec regress_value(const LinearMdpInstance& mdp, const TransitionDataset& data,
                  const CovarianceAccumulator& acc,
                  const std::function<double(int)>& v_next);

/// Loss estimate per feedback regime: adversarial mode passes the observed
/// vector through verbatim; stochastic mode ridge-regresses realized scalar
/// losses on features.
Vec estimate_loss(FeedbackMode mode, const Vec* observed_g, const TransitionDataset& data,
                  const CovarianceAccumulator& acc);

struct EpochEvent {
  int h = 0;
  int index = 0;     // epoch index within step h (0 = initial snapshot)
  int episode = 0;   // main-phase episode of the refresh
  double log_det = 0.0;
};

struct EpisodeDiag {
  double max_bonus = 0.0;
  double known_fraction_visited = 0.0;
  bool qbound_ok = true;    // |restricted Q| <= (H-h)(1+2/H) at visited known states
  bool optimism_ok = true;  // optimistic Q below the true backup at visited known states
};

struct RunRecord {
  RunConfig cfg;
  double eta = 0.0;   // resolved values actually used
  double beta = 0.0;
  int warmup_episodes = 0;
  bool warmup_warning = false;
  std::vector<double> warmup_trailing_uncovered;

  std::vector<Trajectory> trajectories;
  std::vector<std::vector<QEstimate>> estimates;  // [episode][h]
  std::vector<SoftmaxPolicy> policy_snapshots;    // policy played in each episode
  std::vector<std::vector<std::shared_ptr<const EpochSnapshot>>> epochs;  // per h
  std::vector<EpochEvent> epoch_events;
  std::vector<EpisodeDiag> episode_diags;

  std::vector<int> epoch_count_per_h;
  std::vector<double> elliptical_sum_per_h;  // sum of squared visited norms (pre-update)
  std::vector<double> visited_norm_sum_per_h;
  std::vector<long> total_updates_per_h;     // warmup + main features in Lambda
  std::vector<std::string> assertion_failures;

  int qbound_violations = 0;
  int optimism_violations = 0;

  bool all_assertions_passed() const { return assertion_failures.empty(); }
};

/// Executes the main optimistic policy-optimization loop for
/// cfg.num_episodes episodes on top of completed warmup artifacts.
RunRecord run(const LinearMdpInstance& mdp, const LossModel& losses,
              const WarmupArtifacts& warmup, const RunConfig& cfg);
RunRecord run(const LinearMdpInstance& mdp, const LossModel& losses,
              const WarmupArtifacts& warmup, const KnownSetOracle& oracle,
              const RunConfig& cfg);

nlohmann::json run_record_to_json(const RunRecord& record);

}  // namespace linpo
