#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "linpo/rng.hpp"

namespace linpo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class FeedbackMode { adversarial_full_info, stochastic_bandit };

std::string to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string& s);

/// Finite episodic linear MDP with explicit factor tables.
///
/// States are 0..S-1 and the dedicated terminal state reached after the last
/// step has id S. `features` row (s*A + a) holds phi(s,a) with ||phi|| <= 1.
/// `dynamics_factors[h]` (one matrix per step h = 0..H-2, row s') holds the
/// signed-measure factor psi_h(s'), so P_h(s'|s,a) = phi(s,a) . psi_h(s').
/// The last step H-1 transitions deterministically to the terminal state.
///
/// Instances are immutable after construction and safe to share across
/// threads.
struct LinearMdpInstance {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int feature_dim = 0;
  Mat features;                       // (S*A) x d
  std::vector<Mat> dynamics_factors;  // H-1 entries, each S x d
  int initial_state = 0;
  int terminal_state = 0;

  int row(int s, int a) const { return s * num_actions + a; }
  Vec phi(int s, int a) const { return features.row(row(s, a)).transpose(); }

  /// Exact P_h(.|s,a) for h in [0, H-2].
  Vec transition_probs(int h, int s, int a) const {
    return dynamics_factors[static_cast<std::size_t>(h)] * phi(s, a);
  }

  /// Exact dense transition matrix for step h: (S*A) x S.
  Mat transition_matrix(int h) const {
    return features * dynamics_factors[static_cast<std::size_t>(h)].transpose();
  }

  /// Per-(s,a) mean losses for a step loss vector g: (S*A) values.
  Vec loss_values(const Vec& g) const { return features * g; }
};

/// Zero-mean truncated-uniform noise for bandit feedback. The effective
/// half-width at a state-action pair shrinks to min(width, 1 - |mean|) so
/// realized losses stay in [-1, 1] pointwise.
struct NoiseSpec {
  bool enabled = false;
  double width = 0.0;
};

/// Loss side of the environment under either feedback regime.
///
/// Adversarial full-info mode carries one H x d matrix per episode of the
/// schedule (row h = g_{k,h}); stochastic bandit mode carries a single H x d
/// matrix plus the noise spec.
struct LossModel {
  FeedbackMode mode = FeedbackMode::stochastic_bandit;
  std::vector<Mat> loss_vectors;
  NoiseSpec noise;

  int schedule_length() const { return static_cast<int>(loss_vectors.size()); }

  /// Loss matrix charged in main-phase episode k.
  const Mat& loss_matrix(int episode) const {
    if (mode == FeedbackMode::stochastic_bandit) return loss_vectors.front();
    return loss_vectors.at(static_cast<std::size_t>(episode));
  }

  /// Elementwise mean over the schedule (the matrix itself in stochastic
  /// mode); this is the loss the comparator policy is computed against.
  Mat mean_loss_matrix() const;
};

struct TrajectoryStep {
  int state = 0;
  int action = 0;
  double realized_loss = 0.0;
  int next_state = 0;
};

struct Trajectory {
  int episode = 0;
  FeedbackMode feedback_mode = FeedbackMode::stochastic_bandit;
  std::vector<TrajectoryStep> steps;  // H entries
  std::vector<Vec> feedback_vectors;  // full-info mode: H loss vectors; else empty
};

/// Stochastic policy interface: pi_h(.|s) over the action set.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Vec action_probs(int h, int s) const = 0;
};

class TabularPolicy final : public Policy {
 public:
  TabularPolicy() = default;
  TabularPolicy(int horizon, int num_states, int num_actions);

  static TabularPolicy uniform(int horizon, int num_states, int num_actions);
  /// Deterministic policy from an action table actions[h][s].
  static TabularPolicy deterministic(const std::vector<std::vector<int>>& actions,
                                     int num_actions);
  /// Random policy with each pi_h(.|s) drawn flat-Dirichlet.
  static TabularPolicy random(int horizon, int num_states, int num_actions, Rng& rng);

  Vec action_probs(int h, int s) const override {
    return probs_[static_cast<std::size_t>(h)].row(s).transpose();
  }
  void set_action_probs(int h, int s, const Vec& p) {
    probs_[static_cast<std::size_t>(h)].row(s) = p.transpose();
  }

 private:
  std::vector<Mat> probs_;  // H entries, S x A
};

struct InvariantCheck {
  std::string name;
  bool passed = false;
  double worst_violation = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<InvariantCheck> checks;
  bool passed() const;
  std::string summary() const;
};

/// Checks every model invariant within `tol` and reports worst violations.
/// Dimension mismatches between the tables throw std::invalid_argument
/// naming the offending table.
ValidationReport validate_instance(const LinearMdpInstance& mdp, const LossModel& losses,
                                   double tol = 1e-9);

/// Plain tabular MDP used as input to the one-hot embedding.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<Mat> transitions;  // H-1 entries, (S*A) x S, row-stochastic
  std::vector<Mat> losses;       // H entries, S x A, values in [-1, 1]
  int initial_state = 0;
};

/// Exact one-hot embedding: d = S*A, phi(s,a) = e_{(s,a)},
/// psi_h(s')_{(s,a)} = P_h(s'|s,a). The returned loss model is in stochastic
/// mode with noise disabled; callers switch mode or add noise as needed.
std::pair<LinearMdpInstance, LossModel> tabular_embed(const TabularMdp& tab);

/// Random valid low-rank instance, deterministic in the seed.
///
/// Nonnegative factors are drawn, psi columns are normalized so the factor
/// rows sum to one, the per-(s,a) normalizer is folded into phi (giving
/// ||phi||_1 = 1, hence ||phi||_2 <= 1), and a random rotation is applied to
/// both factor sides, which leaves all products unchanged.
LinearMdpInstance random_lowrank_mdp(int feature_dim, int num_states, int num_actions,
                                     int horizon, std::uint64_t seed);

/// Step loss vectors with |phi.g| <= target_scale everywhere and ||g|| <= sqrt(d).
Mat make_stochastic_loss(const LinearMdpInstance& mdp, std::uint64_t seed,
                         double target_scale = 0.9);

/// Adversarial schedule: sign-alternating blocks around a fixed bias, so the
/// schedule mean is nonzero. Every episode's vectors satisfy the loss bounds.
std::vector<Mat> make_adversarial_schedule(const LinearMdpInstance& mdp, int num_episodes,
                                           std::uint64_t seed, int block_len = 50,
                                           double bias_weight = 0.5,
                                           double target_scale = 0.9);

struct StepOutcome {
  double realized_loss = 0.0;
  int next_state = 0;
};

/// One environment transition at (k, h, s, a). In stochastic mode the
/// realized loss carries truncated noise drawn from `rng`; in adversarial
/// mode it equals the exact mean loss for episode k.
StepOutcome step(const LinearMdpInstance& mdp, const LossModel& losses, int episode, int h,
                 int s, int a, Rng& rng);

/// Plays one episode of the interaction protocol under `policy`.
Trajectory rollout(const LinearMdpInstance& mdp, const LossModel& losses,
                   const Policy& policy, int episode, Rng& rng);

/// Visit counts at (h, s) over n seeded rollouts; the parallel path gives
/// bit-identical counts to the serial one because episode RNG is keyed.
Mat rollout_state_counts(const LinearMdpInstance& mdp, const LossModel& losses,
                         const Policy& policy, int n, std::uint64_t seed,
                         bool parallel = true);

// Versioned JSON schema for instances; round-trips are bit-exact.
nlohmann::json instance_to_json(const LinearMdpInstance& mdp, const LossModel& losses);
std::pair<LinearMdpInstance, LossModel> instance_from_json(const nlohmann::json& j);

}  // namespace linpo
