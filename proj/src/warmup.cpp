#include "linpo/warmup.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "linpo/jsonio.hpp"
#include "linpo/parallel.hpp"

namespace linpo {

WarmupConfig WarmupConfig::make(double delta, double beta, double eps_cov, int episode_budget,
                                int horizon) {
  if (!(eps_cov > 0.0 && eps_cov <= 1.0))
    throw std::invalid_argument("eps_cov must be in (0, 1]");
  if (beta <= 0.0) throw std::invalid_argument("beta must be positive");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  WarmupConfig cfg;
  cfg.delta = delta;
  cfg.beta = beta;
  cfg.eps_cov = eps_cov;
  cfg.episode_budget = episode_budget;
  cfg.partition_levels =
      static_cast<int>(std::ceil(std::log2(1.0 / eps_cov) - 1e-12));
  cfg.gamma = 1.0 / (2.0 * beta * horizon);
  return cfg;
}

TabularPolicy ExplorerPolicyRecord::to_tabular(int horizon, int num_states,
                                               int num_actions) const {
  TabularPolicy p = TabularPolicy::uniform(horizon, num_states, num_actions);
  for (int h = 0; h < target_step; ++h)
    for (int s = 0; s < num_states; ++s) {
      const std::uint32_t mask = argmax_masks[static_cast<std::size_t>(h)][static_cast<std::size_t>(s)];
      const int set_bits = __builtin_popcount(mask);
      Vec probs = Vec::Zero(num_actions);
      for (int a = 0; a < num_actions; ++a)
        if ((mask >> a) & 1u) probs(a) = 1.0 / set_bits;
      p.set_action_probs(h, s, probs);
    }
  for (int s = 0; s < num_states; ++s) {
    Vec probs = Vec::Zero(num_actions);
    probs(target_actions[static_cast<std::size_t>(s)]) = 1.0;
    p.set_action_probs(target_step, s, probs);
  }
  return p;
}

namespace {

/// Feature weighted norms at one step: (S x A) table under the accumulator.
Mat norm_table(const LinearMdpInstance& mdp, const CovarianceAccumulator& acc) {
  Mat t(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) t(s, a) = acc.weighted_norm(mdp.phi(s, a));
  return t;
}

struct PlanResult {
  std::vector<Mat> q;  // per planning step < target: S x A reach scores
  Mat target_norms;    // S x A weighted norms at the target step
  std::vector<char> uncovered;  // per state at the target step
  double start_score = 0.0;     // planner's reach score at the initial state
};

}  // namespace

CoverStepResult cover_step(const LinearMdpInstance& mdp, int h_target, const WarmupConfig& cfg,
                           std::uint64_t seed) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon, d = mdp.feature_dim;
  if (h_target < 0 || h_target >= H) throw std::invalid_argument("cover_step: bad step index");

  CoverStepResult result(d);
  if (cfg.partition_levels == 0) return result;  // eps_cov = 1: nothing required

  const ExactDynamics dyn =
      cfg.oracle_dynamics ? ExactDynamics::from(mdp) : ExactDynamics{};

  // Learned-dynamics planner state: per planning step, regression covariates
  // and transition counts from this run's own rollouts.
  std::vector<CovarianceAccumulator> plan_acc(static_cast<std::size_t>(h_target),
                                              CovarianceAccumulator(d));
  std::vector<Mat> plan_counts(static_cast<std::size_t>(h_target), Mat::Zero(S * A, S));

  auto plan = [&]() {
    PlanResult pr;
    pr.target_norms = norm_table(mdp, result.covariates);
    pr.uncovered.assign(static_cast<std::size_t>(S), 0);
    Vec v(S);
    for (int s = 0; s < S; ++s) {
      pr.uncovered[static_cast<std::size_t>(s)] =
          pr.target_norms.row(s).maxCoeff() > cfg.gamma ? 1 : 0;
      v(s) = pr.uncovered[static_cast<std::size_t>(s)];
    }
    pr.q.assign(static_cast<std::size_t>(h_target), Mat::Zero(S, A));
    for (int hp = h_target - 1; hp >= 0; --hp) {
      Mat& q = pr.q[static_cast<std::size_t>(hp)];
      if (cfg.oracle_dynamics) {
        const Vec reach = dyn.P[static_cast<std::size_t>(hp)] * v;
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a) q(s, a) = reach(mdp.row(s, a));
      } else {
        // Ridge fit of the next-step reach score on features, kept
        // optimistic by the exploration bonus and clipped to [0, 1].
        const auto& acc = plan_acc[static_cast<std::size_t>(hp)];
        const Vec row_weights = plan_counts[static_cast<std::size_t>(hp)] * v;  // per (s,a)
        const Vec target_sum = mdp.features.transpose() * row_weights;
        const Vec w = acc.solve(target_sum);
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a) {
            const Vec phi = mdp.phi(s, a);
            const double raw = phi.dot(w) + cfg.explore_bonus * acc.weighted_norm(phi);
            q(s, a) = std::clamp(raw, 0.0, 1.0);
          }
      }
      for (int s = 0; s < S; ++s) v(s) = q.row(s).maxCoeff();
    }
    pr.start_score = h_target == 0
                         ? static_cast<double>(pr.uncovered[static_cast<std::size_t>(mdp.initial_state)])
                         : pr.q[0].row(mdp.initial_state).maxCoeff();
    return pr;
  };

  int episodes = 0;
  for (int level = 1; level <= cfg.partition_levels; ++level) {
    const int window = std::max(8, 4 * (1 << level));
    std::deque<char> recent;
    int level_episodes = 0, level_uncovered = 0;

    while (true) {
      if (episodes >= cfg.episode_budget) {
        result.budget_exhausted = true;
        break;
      }
      const PlanResult pr = plan();

      Rng rng = Rng::keyed(seed, rng_stream::kWarmup, static_cast<std::uint64_t>(h_target),
                           static_cast<std::uint64_t>(episodes));
      ExplorerPolicyRecord rec;
      rec.target_step = h_target;
      rec.argmax_masks.assign(static_cast<std::size_t>(h_target),
                              std::vector<std::uint32_t>(static_cast<std::size_t>(S), 0));
      rec.target_actions.assign(static_cast<std::size_t>(S), 0);
      for (int hp = 0; hp < h_target; ++hp)
        for (int s = 0; s < S; ++s) {
          const auto& q = pr.q[static_cast<std::size_t>(hp)];
          const double top = q.row(s).maxCoeff();
          std::uint32_t mask = 0;
          for (int a = 0; a < A; ++a)
            if (q(s, a) >= top - 1e-9) mask |= 1u << a;
          rec.argmax_masks[static_cast<std::size_t>(hp)][static_cast<std::size_t>(s)] = mask;
        }
      for (int s = 0; s < S; ++s) {
        int best = 0;
        for (int a = 1; a < A; ++a)
          if (pr.target_norms(s, a) > pr.target_norms(s, best)) best = a;
        rec.target_actions[static_cast<std::size_t>(s)] = best;
      }

      // Rollout: optimistic plan up to the target step, the max-norm action
      // there, uniform afterwards.
      int s = mdp.initial_state;
      bool hit_uncovered = false;
      for (int hp = 0; hp < H; ++hp) {
        int a;
        if (hp < h_target) {
          const std::uint32_t mask =
              rec.argmax_masks[static_cast<std::size_t>(hp)][static_cast<std::size_t>(s)];
          const int nset = __builtin_popcount(mask);
          int pick = rng.next_int(nset);
          a = 0;
          for (int cand = 0; cand < A; ++cand)
            if ((mask >> cand) & 1u) {
              if (pick == 0) {
                a = cand;
                break;
              }
              --pick;
            }
        } else if (hp == h_target) {
          a = rec.target_actions[static_cast<std::size_t>(s)];
          hit_uncovered = pr.uncovered[static_cast<std::size_t>(s)] != 0;
        } else {
          a = rng.next_int(A);
        }

        int next;
        if (hp + 1 < H) {
          Vec p = mdp.transition_probs(hp, s, a);
          for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = std::max(p(i), 0.0);
          next = rng.categorical(p.data(), S);
        } else {
          next = mdp.terminal_state;
        }

        if (hp == h_target) {
          result.dataset.push_back({s, a, 0.0, next});
          result.covariates.rank_one_update(mdp.phi(s, a));
        }
        if (hp < h_target) {
          plan_counts[static_cast<std::size_t>(hp)](mdp.row(s, a), next) += 1.0;
          plan_acc[static_cast<std::size_t>(hp)].rank_one_update(mdp.phi(s, a));
        }
        s = next;
      }

      result.episode_policies.push_back(std::move(rec));
      ++episodes;
      ++level_episodes;
      if (hit_uncovered) ++level_uncovered;
      recent.push_back(hit_uncovered ? 1 : 0);
      if (static_cast<int>(recent.size()) > window) recent.pop_front();

      const bool window_clean =
          static_cast<int>(recent.size()) >= window &&
          std::none_of(recent.begin(), recent.end(), [](char c) { return c != 0; });
      if (window_clean) break;
    }

    result.levels.push_back(
        {level, level_episodes,
         level_episodes > 0 ? static_cast<double>(level_uncovered) / level_episodes : 0.0});
    if (!recent.empty()) {
      const int bad = static_cast<int>(std::count(recent.begin(), recent.end(), char(1)));
      result.trailing_uncovered = static_cast<double>(bad) / static_cast<double>(recent.size());
    }
    if (result.budget_exhausted) break;
  }

  result.episodes_used = episodes;
  return result;
}

bool WarmupArtifacts::any_warning() const {
  for (std::size_t h = 0; h < budget_exhausted.size(); ++h)
    if (budget_exhausted[h]) return true;
  return false;
}

WarmupArtifacts reward_free_warmup(const LinearMdpInstance& mdp, const WarmupConfig& cfg,
                                   std::uint64_t seed, bool parallel) {
  const int H = mdp.horizon;
  std::vector<CoverStepResult> results(static_cast<std::size_t>(H),
                                       CoverStepResult(mdp.feature_dim));
  // Independent runs per step; each owns a keyed RNG stream, so the parallel
  // schedule cannot change the artifacts.
  parallel_for(H, parallel, [&](long i) {
    const int h = H - 1 - static_cast<int>(i);  // paper order h = H..1
    results[static_cast<std::size_t>(h)] = cover_step(mdp, h, cfg, seed);
  });

  WarmupArtifacts art;
  for (int h = 0; h < H; ++h) {
    auto& r = results[static_cast<std::size_t>(h)];
    art.datasets.push_back(std::move(r.dataset));
    art.covariates.push_back(std::move(r.covariates));
    art.level_stats.push_back(std::move(r.levels));
    art.trailing_uncovered.push_back(r.trailing_uncovered);
    art.budget_exhausted.push_back(r.budget_exhausted);
    art.episodes_per_step.push_back(r.episodes_used);
    art.episode_policies.push_back(std::move(r.episode_policies));
    art.episodes_used += r.episodes_used;
  }
  return art;
}

KnownSetOracle::KnownSetOracle(const LinearMdpInstance& mdp, const WarmupArtifacts& artifacts,
                               double beta)
    : threshold_(1.0 / (2.0 * beta * mdp.horizon)), covariates_(artifacts.covariates) {
  build(mdp);
}

KnownSetOracle::KnownSetOracle(const LinearMdpInstance& mdp,
                               const std::vector<CovarianceAccumulator>& covariates,
                               double beta)
    : threshold_(1.0 / (2.0 * beta * mdp.horizon)), covariates_(covariates) {
  build(mdp);
}

void KnownSetOracle::build(const LinearMdpInstance& mdp) {
  if (static_cast<int>(covariates_.size()) != mdp.horizon)
    throw std::invalid_argument("known-set oracle needs one covariate matrix per step");
  for (int h = 0; h < mdp.horizon; ++h) {
    std::vector<char> row(static_cast<std::size_t>(mdp.num_states), 0);
    std::vector<double> norms(static_cast<std::size_t>(mdp.num_states), 0.0);
    for (int s = 0; s < mdp.num_states; ++s) {
      double worst = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a)
        worst = std::max(
            worst, covariates_[static_cast<std::size_t>(h)].weighted_norm(mdp.phi(s, a)));
      norms[static_cast<std::size_t>(s)] = worst;
      row[static_cast<std::size_t>(s)] = worst <= threshold_ ? 1 : 0;
    }
    known_.push_back(std::move(row));
    max_norm_.push_back(std::move(norms));
  }
}

double KnownSetOracle::known_fraction(int h) const {
  const auto& row = known_[static_cast<std::size_t>(h)];
  double n = 0;
  for (char c : row) n += c;
  return n / static_cast<double>(row.size());
}

CoverageProbeResult coverage_probe(const LinearMdpInstance& mdp, const LossModel& losses,
                                   const KnownSetOracle& oracle, int policy_sample_size,
                                   int rollouts_per_policy, std::uint64_t seed, bool parallel) {
  const int H = mdp.horizon;
  std::vector<TabularPolicy> probes;
  probes.push_back(optimal_policy(mdp, losses.mean_loss_matrix()).first);
  for (int i = 0; i < policy_sample_size; ++i) {
    Rng rng = Rng::keyed(seed, rng_stream::kProbe, static_cast<std::uint64_t>(i));
    probes.push_back(TabularPolicy::random(H, mdp.num_states, mdp.num_actions, rng));
  }

  const ExactDynamics dyn = ExactDynamics::from(mdp);
  Mat exact(static_cast<Eigen::Index>(probes.size()), H);
  Mat mc(static_cast<Eigen::Index>(probes.size()), H);
  parallel_for(static_cast<long>(probes.size()), parallel, [&](long i) {
    const auto& pol = probes[static_cast<std::size_t>(i)];
    const OccupancyTable occ = occupancy(mdp, dyn, pol);
    for (int h = 0; h < H; ++h) {
      const Vec marg = occ.state_marginal(h);
      double mass = 0.0;
      for (int s = 0; s < mdp.num_states; ++s)
        if (!oracle.is_known(h, s)) mass += marg(s);
      exact(i, h) = mass;
    }
    if (rollouts_per_policy > 0) {
      const Mat counts = rollout_state_counts(
          mdp, losses, pol, rollouts_per_policy,
          Rng::keyed(seed, rng_stream::kProbe, static_cast<std::uint64_t>(i), 1).next_u64(),
          false);
      for (int h = 0; h < H; ++h) {
        double bad = 0.0;
        for (int s = 0; s < mdp.num_states; ++s)
          if (!oracle.is_known(h, s)) bad += counts(h, s);
        mc(i, h) = bad / rollouts_per_policy;
      }
    }
  });

  CoverageProbeResult out;
  for (int h = 0; h < H; ++h) out.exact_max.push_back(exact.col(h).maxCoeff());
  if (rollouts_per_policy > 0)
    for (int h = 0; h < H; ++h) out.mc_max.push_back(mc.col(h).maxCoeff());
  return out;
}

nlohmann::json warmup_to_json(const WarmupArtifacts& art) {
  json j;
  j["schema_version"] = 1;
  j["episodes_used"] = art.episodes_used;
  json per_h = json::array();
  for (std::size_t h = 0; h < art.datasets.size(); ++h) {
    json e;
    json triples = json::array();
    for (const auto& t : art.datasets[h])
      triples.push_back({t.state, t.action, t.next_state});
    e["dataset"] = std::move(triples);
    e["lambda"] = mat_to_json(art.covariates[h].matrix());
    e["lambda_inv"] = mat_to_json(art.covariates[h].inverse());
    e["log_det"] = art.covariates[h].log_det();
    e["n_updates"] = art.covariates[h].n_updates();
    json levels = json::array();
    for (const auto& l : art.level_stats[h])
      levels.push_back({{"level", l.level},
                        {"episodes", l.episodes},
                        {"uncovered_fraction", l.uncovered_fraction}});
    e["levels"] = std::move(levels);
    e["trailing_uncovered"] = art.trailing_uncovered[h];
    e["budget_exhausted"] = static_cast<bool>(art.budget_exhausted[h]);
    e["episodes"] = art.episodes_per_step[h];
    json pols = json::array();
    for (const auto& p : art.episode_policies[h]) {
      json pj;
      pj["target_step"] = p.target_step;
      pj["argmax_masks"] = p.argmax_masks;
      pj["target_actions"] = p.target_actions;
      pols.push_back(std::move(pj));
    }
    e["policies"] = std::move(pols);
    per_h.push_back(std::move(e));
  }
  j["steps"] = std::move(per_h);
  return j;
}

WarmupArtifacts warmup_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("unsupported warmup schema version");
  WarmupArtifacts art;
  art.episodes_used = j.at("episodes_used").get<int>();
  for (const json& e : j.at("steps")) {
    std::vector<TrajectoryStep> ds;
    for (const json& t : e.at("dataset"))
      ds.push_back({t[0].get<int>(), t[1].get<int>(), 0.0, t[2].get<int>()});
    art.datasets.push_back(std::move(ds));

    const Mat lambda = mat_from_json(e.at("lambda"));
    CovarianceAccumulator acc = CovarianceAccumulator::from_parts(
        lambda, mat_from_json(e.at("lambda_inv")), e.at("log_det").get<double>(),
        e.at("n_updates").get<long>());
    art.covariates.push_back(std::move(acc));

    std::vector<LevelStats> levels;
    for (const json& l : e.at("levels"))
      levels.push_back({l.at("level").get<int>(), l.at("episodes").get<int>(),
                        l.at("uncovered_fraction").get<double>()});
    art.level_stats.push_back(std::move(levels));
    art.trailing_uncovered.push_back(e.at("trailing_uncovered").get<double>());
    art.budget_exhausted.push_back(e.at("budget_exhausted").get<bool>());
    art.episodes_per_step.push_back(e.at("episodes").get<int>());

    std::vector<ExplorerPolicyRecord> pols;
    for (const json& pj : e.at("policies")) {
      ExplorerPolicyRecord p;
      p.target_step = pj.at("target_step").get<int>();
      p.argmax_masks = pj.at("argmax_masks").get<std::vector<std::vector<std::uint32_t>>>();
      p.target_actions = pj.at("target_actions").get<std::vector<int>>();
      pols.push_back(std::move(p));
    }
    art.episode_policies.push_back(std::move(pols));
  }
  return art;
}

}  // namespace linpo
