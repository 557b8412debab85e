#include "linpo/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "linpo/jsonio.hpp"
#include "linpo/parallel.hpp"

namespace linpo {

std::string to_string(FeedbackMode mode) {
  return mode == FeedbackMode::adversarial_full_info ? "adversarial_full_info"
                                                     : "stochastic_bandit";
}

FeedbackMode feedback_mode_from_string(const std::string& s) {
  if (s == "adversarial_full_info") return FeedbackMode::adversarial_full_info;
  if (s == "stochastic_bandit") return FeedbackMode::stochastic_bandit;
  throw std::invalid_argument("unknown feedback mode: " + s);
}

Mat LossModel::mean_loss_matrix() const {
  if (loss_vectors.empty()) throw std::invalid_argument("loss model has no loss vectors");
  Mat mean = Mat::Zero(loss_vectors.front().rows(), loss_vectors.front().cols());
  for (const Mat& g : loss_vectors) mean += g;
  return mean / static_cast<double>(loss_vectors.size());
}

TabularPolicy::TabularPolicy(int horizon, int num_states, int num_actions) {
  probs_.assign(static_cast<std::size_t>(horizon),
                Mat::Constant(num_states, num_actions, 1.0 / num_actions));
}

TabularPolicy TabularPolicy::uniform(int horizon, int num_states, int num_actions) {
  return TabularPolicy(horizon, num_states, num_actions);
}

TabularPolicy TabularPolicy::deterministic(const std::vector<std::vector<int>>& actions,
                                           int num_actions) {
  TabularPolicy p(static_cast<int>(actions.size()), static_cast<int>(actions.front().size()),
                  num_actions);
  for (std::size_t h = 0; h < actions.size(); ++h) {
    p.probs_[h].setZero();
    for (std::size_t s = 0; s < actions[h].size(); ++s)
      p.probs_[h](static_cast<Eigen::Index>(s), actions[h][s]) = 1.0;
  }
  return p;
}

TabularPolicy TabularPolicy::random(int horizon, int num_states, int num_actions, Rng& rng) {
  TabularPolicy p(horizon, num_states, num_actions);
  for (int h = 0; h < horizon; ++h)
    for (int s = 0; s < num_states; ++s) {
      std::vector<double> w = rng.dirichlet(num_actions);
      for (int a = 0; a < num_actions; ++a) p.probs_[static_cast<std::size_t>(h)](s, a) = w[static_cast<std::size_t>(a)];
    }
  return p;
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const InvariantCheck& c) { return c.passed; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.passed ? "[ok]   " : "[FAIL] ") << c.name << "  worst=" << c.worst_violation;
    if (!c.detail.empty()) os << "  (" << c.detail << ")";
    os << "\n";
  }
  return os.str();
}

namespace {

void check_structure(const LinearMdpInstance& mdp, const LossModel& losses) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon, d = mdp.feature_dim;
  if (S < 1 || A < 1 || H < 1 || d < 1)
    throw std::invalid_argument("instance dims must be positive");
  if (mdp.features.rows() != static_cast<Eigen::Index>(S) * A || mdp.features.cols() != d)
    throw std::invalid_argument("features table has wrong shape (expect (S*A) x d)");
  if (static_cast<int>(mdp.dynamics_factors.size()) != std::max(0, H - 1))
    throw std::invalid_argument("dynamics_factors must have H-1 tables");
  for (const Mat& psi : mdp.dynamics_factors)
    if (psi.rows() != S || psi.cols() != d)
      throw std::invalid_argument("dynamics_factors table has wrong shape (expect S x d)");
  if (mdp.initial_state < 0 || mdp.initial_state >= S)
    throw std::invalid_argument("initial_state out of range");
  if (losses.loss_vectors.empty())
    throw std::invalid_argument("loss_vectors is empty");
  if (losses.mode == FeedbackMode::stochastic_bandit && losses.loss_vectors.size() != 1)
    throw std::invalid_argument("stochastic loss model must hold exactly one loss matrix");
  for (const Mat& g : losses.loss_vectors)
    if (g.rows() != H || g.cols() != d)
      throw std::invalid_argument("loss matrix has wrong shape (expect H x d)");
}

/// Max of ||psi^T f||_2 over sign vectors f. Exact vertex enumeration for
/// small S, sampled otherwise (the max of a convex function over the cube is
/// attained at a vertex, so enumeration is exact when feasible).
double max_psi_functional_norm(const Mat& psi, std::string* how) {
  const int S = static_cast<int>(psi.rows());
  double best = 0.0;
  if (S <= 12) {
    *how = "exact over all sign vertices";
    const std::uint64_t count = 1ULL << S;
    Vec f(S);
    for (std::uint64_t m = 0; m < count; ++m) {
      for (int s = 0; s < S; ++s) f(s) = (m >> s) & 1 ? 1.0 : -1.0;
      best = std::max(best, (psi.transpose() * f).norm());
    }
  } else {
    *how = "sampled sign vectors";
    Rng rng = Rng::keyed(0xC0FFEE, rng_stream::kInstance);
    Vec f(S);
    for (int trial = 0; trial < 4096; ++trial) {
      for (int s = 0; s < S; ++s) f(s) = rng.next_double() < 0.5 ? -1.0 : 1.0;
      best = std::max(best, (psi.transpose() * f).norm());
    }
  }
  return best;
}

}  // namespace

ValidationReport validate_instance(const LinearMdpInstance& mdp, const LossModel& losses,
                                   double tol) {
  check_structure(mdp, losses);
  const int S = mdp.num_states, A = mdp.num_actions, d = mdp.feature_dim;
  ValidationReport report;

  {
    InvariantCheck c{"feature_unit_ball", true, 0.0, "||phi(s,a)|| <= 1"};
    for (Eigen::Index r = 0; r < mdp.features.rows(); ++r)
      c.worst_violation = std::max(c.worst_violation, mdp.features.row(r).norm() - 1.0);
    c.worst_violation = std::max(c.worst_violation, 0.0);
    c.passed = c.worst_violation <= tol;
    report.checks.push_back(std::move(c));
  }

  {
    InvariantCheck rowsum{"transition_row_sum", true, 0.0, "sum_s' phi.psi_h(s') = 1"};
    InvariantCheck nonneg{"transition_nonneg", true, 0.0, "phi.psi_h(s') >= 0"};
    for (std::size_t h = 0; h < mdp.dynamics_factors.size(); ++h) {
      const Mat P = mdp.transition_matrix(static_cast<int>(h));  // (S*A) x S
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        rowsum.worst_violation =
            std::max(rowsum.worst_violation, std::abs(P.row(r).sum() - 1.0));
        nonneg.worst_violation = std::max(nonneg.worst_violation, -P.row(r).minCoeff());
      }
    }
    nonneg.worst_violation = std::max(nonneg.worst_violation, 0.0);
    rowsum.passed = rowsum.worst_violation <= tol;
    nonneg.passed = nonneg.worst_violation <= tol;
    report.checks.push_back(std::move(rowsum));
    report.checks.push_back(std::move(nonneg));
  }

  {
    InvariantCheck c{"psi_functional_norm", true, 0.0, ""};
    std::string how = "no dynamics tables";
    for (const Mat& psi : mdp.dynamics_factors) {
      c.worst_violation =
          std::max(c.worst_violation, max_psi_functional_norm(psi, &how) - std::sqrt(d));
    }
    c.worst_violation = std::max(c.worst_violation, 0.0);
    c.detail = "||sum psi_h f|| <= sqrt(d), " + how;
    c.passed = c.worst_violation <= tol;
    report.checks.push_back(std::move(c));
  }

  {
    InvariantCheck mag{"loss_magnitude", true, 0.0, "|phi.g| <= 1"};
    InvariantCheck nrm{"loss_vector_norm", true, 0.0, "||g|| <= sqrt(d)"};
    for (const Mat& g : losses.loss_vectors) {
      for (Eigen::Index h = 0; h < g.rows(); ++h) {
        const Vec vals = mdp.loss_values(g.row(h).transpose());
        mag.worst_violation =
            std::max(mag.worst_violation, vals.cwiseAbs().maxCoeff() - 1.0);
        nrm.worst_violation = std::max(nrm.worst_violation, g.row(h).norm() - std::sqrt(d));
      }
    }
    mag.worst_violation = std::max(mag.worst_violation, 0.0);
    nrm.worst_violation = std::max(nrm.worst_violation, 0.0);
    mag.passed = mag.worst_violation <= tol;
    nrm.passed = nrm.worst_violation <= tol;
    report.checks.push_back(std::move(mag));
    report.checks.push_back(std::move(nrm));
  }

  {
    InvariantCheck c{"noise_spec", true, 0.0, "width >= 0; truncation keeps losses in [-1,1]"};
    c.worst_violation = std::max(0.0, -losses.noise.width);
    c.passed = c.worst_violation <= tol;
    report.checks.push_back(std::move(c));
  }

  (void)S;
  (void)A;
  return report;
}

std::pair<LinearMdpInstance, LossModel> tabular_embed(const TabularMdp& tab) {
  const int S = tab.num_states, A = tab.num_actions, H = tab.horizon;
  if (S < 1 || A < 1 || H < 1) throw std::invalid_argument("tabular dims must be positive");
  if (static_cast<int>(tab.transitions.size()) != std::max(0, H - 1))
    throw std::invalid_argument("tabular transitions must have H-1 tensors");
  if (static_cast<int>(tab.losses.size()) != H)
    throw std::invalid_argument("tabular losses must have H tables");

  const int d = S * A;
  LinearMdpInstance mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = H;
  mdp.feature_dim = d;
  mdp.features = Mat::Identity(d, d);
  mdp.initial_state = tab.initial_state;
  mdp.terminal_state = S;
  for (const Mat& P : tab.transitions) {
    if (P.rows() != static_cast<Eigen::Index>(S) * A || P.cols() != S)
      throw std::invalid_argument("tabular transition tensor has wrong shape");
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      if (P.row(r).minCoeff() < 0.0 || std::abs(P.row(r).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("tabular transition rows must be probability distributions");
    }
    mdp.dynamics_factors.push_back(P.transpose());  // psi_h(s')_{(s,a)} = P_h(s'|s,a)
  }

  LossModel losses;
  losses.mode = FeedbackMode::stochastic_bandit;
  Mat g(H, d);
  for (int h = 0; h < H; ++h) {
    const Mat& L = tab.losses[static_cast<std::size_t>(h)];
    if (L.rows() != S || L.cols() != A)
      throw std::invalid_argument("tabular loss table has wrong shape");
    if (L.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
      throw std::invalid_argument("tabular losses must lie in [-1, 1]");
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) g(h, mdp.row(s, a)) = L(s, a);
  }
  losses.loss_vectors.push_back(std::move(g));
  return {std::move(mdp), std::move(losses)};
}

LinearMdpInstance random_lowrank_mdp(int feature_dim, int num_states, int num_actions,
                                     int horizon, std::uint64_t seed) {
  const int d = feature_dim, S = num_states, A = num_actions, H = horizon;
  if (S < 1 || A < 1 || H < 1 || d < 1)
    throw std::invalid_argument("random_lowrank_mdp: dims must be positive");
  if (d > S * A)
    throw std::invalid_argument("random_lowrank_mdp: need feature_dim <= S*A");

  Rng rng = Rng::keyed(seed, rng_stream::kInstance);

  // Nonnegative feature factors, rows normalized to ||.||_1 = 1. The squared
  // uniform draw plus a floor gives spread without near-zero rows.
  Mat raw(S * A, d);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (int j = 0; j < d; ++j) {
      const double u = rng.next_double();
      raw(r, j) = u * u + 0.02;
    }
    raw.row(r) /= raw.row(r).sum();
  }

  // Nonnegative dynamics factors with unit column sums, so that row sums of
  // P_h come out exactly 1 for the l1-normalized features.
  std::vector<Mat> psis;
  for (int h = 0; h + 1 < H; ++h) {
    Mat psi(S, d);
    for (int s = 0; s < S; ++s)
      for (int j = 0; j < d; ++j) {
        const double u = rng.next_double();
        psi(s, j) = u * u + 0.02;
      }
    for (int j = 0; j < d; ++j) psi.col(j) /= psi.col(j).sum();
    psis.push_back(std::move(psi));
  }

  // Random rotation applied to both factor sides; products are unchanged
  // but features leave the nonnegative orthant.
  Mat gauss(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) gauss(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Mat> qr(gauss);
  Mat Q = qr.householderQ();
  Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);

  LinearMdpInstance mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = H;
  mdp.feature_dim = d;
  mdp.features = raw * Q.transpose();
  for (Mat& psi : psis) mdp.dynamics_factors.push_back(psi * Q.transpose());
  mdp.initial_state = 0;
  mdp.terminal_state = S;
  return mdp;
}

namespace {

/// Scale factor putting candidate loss values inside the model bounds.
double loss_scale(const LinearMdpInstance& mdp, const Vec& g, double target_scale) {
  const double maxval = mdp.loss_values(g).cwiseAbs().maxCoeff();
  double s = maxval > 0.0 ? target_scale / maxval : 1.0;
  const double norm = g.norm();
  if (norm > 0.0) s = std::min(s, std::sqrt(static_cast<double>(mdp.feature_dim)) / norm);
  return s;
}

}  // namespace

Mat make_stochastic_loss(const LinearMdpInstance& mdp, std::uint64_t seed,
                         double target_scale) {
  Rng rng = Rng::keyed(seed, rng_stream::kInstance, 1);
  Mat g(mdp.horizon, mdp.feature_dim);
  for (int h = 0; h < mdp.horizon; ++h) {
    Vec cand(mdp.feature_dim);
    for (int j = 0; j < mdp.feature_dim; ++j) cand(j) = rng.gaussian();
    g.row(h) = (cand * loss_scale(mdp, cand, target_scale)).transpose();
  }
  return g;
}

std::vector<Mat> make_adversarial_schedule(const LinearMdpInstance& mdp, int num_episodes,
                                           std::uint64_t seed, int block_len,
                                           double bias_weight, double target_scale) {
  if (num_episodes < 1) throw std::invalid_argument("schedule needs >= 1 episode");
  if (block_len < 1) throw std::invalid_argument("block_len must be >= 1");
  Rng rng = Rng::keyed(seed, rng_stream::kInstance, 2);
  const int H = mdp.horizon, d = mdp.feature_dim;

  Mat bias(H, d), alt(H, d);
  for (int h = 0; h < H; ++h) {
    Vec b(d), a(d);
    for (int j = 0; j < d; ++j) b(j) = rng.gaussian();
    for (int j = 0; j < d; ++j) a(j) = rng.gaussian();
    b *= bias_weight;
    a *= (1.0 - bias_weight);
    // Joint scale so both sign combinations satisfy the bounds.
    const double s = std::min(loss_scale(mdp, b + a, target_scale),
                              loss_scale(mdp, b - a, target_scale));
    bias.row(h) = (b * s).transpose();
    alt.row(h) = (a * s).transpose();
  }

  std::vector<Mat> schedule;
  schedule.reserve(static_cast<std::size_t>(num_episodes));
  for (int k = 0; k < num_episodes; ++k) {
    const double sign = (k / block_len) % 2 == 0 ? 1.0 : -1.0;
    schedule.push_back(bias + sign * alt);
  }
  return schedule;
}

StepOutcome step(const LinearMdpInstance& mdp, const LossModel& losses, int episode, int h,
                 int s, int a, Rng& rng) {
  const Mat& g = losses.loss_matrix(episode);
  const double mean = mdp.phi(s, a).dot(g.row(h).transpose());

  StepOutcome out;
  if (losses.mode == FeedbackMode::stochastic_bandit && losses.noise.enabled) {
    const double w = std::min(losses.noise.width, 1.0 - std::abs(mean));
    out.realized_loss = mean + (w > 0.0 ? rng.uniform(-w, w) : 0.0);
  } else {
    out.realized_loss = mean;
  }

  if (h + 1 < mdp.horizon) {
    Vec p = mdp.transition_probs(h, s, a);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = std::max(p(i), 0.0);
    out.next_state = rng.categorical(p.data(), static_cast<int>(p.size()));
  } else {
    out.next_state = mdp.terminal_state;
  }
  return out;
}

Trajectory rollout(const LinearMdpInstance& mdp, const LossModel& losses,
                   const Policy& policy, int episode, Rng& rng) {
  Trajectory traj;
  traj.episode = episode;
  traj.feedback_mode = losses.mode;
  traj.steps.reserve(static_cast<std::size_t>(mdp.horizon));

  int s = mdp.initial_state;
  for (int h = 0; h < mdp.horizon; ++h) {
    Vec p = policy.action_probs(h, s);
    const int a = rng.categorical(p.data(), static_cast<int>(p.size()));
    StepOutcome out = step(mdp, losses, episode, h, s, a, rng);
    traj.steps.push_back({s, a, out.realized_loss, out.next_state});
    if (losses.mode == FeedbackMode::adversarial_full_info)
      traj.feedback_vectors.push_back(losses.loss_matrix(episode).row(h).transpose());
    s = out.next_state;
  }
  return traj;
}

Mat rollout_state_counts(const LinearMdpInstance& mdp, const LossModel& losses,
                         const Policy& policy, int n, std::uint64_t seed, bool parallel) {
  Mat counts = Mat::Zero(mdp.horizon, mdp.num_states + 1);
  std::vector<std::vector<int>> visited(static_cast<std::size_t>(n));
  parallel_for(n, parallel, [&](long i) {
    Rng rng = Rng::keyed(seed, rng_stream::kRollout, static_cast<std::uint64_t>(i));
    Trajectory t = rollout(mdp, losses, policy, static_cast<int>(i), rng);
    auto& v = visited[static_cast<std::size_t>(i)];
    v.resize(static_cast<std::size_t>(mdp.horizon));
    for (int h = 0; h < mdp.horizon; ++h) v[static_cast<std::size_t>(h)] = t.steps[static_cast<std::size_t>(h)].state;
  });
  for (const auto& v : visited)
    for (int h = 0; h < mdp.horizon; ++h) counts(h, v[static_cast<std::size_t>(h)]) += 1.0;
  return counts;
}

nlohmann::json instance_to_json(const LinearMdpInstance& mdp, const LossModel& losses) {
  json j;
  j["schema_version"] = 1;
  j["dims"] = {{"num_states", mdp.num_states},
               {"num_actions", mdp.num_actions},
               {"horizon", mdp.horizon},
               {"feature_dim", mdp.feature_dim}};
  j["initial_state"] = mdp.initial_state;
  j["terminal_state"] = mdp.terminal_state;
  j["features"] = mat_to_json(mdp.features);
  json psis = json::array();
  for (const Mat& psi : mdp.dynamics_factors) psis.push_back(mat_to_json(psi));
  j["dynamics_factors"] = std::move(psis);
  j["mode"] = to_string(losses.mode);
  json gs = json::array();
  for (const Mat& g : losses.loss_vectors) gs.push_back(mat_to_json(g));
  j["loss_vectors"] = std::move(gs);
  j["noise"] = {{"enabled", losses.noise.enabled}, {"width", losses.noise.width}};
  return j;
}

std::pair<LinearMdpInstance, LossModel> instance_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("unsupported instance schema version");
  LinearMdpInstance mdp;
  const json& dims = j.at("dims");
  mdp.num_states = dims.at("num_states").get<int>();
  mdp.num_actions = dims.at("num_actions").get<int>();
  mdp.horizon = dims.at("horizon").get<int>();
  mdp.feature_dim = dims.at("feature_dim").get<int>();
  mdp.initial_state = j.at("initial_state").get<int>();
  mdp.terminal_state = j.at("terminal_state").get<int>();
  mdp.features = mat_from_json(j.at("features"));
  for (const json& p : j.at("dynamics_factors")) mdp.dynamics_factors.push_back(mat_from_json(p));

  LossModel losses;
  losses.mode = feedback_mode_from_string(j.at("mode").get<std::string>());
  for (const json& g : j.at("loss_vectors")) losses.loss_vectors.push_back(mat_from_json(g));
  losses.noise.enabled = j.at("noise").at("enabled").get<bool>();
  losses.noise.width = j.at("noise").at("width").get<double>();
  return {std::move(mdp), std::move(losses)};
}

}  // namespace linpo
