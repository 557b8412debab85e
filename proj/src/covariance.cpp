#include "linpo/covariance.hpp"

#include <cmath>
#include <stdexcept>

namespace linpo {

namespace {
constexpr int kRefactorPeriod = 256;
constexpr double kDriftThreshold = 1e-10;
constexpr double kLn2 = 0.6931471805599453;
}  // namespace

CovarianceAccumulator::CovarianceAccumulator(int dim)
    : lambda_(Eigen::MatrixXd::Identity(dim, dim)),
      lambda_inv_(Eigen::MatrixXd::Identity(dim, dim)) {
  if (dim < 1) throw std::invalid_argument("covariance dim must be >= 1");
}

CovarianceAccumulator CovarianceAccumulator::from_parts(Eigen::MatrixXd lambda,
                                                        Eigen::MatrixXd lambda_inv,
                                                        double log_det, long n_updates) {
  CovarianceAccumulator acc(static_cast<int>(lambda.rows()));
  acc.lambda_ = std::move(lambda);
  acc.lambda_inv_ = std::move(lambda_inv);
  acc.log_det_ = log_det;
  acc.n_updates_ = n_updates;
  return acc;
}

void CovarianceAccumulator::rank_one_update(const Eigen::VectorXd& phi) {
  if (phi.size() != lambda_.rows())
    throw std::invalid_argument("rank_one_update: dimension mismatch");
  ++n_updates_;
  const double sq = phi.squaredNorm();
  if (sq == 0.0) return;

  // Sherman-Morrison and the determinant lemma share Lambda^{-1} phi.
  Eigen::VectorXd w = lambda_inv_ * phi;
  const double q = phi.dot(w);  // phi^T Lambda^{-1} phi > 0
  lambda_.noalias() += phi * phi.transpose();
  lambda_inv_.noalias() -= (w * w.transpose()) / (1.0 + q);
  log_det_ += std::log1p(q);

  if (++updates_since_refactor_ >= kRefactorPeriod || inverse_drift() > kDriftThreshold)
    refactorize();
}

double CovarianceAccumulator::weighted_norm(const Eigen::VectorXd& phi) const {
  const double q = phi.dot(lambda_inv_ * phi);
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

Eigen::VectorXd CovarianceAccumulator::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = lambda_inv_ * b;
  // One refinement step; Lambda >= I keeps this well conditioned.
  x.noalias() += lambda_inv_ * (b - lambda_ * x);
  return x;
}

void CovarianceAccumulator::refactorize() {
  Eigen::LLT<Eigen::MatrixXd> llt(lambda_);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("covariance refactorization failed (matrix not SPD)");
  lambda_inv_ = llt.solve(Eigen::MatrixXd::Identity(lambda_.rows(), lambda_.cols()));
  const Eigen::MatrixXd& L = llt.matrixLLT();
  double ld = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) ld += std::log(L(i, i));
  log_det_ = 2.0 * ld;
  updates_since_refactor_ = 0;
}

double CovarianceAccumulator::inverse_drift() const {
  // Probe with the normalized ones vector: O(d^2) per check.
  const Eigen::Index d = lambda_.rows();
  Eigen::VectorXd b = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  Eigen::VectorXd r = lambda_ * (lambda_inv_ * b) - b;
  return r.cwiseAbs().maxCoeff();
}

double EpochSnapshot::weighted_norm(const Eigen::VectorXd& u) const {
  const double q = u.dot(lambda_inv * u);
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

EpochSnapshot EpochSnapshot::freeze(const CovarianceAccumulator& acc, int epoch_index,
                                    long episode_created) {
  EpochSnapshot s;
  s.lambda = acc.matrix();
  s.lambda_inv = acc.inverse();
  s.log_det = acc.log_det();
  s.epoch_index = epoch_index;
  s.episode_created = episode_created;
  return s;
}

bool should_refresh_epoch(const CovarianceAccumulator& acc, const EpochSnapshot* snapshot) {
  if (snapshot == nullptr) return true;
  return acc.log_det() - snapshot->log_det >= kLn2;
}

}  // namespace linpo
