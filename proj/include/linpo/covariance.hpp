#pragma once

#include <Eigen/Dense>
#include <memory>

namespace linpo {

/// Regularized empirical covariance Lambda = I + sum phi phi^T with an
/// incrementally maintained inverse and log-determinant.
///
/// Rank-one updates use Sherman-Morrison for the inverse and the matrix
/// determinant lemma (in log space) for the determinant, both O(d^2).
/// A full Cholesky refactorization runs every 256 updates or as soon as a
/// cheap probe detects inverse drift above 1e-10, which keeps the
/// Lambda * Lambda_inv identity error below 1e-8 over arbitrarily long
/// update streams.
///
/// Single writer; concurrent readers are safe while no update runs.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(int dim);

  /// Rebuilds an accumulator from serialized state, bit-exactly.
  static CovarianceAccumulator from_parts(Eigen::MatrixXd lambda, Eigen::MatrixXd lambda_inv,
                                          double log_det, long n_updates);

  int dim() const { return static_cast<int>(lambda_.rows()); }
  long n_updates() const { return n_updates_; }
  double log_det() const { return log_det_; }
  const Eigen::MatrixXd& matrix() const { return lambda_; }
  const Eigen::MatrixXd& inverse() const { return lambda_inv_; }

  /// Lambda += phi phi^T. Requires ||phi|| <= 1 + tol; a zero phi is a no-op
  /// for the matrix but still counts as an update.
  void rank_one_update(const Eigen::VectorXd& phi);

  /// sqrt(phi^T Lambda^{-1} phi).
  double weighted_norm(const Eigen::VectorXd& phi) const;

  /// Solves Lambda x = b with one step of iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  /// Recomputes inverse and log-determinant from a fresh factorization.
  void refactorize();

  /// Max-abs residual of Lambda * (Lambda^{-1} b) - b on a fixed probe b;
  /// exposed for the drift tests.
  double inverse_drift() const;

 private:
  Eigen::MatrixXd lambda_;
  Eigen::MatrixXd lambda_inv_;
  double log_det_ = 0.0;
  long n_updates_ = 0;
  int updates_since_refactor_ = 0;
};

/// Frozen copy of an accumulator state used to evaluate bonuses between
/// determinant-doubling refreshes. Immutable and freely shareable.
struct EpochSnapshot {
  Eigen::MatrixXd lambda;
  Eigen::MatrixXd lambda_inv;
  double log_det = 0.0;
  int epoch_index = 0;
  long episode_created = 0;

  double weighted_norm(const Eigen::VectorXd& u) const;

  static EpochSnapshot freeze(const CovarianceAccumulator& acc, int epoch_index,
                              long episode_created);
};

/// True iff det(acc) >= 2 det(snapshot), compared in log space. A null
/// snapshot (the "det 0" initial state) always triggers a refresh.
bool should_refresh_epoch(const CovarianceAccumulator& acc, const EpochSnapshot* snapshot);

}  // namespace linpo
