#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "linpo/covariance.hpp"
#include "linpo/rng.hpp"

using namespace linpo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_unit_ball(Rng& rng, int d) {
  VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.gaussian();
  const double scale = rng.next_double() / std::max(v.norm(), 1e-12);
  return v * scale;
}

/// Dense oracle: direct accumulation and factorization, independent of the
/// incremental path.
struct DenseOracle {
  MatrixXd lambda;
  explicit DenseOracle(int d) : lambda(MatrixXd::Identity(d, d)) {}
  void add(const VectorXd& phi) { lambda += phi * phi.transpose(); }
  MatrixXd inverse() const { return lambda.fullPivLu().inverse(); }
  double log_det() const {
    return 2.0 * MatrixXd(lambda.llt().matrixL()).diagonal().array().log().sum();
  }
  VectorXd solve(const VectorXd& b) const { return lambda.fullPivLu().solve(b); }
  double weighted_norm(const VectorXd& u) const { return std::sqrt(u.dot(solve(u))); }
};

}  // namespace

TEST_CASE("rank-one update, diagonal case") {
  CovarianceAccumulator acc(2);
  VectorXd e1(2);
  e1 << 1.0, 0.0;
  acc.rank_one_update(e1);
  CHECK(acc.matrix()(0, 0) == doctest::Approx(2.0));
  CHECK(acc.matrix()(1, 1) == doctest::Approx(1.0));
  CHECK(acc.inverse()(0, 0) == doctest::Approx(0.5));
  CHECK(acc.inverse()(1, 1) == doctest::Approx(1.0));
  CHECK(acc.log_det() == doctest::Approx(std::log(2.0)));
  CHECK(acc.n_updates() == 1);
}

TEST_CASE("zero vector leaves the matrix untouched") {
  CovarianceAccumulator acc(3);
  acc.rank_one_update(VectorXd::Zero(3));
  CHECK(acc.matrix().isIdentity(0.0));
  CHECK(acc.log_det() == 0.0);
  CHECK(acc.n_updates() == 1);
}

TEST_CASE("500 random updates match the dense oracle") {
  const int d = 8;
  CovarianceAccumulator acc(d);
  DenseOracle oracle(d);
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const VectorXd phi = random_unit_ball(rng, d);
    acc.rank_one_update(phi);
    oracle.add(phi);
  }
  CHECK((acc.inverse() - oracle.inverse()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(acc.log_det() - oracle.log_det()) < 1e-8);
}

TEST_CASE("weighted norm basics and dense-solve oracle") {
  CovarianceAccumulator acc(2);
  VectorXd u(2);
  u << std::sqrt(0.5), std::sqrt(0.5);
  CHECK(acc.weighted_norm(u) == doctest::Approx(1.0));

  VectorXd e1(2);
  e1 << 1.0, 0.0;
  acc.rank_one_update(e1);  // Lambda = diag(2, 1)
  CHECK(acc.weighted_norm(e1) == doctest::Approx(1.0 / std::sqrt(2.0)));

  const int d = 6;
  CovarianceAccumulator acc2(d);
  DenseOracle oracle(d);
  Rng rng(77);
  for (int i = 0; i < 300; ++i) {
    const VectorXd phi = random_unit_ball(rng, d);
    acc2.rank_one_update(phi);
    oracle.add(phi);
  }
  for (int i = 0; i < 50; ++i) {
    const VectorXd probe = random_unit_ball(rng, d);
    const double expected = oracle.weighted_norm(probe);
    CHECK(acc2.weighted_norm(probe) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("solve examples and oracle") {
  CovarianceAccumulator acc(2);
  VectorXd b(2);
  b << 2.0, 3.0;
  CHECK((acc.solve(b) - b).cwiseAbs().maxCoeff() < 1e-14);  // Lambda = I

  VectorXd e1(2);
  e1 << 1.0, 0.0;
  acc.rank_one_update(e1);  // diag(2,1)
  const VectorXd x = acc.solve(b);
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(x(1) == doctest::Approx(3.0));

  const int d = 10;
  CovarianceAccumulator acc2(d);
  DenseOracle oracle(d);
  Rng rng(5);
  for (int i = 0; i < 800; ++i) {
    const VectorXd phi = random_unit_ball(rng, d);
    acc2.rank_one_update(phi);
    oracle.add(phi);
  }
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd rhs(d);
    for (int i = 0; i < d; ++i) rhs(i) = rng.gaussian();
    const VectorXd got = acc2.solve(rhs);
    const VectorXd want = oracle.solve(rhs);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, want.cwiseAbs().maxCoeff()));
    // Residual contract.
    CHECK((acc2.matrix() * got - rhs).cwiseAbs().maxCoeff() <=
          1e-8 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("epoch refresh rule at and near the determinant boundary") {
  CovarianceAccumulator acc(2);
  EpochSnapshot snap = EpochSnapshot::freeze(acc, 0, 0);
  CHECK_FALSE(should_refresh_epoch(acc, &snap));  // ratio 1
  CHECK(should_refresh_epoch(acc, nullptr));      // empty snapshot always refreshes

  VectorXd e1(2);
  e1 << 1.0, 0.0;
  acc.rank_one_update(e1);  // det 2 vs det 1
  CHECK(should_refresh_epoch(acc, &snap));

  // Near-threshold: det 2 - 1e-12 stays below, one more nudge crosses.
  CovarianceAccumulator tight(2);
  EpochSnapshot tight_snap = EpochSnapshot::freeze(tight, 0, 0);
  const double t = 1.0 - 1e-12;
  VectorXd v(2);
  v << std::sqrt(t), 0.0;
  tight.rank_one_update(v);  // det = 1 + t = 2 - 1e-12
  CHECK_FALSE(should_refresh_epoch(tight, &tight_snap));
  VectorXd w(2);
  w << std::sqrt(3e-12), 0.0;
  tight.rank_one_update(w);  // det crosses 2
  CHECK(should_refresh_epoch(tight, &tight_snap));
}

TEST_CASE("inverse drift stays controlled over long streams") {
  const int d = 5;
  CovarianceAccumulator acc(d);
  Rng rng(13);
  for (int i = 0; i < 5000; ++i) acc.rank_one_update(random_unit_ball(rng, d));
  const MatrixXd residual =
      acc.matrix() * acc.inverse() - MatrixXd::Identity(d, d);
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("property: bonus sandwich under the refresh rule") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 2 + rng.next_int(6);
    CovarianceAccumulator acc(d);
    auto snap = std::make_unique<EpochSnapshot>(EpochSnapshot::freeze(acc, 0, 0));
    const int steps = 50 + rng.next_int(200);
    for (int i = 0; i < steps; ++i) {
      acc.rank_one_update(random_unit_ball(rng, d));
      if (should_refresh_epoch(acc, snap.get()))
        *snap = EpochSnapshot::freeze(acc, snap->epoch_index + 1, i);
      for (int probe = 0; probe < 4; ++probe) {
        VectorXd u(d);
        for (int j = 0; j < d; ++j) u(j) = rng.gaussian();
        const double fresh = acc.weighted_norm(u);
        const double frozen = snap->weighted_norm(u);
        REQUIRE(frozen >= fresh - 1e-9);
        REQUIRE(frozen <= std::sqrt(2.0) * fresh + 1e-9);
      }
    }
  }
}

TEST_CASE("property: refresh count bounded by d log2(N+1)") {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + rng.next_int(8);
    CovarianceAccumulator acc(d);
    auto snap = std::make_unique<EpochSnapshot>(EpochSnapshot::freeze(acc, 0, 0));
    int refreshes = 0;
    const int steps = 50 + rng.next_int(1000);
    for (int i = 0; i < steps; ++i) {
      acc.rank_one_update(random_unit_ball(rng, d));
      if (should_refresh_epoch(acc, snap.get())) {
        *snap = EpochSnapshot::freeze(acc, snap->epoch_index + 1, i);
        ++refreshes;
      }
    }
    CHECK(refreshes <= d * std::log2(static_cast<double>(steps) + 1.0) + 1e-9);
  }
}

TEST_CASE("property: elliptical potential bound") {
  Rng rng(321);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + rng.next_int(8);
    const int steps = 100 + rng.next_int(2000);
    CovarianceAccumulator acc(d);
    double sum = 0.0;
    for (int i = 0; i < steps; ++i) {
      const VectorXd phi = random_unit_ball(rng, d);
      const double norm = acc.weighted_norm(phi);  // pre-update matrix
      sum += norm * norm;
      acc.rank_one_update(phi);
    }
    CHECK(sum <= 2.0 * d * std::log(1.0 + static_cast<double>(steps) / d) + 1e-9);
  }
}

TEST_CASE("property: weighted norm is non-increasing in updates") {
  Rng rng(555);
  const int d = 6;
  CovarianceAccumulator acc(d);
  VectorXd probe = random_unit_ball(rng, d);
  double prev = acc.weighted_norm(probe);
  for (int i = 0; i < 300; ++i) {
    acc.rank_one_update(random_unit_ball(rng, d));
    const double cur = acc.weighted_norm(probe);
    REQUIRE(cur <= prev + 1e-10);
    prev = cur;
  }
}
