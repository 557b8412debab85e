#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "linpo/jsonio.hpp"
#include "linpo/rng.hpp"

using namespace linpo;

TEST_CASE("keyed rng streams are deterministic and distinct") {
  Rng a = Rng::keyed(123, 1, 2, 3);
  Rng b = Rng::keyed(123, 1, 2, 3);
  Rng c = Rng::keyed(123, 1, 2, 4);
  bool any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("uniform doubles live in [0,1) with sane mean") {
  Rng rng(42);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 20000 - 0.5) < 0.01);
}

TEST_CASE("categorical follows weights") {
  Rng rng(7);
  const double w[3] = {0.2, 0.3, 0.5};
  int counts[3] = {0, 0, 0};
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[rng.categorical(w, 3)];
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(static_cast<double>(counts[j]) / n - w[j]) < 0.01);
}

TEST_CASE("dirichlet samples are simplex points") {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto p = rng.dirichlet(5);
    double sum = 0.0;
    for (double x : p) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gaussian moments") {
  Rng rng(11);
  double sum = 0.0, sumsq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.gaussian();
    sum += z;
    sumsq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sumsq / n - 1.0) < 0.03);
}

TEST_CASE("json doubles round-trip bit-exactly") {
  Rng rng(1234);
  for (int i = 0; i < 50000; ++i) {
    const std::uint64_t bits = rng.next_u64();
    double x;
    std::memcpy(&x, &bits, sizeof(x));
    if (!std::isfinite(x)) continue;
    const json j = x;
    const double y = json::parse(j.dump()).get<double>();
    std::uint64_t back;
    std::memcpy(&back, &y, sizeof(back));
    REQUIRE(back == bits);
  }
}

TEST_CASE("matrix json round-trip is exact") {
  Rng rng(5);
  Eigen::MatrixXd m(7, 3);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = rng.gaussian() * std::pow(10.0, rng.next_int(7) - 3);
  const Eigen::MatrixXd back = mat_from_json(json::parse(mat_to_json(m).dump()));
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("format_double round-trips through strtod") {
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t bits = rng.next_u64();
    double x;
    std::memcpy(&x, &bits, sizeof(x));
    if (!std::isfinite(x)) continue;
    const double y = std::strtod(format_double(x).c_str(), nullptr);
    CHECK(y == x);
  }
}
