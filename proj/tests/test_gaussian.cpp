#include "ensdiff/diffusion.hpp"
#include "ensdiff/gaussian.hpp"
#include "ensdiff/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace ensdiff;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector log_uniform(Stream& rng, int K, double lo, double hi) {
  Vector a(K);
  for (int k = 0; k < K; ++k) a[k] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform());
  return a;
}

}  // namespace

TEST_CASE("harmonic mean examples and homogeneity") {
  CHECK(harmonic_mean(vec({2.5, 2.5, 2.5})) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(harmonic_mean(vec({1.0, 4.0})) == doctest::Approx(1.6).epsilon(1e-15));
  CHECK_THROWS_AS(harmonic_mean(vec({1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(harmonic_mean(vec({1.0, -2.0})), DomainError);
  Stream rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vector x = log_uniform(rng, 2 + static_cast<int>(rng.index(6)), 1e-2, 1e2);
    const double lambda = std::exp(4.0 * rng.uniform() - 2.0);
    CHECK(std::abs(harmonic_mean((lambda * x).eval()) - lambda * harmonic_mean(x)) <= 1e-12 * lambda * harmonic_mean(x));
    CHECK(harmonic_mean(x) <= x.mean() * (1 + 1e-12));
  }
}

TEST_CASE("poe_covariance examples") {
  CHECK(poe_covariance(Matrix::Ones(3, 4)) == Vector::Ones(4));
  Matrix one_d(2, 1);
  one_d << 1.0, 4.0;
  CHECK(poe_covariance(one_d)[0] == doctest::Approx(1.6).epsilon(1e-15));
  const Matrix single = vec({0.3, 2.0, 7.0}).transpose();
  CHECK((poe_covariance(single) - single.row(0).transpose()).norm() < 1e-15);
  CHECK_THROWS_AS(poe_covariance(Matrix::Zero(2, 2)), DomainError);
}

TEST_CASE("commutativity gap examples") {
  const auto g = commutativity_gap(vec({1.0, 4.0}), 0.5);
  CHECK(g.c_poe == doctest::Approx(1.3).epsilon(1e-15));
  CHECK(g.c_not_poe == doctest::Approx(2.0 / 1.4).epsilon(1e-15));
  CHECK(g.gap == doctest::Approx(2.0 / 1.4 - 1.3).epsilon(1e-12));
  for (double gam : {0.01, 0.5, 0.99}) CHECK(std::abs(commutativity_gap(vec({3.0, 3.0, 3.0}), gam).gap) <= 1e-12);
  CHECK_THROWS_AS(commutativity_gap(vec({1.0, 2.0}), 0.0), DomainError);
  CHECK_THROWS_AS(commutativity_gap(vec({1.0, 2.0}), 1.0), DomainError);
  CHECK_THROWS_AS(commutativity_gap(vec({1.0, 2.0}), 1.5), DomainError);
}

TEST_CASE("commutativity gap vanishes as gamma approaches 1") {
  const Vector a = vec({0.05, 1.0, 30.0});
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
    const double gap = commutativity_gap(a, 1.0 - eps).gap;
    CHECK(gap >= 0.0);
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("commutativity gap sweep: gap >= 0, zero iff the alphas agree") {
  Stream rng(2);
  for (int i = 0; i < 10000; ++i) {
    const int K = 2 + static_cast<int>(rng.index(7));
    Vector a = log_uniform(rng, K, 1e-2, 1e2);
    if (i % 10 == 0) a.setConstant(a[0]);
    double gam = rng.uniform();
    while (gam == 0.0) gam = rng.uniform();
    const auto r = commutativity_gap(a, gam);
    CHECK(r.gap >= -1e-12);
    const bool equal = a.maxCoeff() / a.minCoeff() - 1.0 <= 1e-9;
    CHECK((r.gap <= 1e-12) == equal);
  }
}

TEST_CASE("per-coordinate extension on diagonal experts") {
  // Diffusing each expert then taking the PoE, versus the PoE then diffusing,
  // computed coordinate-wise through the generic helpers.
  Stream rng(3);
  const NoiseSchedule s;
  for (int i = 0; i < 50; ++i) {
    Matrix alphas(3, 4);
    for (int k = 0; k < 3; ++k) alphas.row(k) = log_uniform(rng, 4, 1e-1, 1e1).transpose();
    const double t = 0.05 + 0.9 * rng.uniform();
    const double g = gamma(s, t);
    Matrix diffused(3, 4);
    for (int k = 0; k < 3; ++k)
      diffused.row(k) = marginal_gaussian_covariance(Vector(alphas.row(k).transpose()), g).transpose();
    const Vector not_poe = poe_covariance(diffused);
    const Vector poe = marginal_gaussian_covariance(poe_covariance(alphas), g);
    for (int j = 0; j < 4; ++j) {
      const auto iso = commutativity_gap(Vector(alphas.col(j)), g);
      CHECK(std::abs(not_poe[j] - iso.c_not_poe) < 1e-12);
      CHECK(std::abs(poe[j] - iso.c_poe) < 1e-12);
      CHECK(not_poe[j] - poe[j] >= -1e-12);
    }
  }
}

TEST_CASE("reverse Minkowski examples and sweep") {
  const Vector a = vec({1.0, 4.0}), b = vec({1.0, 1.0});
  const auto r = reverse_minkowski_check(a, b, -1.0);
  CHECK(r.holds);
  CHECK(r.lhs > r.rhs + 1e-3);
  // p = -1: (sum 1/x)^-1 is H / K.
  CHECK(r.lhs == doctest::Approx(1.0 / (0.5 + 0.2)).epsilon(1e-14));
  CHECK(r.rhs == doctest::Approx(0.8 + 0.5).epsilon(1e-14));

  const auto same = reverse_minkowski_check(a, a, 0.5);
  CHECK(std::abs(same.lhs - same.rhs) <= 1e-10 * same.lhs);
  CHECK(proportional(a, (3.0 * a).eval()));
  CHECK_FALSE(proportional(a, b));

  CHECK_THROWS_AS(reverse_minkowski_check(a, b, 0.0), DomainError);
  CHECK_THROWS_AS(reverse_minkowski_check(a, b, 1.0), DomainError);
  CHECK_THROWS_AS(reverse_minkowski_check(a, b, 2.0), DomainError);

  Stream rng(4);
  for (int i = 0; i < 1000; ++i) {
    const int K = 1 + static_cast<int>(rng.index(8));
    const Vector x = log_uniform(rng, K, 1e-2, 1e2), y = log_uniform(rng, K, 1e-2, 1e2);
    const double p = std::array<double, 3>{-1.0, 0.5, -2.0}[rng.index(3)];
    const auto c = reverse_minkowski_check(x, y, p);
    CHECK(c.holds);
    if (proportional(x, y)) CHECK(std::abs(c.lhs - c.rhs) <= 1e-10 * c.lhs);
    const auto scaled = reverse_minkowski_check(x, (2.5 * x).eval(), p);
    CHECK(std::abs(scaled.lhs - scaled.rhs) <= 1e-10 * scaled.lhs);
  }
}
