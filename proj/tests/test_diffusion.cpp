#include "ensdiff/dataset.hpp"
#include "ensdiff/diffusion.hpp"
#include "ensdiff/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace ensdiff;

TEST_CASE("gamma closed form") {
  const NoiseSchedule s;
  CHECK(gamma(s, 0.0) == 1.0);
  CHECK(gamma(s, 1.0) == doctest::Approx(std::exp(-10.05)).epsilon(1e-14));
  CHECK(gamma(NoiseSchedule(1.0, 1.0), 0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK_THROWS_AS(gamma(s, -0.01), DomainError);
  CHECK_THROWS_AS(gamma(s, 1.01), DomainError);
  CHECK_THROWS_AS(NoiseSchedule(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(NoiseSchedule(2.0, 1.0), DomainError);
}

TEST_CASE("gamma is strictly decreasing and beta nondecreasing on a random grid") {
  const NoiseSchedule s;
  Stream rng(7);
  for (int i = 0; i < 1000; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    CHECK(gamma(s, a) > gamma(s, b));
    CHECK(s.beta(a) <= s.beta(b));
    CHECK(gamma(s, b) > 0.0);
  }
}

TEST_CASE("forward_sample limits") {
  const NoiseSchedule s;
  const Vector x0 = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const Vector z = (Vector(3) << 0.3, 0.1, -1.0).finished();
  CHECK((forward_sample(s, x0, 1e-12, z) - x0).norm() < 1e-5);
  const Vector zero = Vector::Zero(3);
  const double t = 0.4;
  CHECK((forward_sample(s, zero, t, z) - std::sqrt(1.0 - gamma(s, t)) * z).norm() == 0.0);
  CHECK_THROWS_AS(forward_sample(s, x0, 0.0, z), DomainError);
  CHECK_THROWS_AS(forward_sample(s, x0, t, Vector(Vector::Zero(2))), DomainError);
}

TEST_CASE("forward_sample covariance matches (1 - gamma) I by Monte Carlo") {
  const NoiseSchedule s;
  const double t = 0.2;
  const Vector x0 = (Vector(2) << 0.7, -1.3).finished();
  const long n = 100000;
  Stream rng(11);
  Matrix X(n, 2);
  for (long i = 0; i < n; ++i) X.row(i) = forward_sample(s, x0, t, rng.normal_vector(2)).transpose();
  const double v = 1.0 - gamma(s, t);
  const Vector mean = X.colwise().mean().transpose();
  const Matrix c = X.rowwise() - mean.transpose();
  const Matrix cov = c.transpose() * c / double(n - 1);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean[i] - std::sqrt(gamma(s, t)) * x0[i]) < 5.0 * std::sqrt(v / n));
    CHECK(std::abs(cov(i, i) - v) < 5.0 * v * std::sqrt(2.0 / n));
  }
  CHECK(std::abs(cov(0, 1)) < 5.0 * v / std::sqrt(double(n)));
}

TEST_CASE("conditional_score examples and finite-difference oracle") {
  const NoiseSchedule s;
  const double t = 0.3, g = gamma(s, t);
  const Vector x0 = (Vector(2) << 0.4, -0.9).finished();
  CHECK(conditional_score(s, Vector(std::sqrt(g) * x0), x0, t).norm() == 0.0);

  // z = e1 with gamma = 0.75 gives -2 e1: choose t so that gamma(t) = 0.75.
  const NoiseSchedule flat(1.0, 1.0);
  const double t75 = -std::log(0.75);
  const Vector e1 = (Vector(2) << 1.0, 0.0).finished();
  const Vector xt = forward_sample(flat, x0, t75, e1);
  const Vector sc = conditional_score(flat, xt, x0, t75);
  CHECK(sc[0] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(sc[1]) < 1e-12);

  auto logq = [&](const Vector& x) {
    return -0.5 * (x - std::sqrt(g) * x0).squaredNorm() / (1.0 - g);
  };
  const Vector x = (Vector(2) << 0.1, 0.2).finished();
  const Vector analytic = conditional_score(s, x, x0, t);
  const double h = 1e-5;
  for (int i = 0; i < 2; ++i) {
    Vector up = x, down = x;
    up[i] += h;
    down[i] -= h;
    CHECK(std::abs((logq(up) - logq(down)) / (2 * h) - analytic[i]) < 1e-6);
  }
  CHECK_THROWS_AS(conditional_score(s, x, x0, 0.0), DomainError);
}

TEST_CASE("marginal_gaussian_covariance examples") {
  const NoiseSchedule s;
  const Vector ones = Vector::Ones(3);
  CHECK((marginal_gaussian_covariance(s, ones, 0.6) - ones).norm() < 1e-15);
  const Vector four = Vector::Constant(1, 4.0);
  CHECK(marginal_gaussian_covariance(four, 0.5)[0] == doctest::Approx(2.5));
  const Vector a = (Vector(2) << 0.3, 7.0).finished();
  CHECK((marginal_gaussian_covariance(s, a, 0.0) - a).norm() == 0.0);
}

TEST_CASE("TimeGrid invariants") {
  const TimeGrid g(50);
  CHECK(g.n_steps() == 50);
  CHECK(g.t_min() == 1e-3);
  CHECK(g.t_max() == 1.0);
  for (int i = 1; i < g.n_steps(); ++i) {
    CHECK(g[i] > g[i - 1]);
    CHECK(g[i] - g[i - 1] == doctest::Approx((1.0 - 1e-3) / 49).epsilon(1e-9));
  }
  CHECK(g.nearest(0.0) == 0);
  CHECK(g.nearest(g[17]) == 17);
  CHECK(g.nearest(1.0) == 49);
  CHECK(g.step_from(0) == 1e-3);
  CHECK_THROWS_AS(TimeGrid(0), DomainError);
  CHECK_THROWS_AS(TimeGrid(std::vector<double>{0.5, 0.4}), DomainError);
}

TEST_CASE("scaler round trip to 1e-12 relative error") {
  Stream rng(3);
  Matrix X(40, 3);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    X.row(i) << 1e3 * rng.normal(), rng.normal() - 5.0, 1e-3 * rng.uniform();
  const auto sc = MinMaxScaler::fit(X);
  const Matrix Z = sc.transform(X);
  CHECK(Z.maxCoeff() <= 1.0 + 1e-15);
  CHECK(Z.minCoeff() >= -1.0 - 1e-15);
  const Matrix back = sc.inverse(Z);
  CHECK(((back - X).array().abs() / X.array().abs().max(1e-300)).maxCoeff() < 1e-12);

  Matrix C = Matrix::Constant(4, 1, 2.5);
  const auto cs = MinMaxScaler::fit(C);
  CHECK(cs.transform(C).norm() == 0.0);
  CHECK((cs.inverse(cs.transform(C)) - C).norm() == 0.0);
}

TEST_CASE("CSV ingestion") {
  std::istringstream good("a,b\n1,2\n3.5,-4e-1\n");
  const Dataset d = read_csv(good);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 2);
  CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(d.points(1, 1) == -0.4);

  std::istringstream missing("a,b\n1,\n3,4\n");
  CHECK_THROWS_AS(read_csv(missing), DomainError);
  std::istringstream text("a,b\n1,x\n3,4\n");
  CHECK_THROWS_AS(read_csv(text), DomainError);
  std::istringstream ragged("a,b\n1,2,3\n3,4\n");
  CHECK_THROWS_AS(read_csv(ragged), DomainError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), DomainError);
  std::istringstream one_row("a\n1\n");
  CHECK_THROWS_AS(read_csv(one_row).validate(), DomainError);  // n >= 2 is a training-data requirement
}

TEST_CASE("train_test_split is a reproducible partition") {
  Matrix X(10, 1);
  for (int i = 0; i < 10; ++i) X(i, 0) = i;
  const Split a = train_test_split(X, 0.2, Stream(5));
  const Split b = train_test_split(X, 0.2, Stream(5));
  CHECK(a.test.rows() == 2);
  CHECK(a.train.rows() == 8);
  CHECK(a.test == b.test);
  std::vector<double> all;
  for (Eigen::Index i = 0; i < 8; ++i) all.push_back(a.train(i, 0));
  for (Eigen::Index i = 0; i < 2; ++i) all.push_back(a.test(i, 0));
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("streams are order independent") {
  const Stream root(42);
  Stream a = root.child({1, 2, 3});
  Stream b = root.child(1).child(2).child(3);
  CHECK(a() == b());
  CHECK(root.child(1).key() != root.child(2).key());
}
