#include "helpers.hpp"

#include "ensdiff/forest_vp.hpp"
#include "ensdiff/likelihood.hpp"

#include <cmath>
#include <numbers>

using namespace ensdiff;

namespace {

double oracle(const Vector& alpha, const Vector& x0, const NoiseSchedule& s, double t_min) {
  return gaussian_log_density(x0, marginal_gaussian_covariance(s, alpha, t_min));
}

}  // namespace

TEST_CASE("divergence of a linear field is its trace") {
  Stream rng(1);
  const Matrix A = rng.normal_matrix(3, 3);
  const testing::LinearScore lin(A);
  const Vector x = rng.normal_vector(3);
  CHECK(divergence_exact(lin, x, 0.5, 1e-4) == doctest::Approx(A.trace()).epsilon(1e-9));
  const Matrix probes = Matrix::Identity(3, 3);
  // Coordinate probes average the diagonal entries.
  CHECK(3.0 * divergence_hutchinson(lin, x, 0.5, 1e-4, probes) == doctest::Approx(A.trace()).epsilon(1e-9));
}

TEST_CASE("divergence of the analytic Gaussian score") {
  const NoiseSchedule s;
  const Vector alpha = (Vector(3) << 0.25, 1.0, 4.0).finished();
  const AnalyticGaussianScore score(alpha, s);
  const Vector x = (Vector(3) << 0.3, -1.2, 2.0).finished();
  for (double t : {0.01, 0.2, 0.7, 1.0}) {
    const double g = gamma(s, t);
    const double expected = -(1.0 / (g * alpha.array() + 1.0 - g)).sum();
    CHECK(divergence_exact(score, x, t, 1e-4) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("Hutchinson with many probes converges to the trace") {
  Stream rng(2);
  const Matrix A = rng.normal_matrix(3, 3);
  const testing::LinearScore lin(A);
  const Vector x = Vector::Zero(3);
  for (Probe kind : {Probe::Rademacher, Probe::Gaussian}) {
    const int M = 10000;
    const Matrix probes = draw_probes(3, M, kind, rng);
    Vector per(M);
    for (int m = 0; m < M; ++m) per[m] = divergence_hutchinson(lin, x, 0.5, 1e-4, probes.col(m));
    const double mean = per.mean();
    const double se = std::sqrt((per.array() - mean).square().sum() / (M - 1) / M);
    CHECK(divergence_hutchinson(lin, x, 0.5, 1e-4, probes) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(std::abs(mean - A.trace()) < 5.0 * se);
  }
}

TEST_CASE("divergence rejects non-finite evaluations") {
  const testing::ConstantScore nan_score(Vector::Constant(2, std::numeric_limits<double>::quiet_NaN()));
  CHECK_THROWS_AS(divergence_exact(nan_score, Vector::Zero(2), 0.5, 1e-4), NumericalError);
  CHECK_THROWS_AS(divergence_hutchinson(nan_score, Vector::Zero(2), 0.5, 1e-4, Matrix::Ones(2, 1)), NumericalError);
}

TEST_CASE("ode_loglik matches the Gaussian oracle") {
  const NoiseSchedule s;
  const LikelihoodConfig cfg;
  Stream rng(3);
  for (double a : {0.25, 1.0, 4.0}) {
    const Vector alpha = Vector::Constant(3, a);
    const AnalyticGaussianScore score(alpha, s);
    for (int i = 0; i < 3; ++i) {
      const Vector x0 = rng.normal_vector(3).cwiseProduct(alpha.cwiseSqrt());
      const auto r = ode_loglik(score, x0, s, cfg);
      CHECK(std::abs(r.log_density - oracle(alpha, x0, s, cfg.t_min)) < 1e-3);
      CHECK(r.warnings.empty());
    }
  }
  const Vector mixed = (Vector(3) << 0.25, 1.0, 4.0).finished();
  const Vector x0 = (Vector(3) << 0.4, -0.8, 1.9).finished();
  CHECK(std::abs(ode_loglik(AnalyticGaussianScore(mixed, s), x0, s, cfg).log_density - oracle(mixed, x0, s, cfg.t_min)) <
        1e-3);
}

TEST_CASE("standard normal mode") {
  const NoiseSchedule s;
  const AnalyticGaussianScore unit(Vector::Ones(3), s);
  const auto r = ode_loglik(unit, Vector::Zero(3), s, LikelihoodConfig{});
  CHECK(r.log_density == doctest::Approx(-1.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
  CHECK(r.terminal.norm() == 0.0);
}

TEST_CASE("two identical copies averaged give the same likelihood") {
  const NoiseSchedule s;
  const auto base = std::make_shared<AnalyticGaussianScore>((Vector(2) << 0.5, 2.0).finished(), s);
  const PredictorEnsemble two({base, base});
  const AggregatedScore mean(two, AggregationRule::Arithmetic);
  const Vector x0 = (Vector(2) << 0.7, -1.1).finished();
  LikelihoodConfig cfg;
  cfg.n_ode_steps = 200;
  CHECK(ode_loglik(mean, x0, s, cfg).log_density ==
        doctest::Approx(ode_loglik(*base, x0, s, cfg).log_density).epsilon(1e-12));
}

TEST_CASE("oracle error shrinks as the step halves") {
  // Against the exact flow, which scales coordinate i by sqrt(v_i(1) / v_i(t_min)).
  // The density oracle above also carries the N(0, I) prior mismatch at t = 1
  // (about gamma(1) = 4e-5 nats), which would mask the discretization error.
  const NoiseSchedule s;
  const Vector alpha = (Vector(3) << 0.25, 1.0, 4.0).finished();
  const AnalyticGaussianScore score(alpha, s);
  const Vector x0 = (Vector(3) << 0.3, 0.5, -2.5).finished();
  LikelihoodConfig cfg;
  const Vector v0 = marginal_gaussian_covariance(s, alpha, cfg.t_min), v1 = marginal_gaussian_covariance(s, alpha, 1.0);
  const Vector ratio = (v1.array() / v0.array()).matrix();
  const double exact_flow = gaussian_log_density(Vector(x0.cwiseProduct(ratio.cwiseSqrt())), Vector::Ones(3)) +
                            0.5 * ratio.array().log().sum();
  CHECK(std::abs(exact_flow - oracle(alpha, x0, s, cfg.t_min)) < 2e-4);
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {10, 20, 40, 80, 160}) {
    cfg.n_ode_steps = n;
    const double err = std::abs(ode_loglik(score, x0, s, cfg).log_density - exact_flow);
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("Hutchinson likelihood is reproducible per stream and unbiased on average") {
  const NoiseSchedule s;
  const Vector alpha = (Vector(2) << 0.5, 2.0).finished();
  const AnalyticGaussianScore score(alpha, s);
  const Vector x0 = (Vector(2) << 0.2, 1.0).finished();
  LikelihoodConfig cfg;
  cfg.n_ode_steps = 100;
  cfg.divergence = DivergenceKind::Hutchinson;
  // Rademacher probes are exact on a diagonal Jacobian; Gaussian ones are not.
  cfg.probe = Probe::Gaussian;
  CHECK(ode_loglik(score, x0, s, cfg, Stream(4)).log_density == ode_loglik(score, x0, s, cfg, Stream(4)).log_density);
  const int reps = 400;
  Vector v(reps);
  for (int i = 0; i < reps; ++i) v[i] = ode_loglik(score, x0, s, cfg, Stream(4).child(i)).log_density;
  const double se = std::sqrt((v.array() - v.mean()).square().sum() / (reps - 1) / reps);
  cfg.divergence = DivergenceKind::ExactFiniteDifference;
  CHECK(std::abs(v.mean() - ode_loglik(score, x0, s, cfg).log_density) < 5.0 * se);
}

TEST_CASE("forest scores warn; diverging fields raise") {
  const NoiseSchedule s;
  ForestVpConfig fc;
  fc.n_rep = 3;
  fc.forest.n_trees = 2;
  fc.forest.tree.max_depth = 2;
  Stream rng(5);
  const auto model = train_forest_vp(rng.normal_matrix(20, 2), s, TimeGrid(3), fc, 1);
  LikelihoodConfig cfg;
  cfg.n_ode_steps = 20;
  const auto r = ode_loglik(model, Vector::Zero(2), s, cfg);
  CHECK(r.warnings.size() == 1);

  // s = -10 x gives the forward flow drift 4.5 beta x, far past the threshold by t = 1.
  const testing::LinearScore repel(Matrix::Identity(2, 2) * -10.0);
  CHECK_THROWS_AS(ode_loglik(repel, Vector::Ones(2), s, cfg), NumericalError);
  const Vector bad = Vector::Constant(2, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(ode_loglik(repel, bad, s, cfg), NumericalError);
  cfg.n_ode_steps = 0;
  CHECK_THROWS_AS(ode_loglik(repel, Vector::Ones(2), s, cfg), DomainError);
}
