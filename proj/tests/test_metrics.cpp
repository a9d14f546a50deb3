#include "helpers.hpp"

#include "ensdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ensdiff;

namespace {

double brute_force_w1(const Matrix& A, const Matrix& B) {
  std::vector<int> perm(static_cast<std::size_t>(A.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) total += (A.row(i) - B.row(perm[static_cast<std::size_t>(i)])).norm();
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(A.rows());
}

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("DDSM: the conditional-score oracle has zero loss") {
  const NoiseSchedule s;
  Stream rng(1);
  const Matrix data = rng.normal_matrix(40, 3);
  const auto batch = draw_ddsm_batch(data, s, 500, Stream(2));
  Matrix oracle(batch.size(), 3);
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    oracle.row(i) = conditional_score(s, Vector(batch.xt.row(i).transpose()), Vector(batch.x0.row(i).transpose()),
                                      batch.t[static_cast<std::size_t>(i)])
                        .transpose();
  CHECK(ddsm_terms(oracle, batch).maxCoeff() < 1e-20);
  CHECK(ddsm_terms(oracle, batch, Weighting::Unit).maxCoeff() < 1e-12);
}

TEST_CASE("DDSM: zero predictor gives E||z||^2 = d") {
  const NoiseSchedule s;
  Stream rng(3);
  const Matrix data = rng.normal_matrix(30, 4);
  const testing::ConstantScore zero(Vector::Zero(4));
  const auto est = ddsm_loss(zero, data, s, 20000, Stream(4));
  CHECK(std::abs(est.value - 4.0) < 5.0 * est.std_error);
  // Same stream, same batch.
  CHECK(ddsm_loss(zero, data, s, 20000, Stream(4)).value == est.value);
}

TEST_CASE("DDSM batch bookkeeping") {
  const NoiseSchedule s;
  const Matrix data = Matrix::Identity(3, 3);
  const auto b = draw_ddsm_batch(data, s, 50, Stream(5));
  for (Eigen::Index i = 0; i < 50; ++i) {
    const double t = b.t[static_cast<std::size_t>(i)];
    CHECK(t >= 1e-3);
    CHECK(t <= 1.0);
    CHECK(b.sigma[static_cast<std::size_t>(i)] == marginal_std(s, t));
    CHECK((b.x0.row(i).array() == 0.0).count() == 2);
  }
  CHECK_THROWS_AS(draw_ddsm_batch(data, s, 0, Stream(0)), DomainError);
  CHECK(parse_weighting(to_string(Weighting::Unit)) == Weighting::Unit);
  CHECK_THROWS_AS(parse_weighting("none"), DomainError);
}

TEST_CASE("W1 examples") {
  Stream rng(6);
  const Matrix A = rng.normal_matrix(20, 3);
  CHECK(wasserstein1_exact(A, A) == 0.0);
  const Matrix a1 = (Matrix(1, 2) << 0.0, 0.0).finished(), b1 = (Matrix(1, 2) << 3.0, 4.0).finished();
  CHECK(wasserstein1_exact(a1, b1) == 5.0);
  // Reordering the rows of B does not change the optimal coupling.
  Matrix B = A.colwise().reverse();
  CHECK(wasserstein1_exact(A, B) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(wasserstein1_exact(A, A.topRows(10)), DomainError);
  CHECK_THROWS_AS(wasserstein1_exact(Matrix(0, 2), Matrix(0, 2)), DomainError);
}

TEST_CASE("W1 equals the brute-force minimum over permutations") {
  Stream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix A = rng.normal_matrix(6, 2), B = rng.normal_matrix(6, 2) + Matrix::Constant(6, 2, 0.5);
    CHECK(std::abs(wasserstein1_exact(A, B) - brute_force_w1(A, B)) < 1e-10);
  }
}

TEST_CASE("solve_assignment returns a permutation") {
  Stream rng(8);
  const Matrix cost = rng.normal_matrix(30, 30).cwiseAbs();
  auto a = solve_assignment(cost);
  std::sort(a.begin(), a.end());
  for (Eigen::Index i = 0; i < 30; ++i) CHECK(a[static_cast<std::size_t>(i)] == i);
  CHECK_THROWS_AS(solve_assignment(Matrix::Zero(2, 3)), DomainError);
}

TEST_CASE("W1 symmetry and triangle inequality") {
  Stream rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix A = rng.normal_matrix(15, 3), B = rng.normal_matrix(15, 3) * 2.0,
                 C = rng.normal_matrix(15, 3) + Matrix::Ones(15, 3);
    CHECK(std::abs(wasserstein1_exact(A, B) - wasserstein1_exact(B, A)) < 1e-9);
    CHECK(wasserstein1_exact(A, C) <= wasserstein1_exact(A, B) + wasserstein1_exact(B, C) + 1e-9);
  }
}

TEST_CASE("coverage examples") {
  Stream rng(10);
  const Matrix real = rng.normal_matrix(30, 2);
  CHECK(coverage(real, real) == 1.0);
  CHECK(coverage(real, Matrix::Constant(1, 2, 100.0)) == 0.0);
  // Radii 1, 1, 1; distances to the fake point 0.1, 0.9, 1.9.
  CHECK(coverage(column({0.0, 1.0, 2.0}), column({0.1}), 1) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(coverage(column({0.0, 1.0}), column({0.1}), 2), DomainError);
  CHECK_THROWS_AS(coverage(real, Matrix(0, 2)), DomainError);
}

TEST_CASE("coverage is nondecreasing in k") {
  Stream rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix real = rng.normal_matrix(40, 2), fake = rng.normal_matrix(25, 2) * 1.5;
    double prev = 0.0;
    for (int k = 1; k < 40; ++k) {
      const double c = coverage(real, fake, k);
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("predictive diversity examples") {
  const auto c = std::make_shared<testing::ConstantScore>((Vector(2) << 0.7, -0.3).finished());
  const Matrix pts = Matrix::Zero(3, 2);
  const std::vector<double> times{0.1, 0.5, 0.9};
  CHECK(predictive_diversity(PredictorEnsemble({c, c, c}), pts, times) == 0.0);

  const double v = 1.7;
  const PredictorEnsemble pm({std::make_shared<testing::ConstantScore>(Vector::Constant(2, v)),
                              std::make_shared<testing::ConstantScore>(Vector::Constant(2, -v))});
  CHECK(predictive_diversity(pm, pts, times) == doctest::Approx(v * v).epsilon(1e-14));
  CHECK_THROWS_AS(predictive_diversity(PredictorEnsemble({c}), pts, times), DomainError);
}

TEST_CASE("predictive diversity grows with epsilon") {
  const auto base = std::make_shared<AnalyticGaussianScore>(Vector::Ones(2));
  Stream rng(12);
  const Matrix pts = rng.normal_matrix(200, 2);
  std::vector<double> times(200);
  for (auto& t : times) t = 0.01 + 0.99 * rng.uniform();
  double prev = -1.0;
  for (double eps : {0.0, 0.1, 0.2, 0.4, 0.8}) {
    const double div = predictive_diversity(PredictorEnsemble(make_id_ensemble(base, 8, eps, 3)), pts, times);
    CHECK(div > prev);
    prev = div;
  }
}

TEST_CASE("MetricReport JSON and CSV") {
  MetricReport r;
  r.ddsm_loss = 1.25;
  r.ddsm_stderr = 0.01;
  r.coverage = 0.8;
  r.n_eval = 30;
  r.seeds = {1, 2};
  r.rule = "dominant";
  r.K = 100;
  const auto back = nlohmann::json::parse(nlohmann::json(r).dump()).get<MetricReport>();
  CHECK(back.ddsm_loss == r.ddsm_loss);
  CHECK_FALSE(back.wasserstein1.has_value());
  CHECK(back.seeds == r.seeds);
  CHECK(back.rule == "dominant");
  CHECK(back.K == 100);
  CHECK(MetricReport::csv_columns().size() == r.csv_row().size());
  CHECK(r.csv_row()[3] == "1;2");

  auto j = nlohmann::json(r);
  j["coverage"] = 1.5;
  CHECK_THROWS_AS(j.get<MetricReport>(), DomainError);
  j["coverage"] = 0.5;
  j["format_version"] = 2;
  CHECK_THROWS_AS(j.get<MetricReport>(), DomainError);
  r.wasserstein1 = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(r.validate(), NumericalError);
}
