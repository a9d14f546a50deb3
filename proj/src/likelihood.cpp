#include "ensdiff/likelihood.hpp"

#include "ensdiff/forest_vp.hpp"

#include <cmath>
#include <numbers>

namespace ensdiff {

void LikelihoodConfig::validate() const {
  require(n_ode_steps >= 1, "likelihood: n_ode_steps must be >= 1");
  require(h > 0.0, "likelihood: finite-difference step must be positive");
  require(n_probes >= 1, "likelihood: need at least one probe");
  require(t_min > 0.0 && t_min < 1.0, "likelihood: t_min must lie in (0, 1)");
}

double divergence_exact(const ScorePredictor& score, const VectorRef& x, double t, double h) {
  require(h > 0.0, "divergence_exact: h must be positive");
  double total = 0.0;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = score.evaluate(probe, t)[i];
    probe[i] = x[i] - h;
    const double down = score.evaluate(probe, t)[i];
    probe[i] = x[i];
    total += (up - down) / (2.0 * h);
  }
  if (!std::isfinite(total)) throw NumericalError("divergence: non-finite score evaluation");
  return total;
}

double divergence_hutchinson(const ScorePredictor& score, const VectorRef& x, double t, double h,
                             const Matrix& probes) {
  require(probes.rows() == x.size() && probes.cols() >= 1, "divergence_hutchinson: probe shape mismatch");
  double total = 0.0;
  for (Eigen::Index m = 0; m < probes.cols(); ++m) {
    const Vector v = probes.col(m);
    const Vector jv = (score.evaluate(x + h * v, t) - score.evaluate(x - h * v, t)) / (2.0 * h);
    total += v.dot(jv);
  }
  total /= static_cast<double>(probes.cols());
  if (!std::isfinite(total)) throw NumericalError("divergence: non-finite score evaluation");
  return total;
}

Matrix draw_probes(Eigen::Index d, int M, Probe kind, Stream& stream) {
  Matrix probes(d, M);
  for (Eigen::Index i = 0; i < d; ++i)
    for (int m = 0; m < M; ++m)
      probes(i, m) = kind == Probe::Gaussian ? stream.normal() : (stream.uniform() < 0.5 ? -1.0 : 1.0);
  return probes;
}

double divergence(const ScorePredictor& score, const VectorRef& x, double t, const LikelihoodConfig& config,
                  Stream& stream) {
  if (config.divergence == DivergenceKind::ExactFiniteDifference) return divergence_exact(score, x, t, config.h);
  return divergence_hutchinson(score, x, t, config.h, draw_probes(x.size(), config.n_probes, config.probe, stream));
}

double gaussian_log_density(const VectorRef& x, const VectorRef& variance) {
  require(x.size() == variance.size(), "gaussian_log_density: dimension mismatch");
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + variance.array().log().sum() +
                 (x.array().square() / variance.array()).sum());
}

LikelihoodResult ode_loglik(const ScorePredictor& score, const VectorRef& x0, const NoiseSchedule& schedule,
                            const LikelihoodConfig& config, Stream stream) {
  config.validate();
  require(x0.size() == score.dim(), "ode_loglik: dimension mismatch");
  if (!x0.allFinite()) throw NumericalError("ode_loglik: non-finite starting point");

  LikelihoodResult result;
  if (dynamic_cast<const ForestVpModel*>(&score) != nullptr)
    result.warnings.emplace_back(
        "tree-based scores are piecewise constant; their divergence vanishes almost everywhere and the "
        "likelihood reduces to the linear-drift term");

  const Eigen::Index d = x0.size();
  const bool hutchinson = config.divergence == DivergenceKind::Hutchinson;
  const Matrix probes = hutchinson ? draw_probes(d, config.n_probes, config.probe, stream) : Matrix();

  // Drift of the forward-time flow and its divergence.
  auto rhs = [&](const Vector& x, double t, double& div) -> Vector {
    const double beta = schedule.beta(t);
    const Vector s = score.evaluate(x, t);
    const double div_s = hutchinson ? divergence_hutchinson(score, x, t, config.h, probes)
                                    : divergence_exact(score, x, t, config.h);
    div = -0.5 * beta * (static_cast<double>(d) + div_s);
    return -0.5 * beta * (x + s);
  };

  Vector x = x0;
  double integral = 0.0;
  const double dt = (1.0 - config.t_min) / config.n_ode_steps;
  for (int n = 0; n < config.n_ode_steps; ++n) {
    const double t = config.t_min + n * dt;
    // The last node is pinned to 1 so rounding never leaves the schedule's domain.
    const double t_next = n + 1 == config.n_ode_steps ? 1.0 : config.t_min + (n + 1) * dt;
    const double h = t_next - t;
    double d1, d2, d3, d4;
    const Vector k1 = rhs(x, t, d1);
    const Vector k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h, d2);
    const Vector k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h, d3);
    const Vector k4 = rhs(x + h * k3, t_next, d4);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    integral += h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    if (!x.allFinite() || x.norm() > config.blowup_norm)
      throw NumericalError("ode_loglik: trajectory blew up at t = " + std::to_string(t_next));
  }
  result.terminal = x;
  result.prior_log_density = gaussian_log_density(x, Vector::Ones(d));
  result.divergence_integral = integral;
  result.log_density = result.prior_log_density + integral;
  return result;
}

}  // namespace ensdiff
