#pragma once

#include "ensdiff/types.hpp"

#include <cmath>
#include <vector>

namespace ensdiff {

// Linear VP schedule on [0, 1]: beta(t) = beta_min + t (beta_max - beta_min).
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  NoiseSchedule() = default;
  NoiseSchedule(double beta_min_, double beta_max_);

  double beta(double t) const;
  // Integral of beta over [0, t].
  double integrated_beta(double t) const;
};

// Squared mean-decay coefficient of the VP forward marginal:
//   x_t | x_0 ~ N(sqrt(gamma) x_0, (1 - gamma) I).
double gamma(const NoiseSchedule& schedule, double t);

// Marginal standard deviation sqrt(1 - gamma(t)).
double marginal_std(const NoiseSchedule& schedule, double t);

// Ordered sampling/training times t_min = nodes[0] < ... < nodes[n-1] = t_max.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(int n_steps, double t_min = 1e-3, double t_max = 1.0);
  explicit TimeGrid(std::vector<double> nodes);

  int n_steps() const { return static_cast<int>(nodes_.size()); }
  double t_min() const { return nodes_.front(); }
  double t_max() const { return nodes_.back(); }
  const std::vector<double>& nodes() const { return nodes_; }
  double operator[](int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  // Index of the node closest to t; times below t_min clamp to 0, ties go to
  // the lower node.
  int nearest(double t) const;

  // Step size used by the reverse sampler when leaving node i: the gap to
  // node i-1, and t_min itself for the final step into t = 0.
  double step_from(int i) const;

 private:
  std::vector<double> nodes_;
};

// Draw from q_{t|0}(. | x0) given a standard normal z (rows are samples when
// x0 and z are matrices).
template <typename Derived, typename DerivedZ>
auto forward_sample(const NoiseSchedule& schedule, const Eigen::MatrixBase<Derived>& x0,
                    double t, const Eigen::MatrixBase<DerivedZ>& z) {
  require(x0.rows() == z.rows() && x0.cols() == z.cols(), "forward_sample: shape mismatch");
  require(t > 0.0 && t <= 1.0, "forward_sample: t must lie in (0, 1]");
  const double g = gamma(schedule, t);
  using Plain = typename Derived::PlainObject;
  return Plain(std::sqrt(g) * x0 + std::sqrt(1.0 - g) * z);
}

// grad_{x_t} log q_{t|0}(x_t | x0) = -(x_t - sqrt(gamma) x0) / (1 - gamma).
template <typename Derived, typename Derived0>
auto conditional_score(const NoiseSchedule& schedule, const Eigen::MatrixBase<Derived>& xt,
                       const Eigen::MatrixBase<Derived0>& x0, double t) {
  require(xt.rows() == x0.rows() && xt.cols() == x0.cols(), "conditional_score: shape mismatch");
  require(t <= 1.0, "conditional_score: t must not exceed 1");
  if (t <= 0.0) throw DomainError("conditional_score: variance vanishes at t = 0");
  const double g = gamma(schedule, t);
  using Plain = typename Derived::PlainObject;
  return Plain(-(xt - std::sqrt(g) * x0) / (1.0 - g));
}

// Per-coordinate variance of the diffused N(0, diag(sigma0)).
template <typename Derived>
auto marginal_gaussian_covariance(const Eigen::MatrixBase<Derived>& sigma0, double g) {
  require((sigma0.array() > 0).all(), "marginal_gaussian_covariance: variances must be positive");
  using Plain = typename Derived::PlainObject;
  return Plain((g * sigma0.array() + (1.0 - g)).matrix());
}

template <typename Derived>
auto marginal_gaussian_covariance(const NoiseSchedule& schedule,
                                  const Eigen::MatrixBase<Derived>& sigma0, double t) {
  return marginal_gaussian_covariance(sigma0, gamma(schedule, t));
}

}  // namespace ensdiff
