#include "ensdiff/diffusion.hpp"

#include <algorithm>
#include <string>

namespace ensdiff {

NoiseSchedule::NoiseSchedule(double beta_min_, double beta_max_)
    : beta_min(beta_min_), beta_max(beta_max_) {
  require(beta_min > 0.0 && beta_min <= beta_max,
          "NoiseSchedule: need 0 < beta_min <= beta_max");
}

double NoiseSchedule::beta(double t) const { return beta_min + t * (beta_max - beta_min); }

double NoiseSchedule::integrated_beta(double t) const {
  return beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
}

double gamma(const NoiseSchedule& schedule, double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError("gamma: t = " + std::to_string(t) + " outside [0, 1]");
  return std::exp(-schedule.integrated_beta(t));
}

double marginal_std(const NoiseSchedule& schedule, double t) {
  return std::sqrt(1.0 - gamma(schedule, t));
}

TimeGrid::TimeGrid(int n_steps, double t_min, double t_max) {
  require(n_steps >= 1, "TimeGrid: n_steps must be >= 1");
  require(t_min > 0.0 && t_min <= t_max && t_max <= 1.0, "TimeGrid: need 0 < t_min <= t_max <= 1");
  nodes_.resize(static_cast<std::size_t>(n_steps));
  if (n_steps == 1) {
    // A one-level grid trains and samples at t_max only.
    nodes_[0] = t_max;
    return;
  }
  const double h = (t_max - t_min) / (n_steps - 1);
  for (int i = 0; i < n_steps; ++i) nodes_[static_cast<std::size_t>(i)] = t_min + i * h;
  nodes_.back() = t_max;
}

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  require(!nodes_.empty(), "TimeGrid: no nodes");
  require(nodes_.front() > 0.0 && nodes_.back() <= 1.0, "TimeGrid: nodes must lie in (0, 1]");
  for (std::size_t i = 1; i < nodes_.size(); ++i)
    require(nodes_[i] > nodes_[i - 1], "TimeGrid: nodes must be strictly increasing");
}

int TimeGrid::nearest(double t) const {
  if (t <= nodes_.front()) return 0;
  if (t >= nodes_.back()) return n_steps() - 1;
  const auto hi = std::lower_bound(nodes_.begin(), nodes_.end(), t);
  const auto lo = hi - 1;
  const auto i = static_cast<int>(hi - nodes_.begin());
  return (*hi - t) < (t - *lo) ? i : i - 1;
}

double TimeGrid::step_from(int i) const {
  return i == 0 ? nodes_.front() : nodes_[static_cast<std::size_t>(i)] - nodes_[static_cast<std::size_t>(i - 1)];
}

}  // namespace ensdiff
