#pragma once

#include "ensdiff/diffusion.hpp"
#include "ensdiff/rng.hpp"
#include "ensdiff/score.hpp"

#include <string>
#include <vector>

namespace ensdiff {

enum class DivergenceKind { ExactFiniteDifference, Hutchinson };
enum class Probe { Rademacher, Gaussian };

struct LikelihoodConfig {
  int n_ode_steps = 1000;
  DivergenceKind divergence = DivergenceKind::ExactFiniteDifference;
  double h = 1e-4;  // finite-difference step
  int n_probes = 1;  // Hutchinson M
  Probe probe = Probe::Rademacher;
  double t_min = 1e-3;
  double blowup_norm = 1e6;

  void validate() const;
};

// Central-difference Jacobian trace of `score` at (x, t):
//   sum_i [s_i(x + h e_i) - s_i(x - h e_i)] / 2h.
double divergence_exact(const ScorePredictor& score, const VectorRef& x, double t, double h);

// Hutchinson estimate (1/M) sum_m v_m^T J v_m with central-difference
// Jacobian-vector products along the given probes (columns of `probes`).
double divergence_hutchinson(const ScorePredictor& score, const VectorRef& x, double t, double h,
                             const Matrix& probes);

Matrix draw_probes(Eigen::Index d, int M, Probe kind, Stream& stream);

// Dispatches on config.divergence; `stream` supplies Hutchinson probes.
double divergence(const ScorePredictor& score, const VectorRef& x, double t, const LikelihoodConfig& config,
                  Stream& stream);

struct LikelihoodResult {
  double log_density = 0.0;          // nats
  double prior_log_density = 0.0;    // log N(x(1); 0, I)
  double divergence_integral = 0.0;  // integral over [t_min, 1] of div of the flow drift
  Vector terminal;                   // x(1)
  std::vector<std::string> warnings;
};

// log p(x0) under the probability-flow ODE dx/dt = -beta/2 (x + s(x, t)),
// integrated with fixed-step RK4 from t_min to 1:
//   log p(x0) = log N(x(1); 0, I) + int div(drift) dt.
// Hutchinson probes are drawn once per call and held fixed along the path.
LikelihoodResult ode_loglik(const ScorePredictor& score, const VectorRef& x0, const NoiseSchedule& schedule,
                            const LikelihoodConfig& config, Stream stream = Stream(0));

// Closed-form log N(x; 0, diag(variance)).
double gaussian_log_density(const VectorRef& x, const VectorRef& variance);

}  // namespace ensdiff
