#pragma once

#include "ensdiff/aggregate.hpp"
#include "ensdiff/diffusion.hpp"
#include "ensdiff/score.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ensdiff {

// How K predictors drive one reverse-time run.
enum class Scheme {
  StepWise,           // aggregate all K scores at every step with one rule
  MixtureOfExperts,   // one uniformly drawn member per sample for the whole run
  Alternating,        // a fresh uniformly drawn member per sample per step
  AverageOfNoises,    // average the K member updates, each with its own noise
  MeanOfPredictions,  // K full runs from the same initial noise, average the ends
};

std::string to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct SamplerConfig {
  TimeGrid grid{50};
  NoiseSchedule schedule;
  Scheme scheme = Scheme::StepWise;
  AggregationRule rule = AggregationRule::Arithmetic;
  // With StepWise only: aggregate while t >= early_switch, then continue with
  // the single member `designated`.
  std::optional<double> early_switch;
  std::size_t designated = 0;
  Eigen::Index batch = 100;
  std::uint64_t seed = 0;
  bool record_scores = false;
  bool record_states = false;
  // Forces every member of AverageOfNoises / MeanOfPredictions onto the
  // member-0 noise draws; used to check the averaging identities.
  bool tie_member_noise = false;

  void validate(std::size_t ensemble_size) const;
};

// Switch time leaving the last third of the grid's steps to a single model.
double default_early_switch(const TimeGrid& grid);

struct SampleBatch {
  Matrix samples;                  // batch x d, terminal states (scaled units)
  std::vector<double> times;       // time at which each step's score was taken
  std::vector<Matrix> scores;      // per step, batch x d applied scores (if recorded)
  std::vector<Matrix> states;      // n_steps + 1 entries, states[0] is the initial noise (if recorded)
};

// One Euler-Maruyama step of the reverse VP SDE from t to t - dt:
//   x + [beta(t)/2 x + beta(t) s] dt + sqrt(beta(t) dt) z.
Vector reverse_em_step(const NoiseSchedule& schedule, const VectorRef& x, double t, double dt, const VectorRef& score,
                       const VectorRef& z);

// One Euler step of the probability-flow ODE from t to t - dt:
//   x + [beta(t)/2 x + beta(t)/2 s] dt.
Vector probability_flow_step(const NoiseSchedule& schedule, const VectorRef& x, double t, double dt,
                             const VectorRef& score);

// Reverse-time generation over config.grid. Step n uses node N-1-n and moves
// to the next lower node; the last step goes from t_min to 0. Every random
// draw comes from Stream(seed).child(sample) so batches are reproducible and
// independent of threading.
SampleBatch sample(const ScoreEnsemble& ensemble, const SamplerConfig& config);

// Deterministic probability-flow transport of `initial` (rows) over the grid
// with the step-wise aggregate of the ensemble.
Matrix integrate_probability_flow(const ScoreEnsemble& ensemble, AggregationRule rule, const Matrix& initial,
                                  const TimeGrid& grid, const NoiseSchedule& schedule);

// Per step, the spread of the recorded scores across the batch: the root of
// the per-coordinate batch variance averaged over coordinates.
std::vector<double> score_std_profile(const SampleBatch& batch);

// Per step, the mean Euclidean norm of the recorded scores.
std::vector<double> score_mean_norm_profile(const SampleBatch& batch);

}  // namespace ensdiff
