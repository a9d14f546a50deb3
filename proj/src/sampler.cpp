#include "ensdiff/sampler.hpp"

#include "ensdiff/parallel.hpp"

#include <cmath>

namespace ensdiff {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::StepWise: return "stepwise";
    case Scheme::MixtureOfExperts: return "mixture";
    case Scheme::Alternating: return "alternating";
    case Scheme::AverageOfNoises: return "average_of_noises";
    case Scheme::MeanOfPredictions: return "mean_of_predictions";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (auto s : {Scheme::StepWise, Scheme::MixtureOfExperts, Scheme::Alternating, Scheme::AverageOfNoises,
                 Scheme::MeanOfPredictions})
    if (to_string(s) == name) return s;
  throw DomainError("unknown sampling scheme '" + std::string(name) + "'");
}

void SamplerConfig::validate(std::size_t ensemble_size) const {
  require(ensemble_size >= 1, "sampler: empty ensemble");
  require(batch >= 0, "sampler: negative batch size");
  if (early_switch) {
    require(scheme == Scheme::StepWise, "sampler: early_switch requires the stepwise scheme");
    require(*early_switch > grid.t_min() && *early_switch < 1.0, "sampler: early_switch must lie in (t_min, 1)");
    require(designated < ensemble_size, "sampler: designated member out of range");
  }
}

double default_early_switch(const TimeGrid& grid) {
  const int n = grid.n_steps();
  require(n >= 3, "default_early_switch: grid too coarse");
  // Steps leave nodes n-1 .. 0; the aggregated steps are the first
  // ceil(n / 3), i.e. nodes >= n - ceil(n / 3).
  const int first_single = n - (n + 2) / 3 - 1;
  return 0.5 * (grid[first_single] + grid[first_single + 1]);
}

Vector reverse_em_step(const NoiseSchedule& schedule, const VectorRef& x, double t, double dt, const VectorRef& score,
                       const VectorRef& z) {
  require(dt > 0.0 && t - dt >= -1e-12, "reverse_em_step: need dt > 0 and t - dt >= 0");
  require(x.size() == score.size() && x.size() == z.size(), "reverse_em_step: dimension mismatch");
  if (!x.allFinite() || !score.allFinite() || !z.allFinite())
    throw NumericalError("reverse_em_step: non-finite input");
  const double beta = schedule.beta(t);
  return x + (0.5 * beta * x + beta * score) * dt + std::sqrt(beta * dt) * z;
}

Vector probability_flow_step(const NoiseSchedule& schedule, const VectorRef& x, double t, double dt,
                             const VectorRef& score) {
  require(dt > 0.0 && t - dt >= -1e-12, "probability_flow_step: need dt > 0 and t - dt >= 0");
  require(x.size() == score.size(), "probability_flow_step: dimension mismatch");
  if (!x.allFinite() || !score.allFinite()) throw NumericalError("probability_flow_step: non-finite input");
  const double beta = schedule.beta(t);
  return x + 0.5 * beta * (x + score) * dt;
}

namespace {

// Stream layout under Stream(seed).child(sample):
//   child(0)                initial noise
//   child({1, step})        member-0 / shared step noise
//   child({1, step, k})     member-k step noise, k >= 1
//   child(2)                mixture-of-experts member draw
//   child({3, step})        alternating member draw
class SampleStreams {
 public:
  SampleStreams(const Stream& root, std::size_t sample, bool tie_members)
      : base_(root.child(sample)), tie_(tie_members) {}

  Vector initial(Eigen::Index d) const {
    Stream s = base_.child(0);
    return s.normal_vector(d);
  }
  Vector step_noise(std::size_t step, std::size_t member, Eigen::Index d) const {
    Stream s = (member == 0 || tie_) ? base_.child({1, step}) : base_.child({1, step, member});
    return s.normal_vector(d);
  }
  std::size_t mixture_member(std::size_t K) const {
    Stream s = base_.child(2);
    return s.index(K);
  }
  std::size_t alternating_member(std::size_t step, std::size_t K) const {
    Stream s = base_.child({3, step});
    return s.index(K);
  }

 private:
  Stream base_;
  bool tie_;
};

}  // namespace

SampleBatch sample(const ScoreEnsemble& ensemble, const SamplerConfig& config) {
  config.validate(ensemble.size());
  const Eigen::Index d = ensemble.dim();
  const std::size_t K = ensemble.size();
  const auto n = config.batch;
  const int N = config.grid.n_steps();
  const Stream root(config.seed);
  const NoiseSchedule& sched = config.schedule;

  SampleBatch out;
  out.samples.resize(n, d);
  for (int step = 0; step < N; ++step) out.times.push_back(config.grid[N - 1 - step]);
  if (config.record_scores) out.scores.assign(static_cast<std::size_t>(N), Matrix(n, d));
  if (config.record_states) out.states.assign(static_cast<std::size_t>(N + 1), Matrix(n, d));

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const SampleStreams streams(root, i, config.tie_member_noise);
    const Vector x_init = streams.initial(d);
    if (config.record_states) out.states[0].row(row) = x_init.transpose();

    auto record = [&](int step, const Vector& score, const Vector& x) {
      if (config.record_scores) out.scores[static_cast<std::size_t>(step)].row(row) = score.transpose();
      if (config.record_states) out.states[static_cast<std::size_t>(step + 1)].row(row) = x.transpose();
    };

    if (config.scheme == Scheme::MeanOfPredictions) {
      Vector terminal = Vector::Zero(d);
      std::vector<Vector> xs(K, x_init);
      for (int step = 0; step < N; ++step) {
        const int node = N - 1 - step;
        const double t = config.grid[node], dt = config.grid.step_from(node);
        Vector mean_score = Vector::Zero(d);
        Vector mean_x = Vector::Zero(d);
        for (std::size_t k = 0; k < K; ++k) {
          const Vector s = ensemble.member(k, xs[k], t);
          xs[k] = reverse_em_step(sched, xs[k], t, dt, s, streams.step_noise(static_cast<std::size_t>(step), k, d));
          mean_score += s;
          mean_x += xs[k];
        }
        record(step, mean_score / static_cast<double>(K), mean_x / static_cast<double>(K));
      }
      for (const auto& x : xs) terminal += x;
      out.samples.row(row) = (terminal / static_cast<double>(K)).transpose();
      return;
    }

    const std::size_t moe_member = config.scheme == Scheme::MixtureOfExperts ? streams.mixture_member(K) : 0;
    Vector x = x_init;
    for (int step = 0; step < N; ++step) {
      const int node = N - 1 - step;
      const double t = config.grid[node], dt = config.grid.step_from(node);
      const auto step_u = static_cast<std::size_t>(step);
      Vector score;
      switch (config.scheme) {
        case Scheme::StepWise:
          if (config.early_switch && t < *config.early_switch)
            score = ensemble.member(config.designated, x, t);
          else
            score = aggregate(ensemble.members(x, t), config.rule);
          x = reverse_em_step(sched, x, t, dt, score, streams.step_noise(step_u, 0, d));
          break;
        case Scheme::MixtureOfExperts:
          score = ensemble.member(moe_member, x, t);
          x = reverse_em_step(sched, x, t, dt, score, streams.step_noise(step_u, 0, d));
          break;
        case Scheme::Alternating:
          score = ensemble.member(streams.alternating_member(step_u, K), x, t);
          x = reverse_em_step(sched, x, t, dt, score, streams.step_noise(step_u, 0, d));
          break;
        case Scheme::AverageOfNoises: {
          const Matrix scores = ensemble.members(x, t);
          Vector next = Vector::Zero(d);
          for (std::size_t k = 0; k < K; ++k)
            next += reverse_em_step(sched, x, t, dt, scores.row(static_cast<Eigen::Index>(k)).transpose(),
                                    streams.step_noise(step_u, k, d));
          x = next / static_cast<double>(K);
          score = scores.colwise().mean().transpose();
          break;
        }
        case Scheme::MeanOfPredictions:
          break;
      }
      record(step, score, x);
    }
    out.samples.row(row) = x.transpose();
  });
  return out;
}

Matrix integrate_probability_flow(const ScoreEnsemble& ensemble, AggregationRule rule, const Matrix& initial,
                                  const TimeGrid& grid, const NoiseSchedule& schedule) {
  require(initial.cols() == ensemble.dim(), "integrate_probability_flow: dimension mismatch");
  Matrix out(initial.rows(), initial.cols());
  const int N = grid.n_steps();
  parallel_for(static_cast<std::size_t>(initial.rows()), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    Vector x = initial.row(row).transpose();
    for (int node = N - 1; node >= 0; --node) {
      const double t = grid[node];
      x = probability_flow_step(schedule, x, t, grid.step_from(node), aggregate(ensemble.members(x, t), rule));
    }
    out.row(row) = x.transpose();
  });
  return out;
}

std::vector<double> score_std_profile(const SampleBatch& batch) {
  if (batch.scores.empty() || batch.samples.rows() == 0)
    throw DomainError("score_std_profile: no recorded scores (empty batch or recording disabled)");
  std::vector<double> out;
  out.reserve(batch.scores.size());
  for (const auto& s : batch.scores) {
    const Matrix centered = s.rowwise() - s.colwise().mean();
    out.push_back(std::sqrt(centered.array().square().mean()));
  }
  return out;
}

std::vector<double> score_mean_norm_profile(const SampleBatch& batch) {
  if (batch.scores.empty() || batch.samples.rows() == 0)
    throw DomainError("score_mean_norm_profile: no recorded scores");
  std::vector<double> out;
  for (const auto& s : batch.scores) out.push_back(s.rowwise().norm().mean());
  return out;
}

}  // namespace ensdiff
