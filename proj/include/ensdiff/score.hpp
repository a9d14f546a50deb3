#pragma once

#include "ensdiff/aggregate.hpp"
#include "ensdiff/diffusion.hpp"
#include "ensdiff/rng.hpp"
#include "ensdiff/types.hpp"

#include <memory>
#include <vector>

namespace ensdiff {

// Anything mapping (x, t) to an estimate of grad_x log q_t(x). Implementations
// are immutable after construction and must be deterministic in (x, t).
class ScorePredictor {
 public:
  virtual ~ScorePredictor() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Vector evaluate(const VectorRef& x, double t) const = 0;

  // Rows of X are points; the default evaluates row by row.
  virtual Matrix evaluate_batch(const MatrixRef& X, double t) const;
};

using PredictorPtr = std::shared_ptr<const ScorePredictor>;

// K exchangeable score predictors viewed together. Step-wise aggregation reads
// all K outputs at once; trajectory-level schemes address single members.
class ScoreEnsemble {
 public:
  virtual ~ScoreEnsemble() = default;

  virtual std::size_t size() const = 0;
  virtual Eigen::Index dim() const = 0;

  // K x d matrix, row k is member k's score at (x, t).
  virtual Matrix members(const VectorRef& x, double t) const;
  virtual Vector member(std::size_t k, const VectorRef& x, double t) const = 0;
};

// Ensemble backed by a list of independent predictors.
class PredictorEnsemble final : public ScoreEnsemble {
 public:
  explicit PredictorEnsemble(std::vector<PredictorPtr> predictors);

  std::size_t size() const override { return predictors_.size(); }
  Eigen::Index dim() const override { return predictors_.front()->dim(); }
  Vector member(std::size_t k, const VectorRef& x, double t) const override;

  const PredictorPtr& operator[](std::size_t k) const { return predictors_[k]; }

 private:
  std::vector<PredictorPtr> predictors_;
};

// The step-wise aggregate of an ensemble seen as a single predictor. Holds a
// reference: the ensemble must outlive it.
class AggregatedScore final : public ScorePredictor {
 public:
  AggregatedScore(const ScoreEnsemble& ensemble, AggregationRule rule) : ensemble_(ensemble), rule_(rule) {}

  Eigen::Index dim() const override { return ensemble_.dim(); }
  Vector evaluate(const VectorRef& x, double t) const override { return aggregate(ensemble_.members(x, t), rule_); }

 private:
  const ScoreEnsemble& ensemble_;
  AggregationRule rule_;
};

// Exact score of the diffused centered Gaussian N(0, diag(alpha)):
//   s_i(x, t) = -x_i / (gamma(t) alpha_i + 1 - gamma(t)).
class AnalyticGaussianScore final : public ScorePredictor {
 public:
  AnalyticGaussianScore(Vector alpha, NoiseSchedule schedule = {});

  Eigen::Index dim() const override { return alpha_.size(); }
  Vector evaluate(const VectorRef& x, double t) const override;

  const Vector& alpha() const { return alpha_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  // Marginal variance per coordinate at time t.
  Vector variance(double t) const;

 private:
  Vector alpha_;
  NoiseSchedule schedule_;
};

template <typename Derived>
auto analytic_score(const Eigen::MatrixBase<Derived>& alpha, const VectorRef& x, double g) {
  require(alpha.size() == x.size(), "analytic_score: dimension mismatch");
  return Vector((-x.array() / (g * alpha.array() + (1.0 - g))).matrix());
}

// base(x, t) + epsilon * field(x, t), where each output coordinate of the
// field is a sum of random cosine features of (x, t):
//   field_j = sqrt(2 / F) sum_m cos(w_jm . (x, t) + b_jm),
// w_jm ~ N(0, I / lengthscale^2), b_jm ~ U(0, 2 pi). Over draws of the field
// the value at any fixed (x, t) has mean 0 and standard deviation 1, so the
// perturbation has pointwise standard deviation epsilon.
class PerturbedScore final : public ScorePredictor {
 public:
  PerturbedScore(PredictorPtr base, double epsilon, std::uint64_t field_seed,
                 int n_features = 64, double lengthscale = 1.0);

  Eigen::Index dim() const override { return base_->dim(); }
  Vector evaluate(const VectorRef& x, double t) const override;

  Vector field(const VectorRef& x, double t) const;
  double epsilon() const { return epsilon_; }

 private:
  PredictorPtr base_;
  double epsilon_;
  int n_features_;
  // One (F x (d+1)) frequency block and F phases per output coordinate.
  std::vector<Matrix> frequencies_;
  std::vector<Vector> phases_;
};

// K perturbed copies of `base` whose fields use sub-seeds 0..K-1 of
// master_seed; ensembles built from the same master seed are nested.
std::vector<PredictorPtr> make_id_ensemble(const PredictorPtr& base, int K, double epsilon,
                                           std::uint64_t master_seed, int n_features = 64,
                                           double lengthscale = 1.0);

// s + tau ||s|| u with u uniform on the unit sphere.
Vector sphere_noise_wrap(const VectorRef& s, double tau, Stream& stream);

// Base predictor with sphere noise of relative size tau on every call. The
// direction is drawn from a stream keyed by (seed, t, x), so each distinct
// evaluation point gets fresh noise while repeated calls stay reproducible.
class SphereNoisyScore final : public ScorePredictor {
 public:
  SphereNoisyScore(PredictorPtr base, double tau, std::uint64_t seed);

  Eigen::Index dim() const override { return base_->dim(); }
  Vector evaluate(const VectorRef& x, double t) const override;

  double tau() const { return tau_; }

 private:
  PredictorPtr base_;
  double tau_;
  Stream root_;
};

}  // namespace ensdiff
