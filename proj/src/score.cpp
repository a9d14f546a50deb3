#include "ensdiff/score.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace ensdiff {

Matrix ScorePredictor::evaluate_batch(const MatrixRef& X, double t) const {
  require(X.cols() == dim(), "evaluate_batch: dimension mismatch");
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = evaluate(X.row(i).transpose(), t).transpose();
  return out;
}

Matrix ScoreEnsemble::members(const VectorRef& x, double t) const {
  Matrix out(static_cast<Eigen::Index>(size()), dim());
  for (std::size_t k = 0; k < size(); ++k) out.row(static_cast<Eigen::Index>(k)) = member(k, x, t).transpose();
  return out;
}

PredictorEnsemble::PredictorEnsemble(std::vector<PredictorPtr> predictors)
    : predictors_(std::move(predictors)) {
  require(!predictors_.empty(), "PredictorEnsemble: empty ensemble");
  for (const auto& p : predictors_) {
    require(p != nullptr, "PredictorEnsemble: null predictor");
    require(p->dim() == predictors_.front()->dim(), "PredictorEnsemble: members disagree on dimension");
  }
}

Vector PredictorEnsemble::member(std::size_t k, const VectorRef& x, double t) const {
  return predictors_.at(k)->evaluate(x, t);
}

AnalyticGaussianScore::AnalyticGaussianScore(Vector alpha, NoiseSchedule schedule)
    : alpha_(std::move(alpha)), schedule_(schedule) {
  require(alpha_.size() >= 1, "AnalyticGaussianScore: empty alpha");
  require((alpha_.array() > 0).all(), "AnalyticGaussianScore: alpha must be positive");
}

Vector AnalyticGaussianScore::evaluate(const VectorRef& x, double t) const {
  return analytic_score(alpha_, x, gamma(schedule_, t));
}

Vector AnalyticGaussianScore::variance(double t) const {
  return marginal_gaussian_covariance(schedule_, alpha_, t);
}

PerturbedScore::PerturbedScore(PredictorPtr base, double epsilon, std::uint64_t field_seed,
                               int n_features, double lengthscale)
    : base_(std::move(base)), epsilon_(epsilon), n_features_(n_features) {
  require(base_ != nullptr, "PerturbedScore: null base");
  require(epsilon >= 0.0, "PerturbedScore: epsilon must be >= 0");
  require(n_features >= 1 && lengthscale > 0.0, "PerturbedScore: bad feature configuration");
  Stream root(field_seed);
  const Eigen::Index d = base_->dim();
  for (Eigen::Index j = 0; j < d; ++j) {
    Stream s = root.child(static_cast<std::uint64_t>(j));
    frequencies_.push_back(s.normal_matrix(n_features, d + 1) / lengthscale);
    Vector b(n_features);
    for (int m = 0; m < n_features; ++m) b[m] = 2.0 * std::numbers::pi * s.uniform();
    phases_.push_back(std::move(b));
  }
}

Vector PerturbedScore::field(const VectorRef& x, double t) const {
  require(x.size() == dim(), "PerturbedScore: dimension mismatch");
  Vector input(x.size() + 1);
  input << x, t;
  const double amp = std::sqrt(2.0 / n_features_);
  Vector out(dim());
  for (Eigen::Index j = 0; j < dim(); ++j) {
    const auto j_ = static_cast<std::size_t>(j);
    out[j] = amp * (frequencies_[j_] * input + phases_[j_]).array().cos().sum();
  }
  return out;
}

Vector PerturbedScore::evaluate(const VectorRef& x, double t) const {
  Vector s = base_->evaluate(x, t);
  if (epsilon_ == 0.0) return s;
  return s + epsilon_ * field(x, t);
}

std::vector<PredictorPtr> make_id_ensemble(const PredictorPtr& base, int K, double epsilon,
                                           std::uint64_t master_seed, int n_features,
                                           double lengthscale) {
  require(K >= 1, "make_id_ensemble: K must be >= 1");
  Stream root(master_seed);
  std::vector<PredictorPtr> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k)
    out.push_back(std::make_shared<PerturbedScore>(base, epsilon, root.child(static_cast<std::uint64_t>(k)).key(),
                                                   n_features, lengthscale));
  return out;
}

Vector sphere_noise_wrap(const VectorRef& s, double tau, Stream& stream) {
  require(tau >= 0.0 && tau <= 1.0, "sphere_noise_wrap: tau outside [0, 1]");
  if (tau == 0.0) return s;
  return s + (tau * s.norm()) * stream.unit_sphere(s.size());
}

SphereNoisyScore::SphereNoisyScore(PredictorPtr base, double tau, std::uint64_t seed)
    : base_(std::move(base)), tau_(tau), root_(seed) {
  require(base_ != nullptr, "SphereNoisyScore: null base");
  require(tau >= 0.0 && tau <= 1.0, "SphereNoisyScore: tau outside [0, 1]");
}

Vector SphereNoisyScore::evaluate(const VectorRef& x, double t) const {
  Vector s = base_->evaluate(x, t);
  if (tau_ == 0.0) return s;
  Stream stream = root_.child(std::bit_cast<std::uint64_t>(t));
  for (Eigen::Index i = 0; i < x.size(); ++i) stream = stream.child(std::bit_cast<std::uint64_t>(x[i]));
  return sphere_noise_wrap(s, tau_, stream);
}

}  // namespace ensdiff
