#pragma once

#include "ensdiff/diffusion.hpp"
#include "ensdiff/rng.hpp"
#include "ensdiff/score.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace ensdiff {

// lambda(t) in the denoising score-matching loss.
enum class Weighting { Variance, Unit };  // 1 - gamma(t), or 1

std::string to_string(Weighting w);
Weighting parse_weighting(std::string_view name);

// A fixed Monte-Carlo batch for the DDSM loss: rows of x0 are drawn uniformly
// from the data, t ~ U(t_min, 1), z ~ N(0, I), xt the forward sample.
struct DdsmBatch {
  Matrix x0, xt, z;
  std::vector<double> t;
  std::vector<double> sigma;  // sqrt(1 - gamma(t))

  Eigen::Index size() const { return xt.rows(); }
};

DdsmBatch draw_ddsm_batch(const MatrixRef& data, const NoiseSchedule& schedule, int n_mc, Stream stream,
                          double t_min = 1e-3);

// Row i of the result is predictor(xt_i, t_i).
Matrix predict_on_batch(const ScorePredictor& predictor, const DdsmBatch& batch);

// Per-draw summands lambda(t_i) ||s_i + z_i / sigma_i||^2; with the variance
// weighting this is ||sigma_i s_i + z_i||^2.
Vector ddsm_terms(const MatrixRef& predictions, const DdsmBatch& batch, Weighting weighting = Weighting::Variance);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

Estimate mean_with_stderr(const VectorRef& terms);

Estimate ddsm_loss(const ScorePredictor& predictor, const DdsmBatch& batch, Weighting weighting = Weighting::Variance);
Estimate ddsm_loss(const ScorePredictor& predictor, const MatrixRef& data, const NoiseSchedule& schedule, int n_mc,
                   Stream stream, Weighting weighting = Weighting::Variance);

// (1/n) min over permutations of sum_i ||A_i - B_pi(i)||, solved exactly.
double wasserstein1_exact(const MatrixRef& A, const MatrixRef& B);

// Minimum-cost perfect matching on a square cost matrix; returns the column
// assigned to each row. Shortest augmenting paths with potentials, O(n^3).
std::vector<Eigen::Index> solve_assignment(const Matrix& cost);

// Fraction of real points whose k-th nearest real neighbour (self excluded)
// is at least as far as the nearest fake point.
double coverage(const MatrixRef& real, const MatrixRef& fake, int k = 5);

// Mean over (x_i, t_i) of the coordinate-averaged population variance of the
// K member predictions.
double predictive_diversity(const ScoreEnsemble& ensemble, const MatrixRef& points, const std::vector<double>& times);

struct MetricReport {
  std::optional<double> ddsm_loss;
  std::optional<double> ddsm_stderr;
  std::optional<double> wasserstein1;
  std::optional<double> coverage;
  std::optional<double> diversity;
  long n_eval = 0;
  std::vector<std::uint64_t> seeds;
  std::string rule;
  long K = 0;

  void validate() const;
  static std::vector<std::string> csv_columns();
  std::vector<std::string> csv_row() const;
};

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

}  // namespace ensdiff
