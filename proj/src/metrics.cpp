#include "ensdiff/metrics.hpp"

#include "ensdiff/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ensdiff {

std::string to_string(Weighting w) { return w == Weighting::Variance ? "variance" : "unit"; }

Weighting parse_weighting(std::string_view name) {
  if (name == "variance") return Weighting::Variance;
  if (name == "unit") return Weighting::Unit;
  throw DomainError("unknown weighting '" + std::string(name) + "'");
}

DdsmBatch draw_ddsm_batch(const MatrixRef& data, const NoiseSchedule& schedule, int n_mc, Stream stream,
                          double t_min) {
  require(n_mc >= 1, "ddsm: n_mc must be >= 1");
  require(data.rows() >= 1, "ddsm: empty dataset");
  require(t_min > 0.0 && t_min < 1.0, "ddsm: t_min must lie in (0, 1)");
  const Eigen::Index d = data.cols();
  DdsmBatch b;
  b.x0.resize(n_mc, d);
  b.xt.resize(n_mc, d);
  b.z.resize(n_mc, d);
  b.t.resize(static_cast<std::size_t>(n_mc));
  b.sigma.resize(static_cast<std::size_t>(n_mc));
  for (int i = 0; i < n_mc; ++i) {
    const auto u = static_cast<std::size_t>(i);
    b.x0.row(i) = data.row(static_cast<Eigen::Index>(stream.index(static_cast<std::size_t>(data.rows()))));
    b.t[u] = t_min + (1.0 - t_min) * stream.uniform();
    b.z.row(i) = stream.normal_vector(d).transpose();
    b.xt.row(i) = forward_sample(schedule, Vector(b.x0.row(i).transpose()), b.t[u], Vector(b.z.row(i).transpose()))
                      .transpose();
    b.sigma[u] = marginal_std(schedule, b.t[u]);
  }
  return b;
}

Matrix predict_on_batch(const ScorePredictor& predictor, const DdsmBatch& batch) {
  require(predictor.dim() == batch.xt.cols(), "ddsm: predictor dimension mismatch");
  Matrix out(batch.size(), batch.xt.cols());
  parallel_for(static_cast<std::size_t>(batch.size()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r) = predictor.evaluate(batch.xt.row(r).transpose(), batch.t[i]).transpose();
  });
  return out;
}

Vector ddsm_terms(const MatrixRef& predictions, const DdsmBatch& batch, Weighting weighting) {
  require(predictions.rows() == batch.size() && predictions.cols() == batch.z.cols(),
          "ddsm: prediction shape mismatch");
  Vector terms(batch.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double sigma = batch.sigma[static_cast<std::size_t>(i)];
    if (weighting == Weighting::Variance)
      terms[i] = (sigma * predictions.row(i) + batch.z.row(i)).squaredNorm();
    else
      terms[i] = (predictions.row(i) + batch.z.row(i) / sigma).squaredNorm();
  }
  return terms;
}

Estimate mean_with_stderr(const VectorRef& terms) {
  require(terms.size() >= 1, "mean_with_stderr: empty sample");
  Estimate e;
  e.value = terms.mean();
  if (terms.size() > 1) {
    const double var = (terms.array() - e.value).square().sum() / static_cast<double>(terms.size() - 1);
    e.std_error = std::sqrt(var / static_cast<double>(terms.size()));
  }
  return e;
}

Estimate ddsm_loss(const ScorePredictor& predictor, const DdsmBatch& batch, Weighting weighting) {
  return mean_with_stderr(ddsm_terms(predict_on_batch(predictor, batch), batch, weighting));
}

Estimate ddsm_loss(const ScorePredictor& predictor, const MatrixRef& data, const NoiseSchedule& schedule, int n_mc,
                   Stream stream, Weighting weighting) {
  return ddsm_loss(predictor, draw_ddsm_batch(data, schedule, n_mc, stream), weighting);
}

std::vector<Eigen::Index> solve_assignment(const Matrix& cost) {
  require(cost.rows() == cost.cols(), "solve_assignment: cost matrix must be square");
  const Eigen::Index n = cost.rows();
  if (!cost.allFinite()) throw NumericalError("solve_assignment: non-finite cost");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = p[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assignment(n);
  for (Eigen::Index j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double wasserstein1_exact(const MatrixRef& A, const MatrixRef& B) {
  if (A.rows() != B.rows()) throw DomainError("wasserstein1_exact: sample sizes differ (subsample first)");
  require(A.cols() == B.cols(), "wasserstein1_exact: dimension mismatch");
  const Eigen::Index n = A.rows();
  if (n == 0) throw DomainError("wasserstein1_exact: empty samples");
  Matrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (A.row(i) - B.row(j)).norm();
  const auto match = solve_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += cost(i, match[i]);
  return total / static_cast<double>(n);
}

double coverage(const MatrixRef& real, const MatrixRef& fake, int k) {
  require(k >= 1, "coverage: k must be >= 1");
  if (real.rows() <= k) throw DomainError("coverage: need more real points than k");
  require(fake.rows() >= 1, "coverage: no generated points");
  require(real.cols() == fake.cols(), "coverage: dimension mismatch");
  const Eigen::Index n = real.rows();
  std::vector<double> dist(static_cast<std::size_t>(n - 1));
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dist[m++] = (real.row(i) - real.row(j)).norm();
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    const double radius = dist[static_cast<std::size_t>(k - 1)];
    const double nearest_fake = (fake.rowwise() - real.row(i)).rowwise().norm().minCoeff();
    if (nearest_fake <= radius) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(n);
}

double predictive_diversity(const ScoreEnsemble& ensemble, const MatrixRef& points, const std::vector<double>& times) {
  if (ensemble.size() < 2) throw DomainError("predictive_diversity: need K >= 2");
  require(static_cast<std::size_t>(points.rows()) == times.size(), "predictive_diversity: one time per point");
  require(points.rows() >= 1, "predictive_diversity: no evaluation points");
  Vector per_point(points.rows());
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Matrix s = ensemble.members(points.row(r).transpose(), times[i]);
    // Shifting by member 0 first makes identical members give exactly zero.
    const Matrix c = s.rowwise() - s.row(0);
    per_point[r] = (c.rowwise() - c.colwise().mean()).array().square().colwise().mean().mean();
  });
  return per_point.mean();
}

void MetricReport::validate() const {
  for (const auto& v : {ddsm_loss, ddsm_stderr, wasserstein1, coverage, diversity})
    if (v && !std::isfinite(*v)) throw NumericalError("metric report: non-finite value");
  if (coverage && (*coverage < 0.0 || *coverage > 1.0)) throw DomainError("metric report: coverage outside [0, 1]");
}

std::vector<std::string> MetricReport::csv_columns() {
  return {"rule", "K", "n_eval", "seeds", "ddsm_loss", "ddsm_stderr", "wasserstein1", "coverage", "diversity"};
}

std::vector<std::string> MetricReport::csv_row() const {
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
  };
  std::string seed_list;
  for (std::size_t i = 0; i < seeds.size(); ++i) seed_list += (i ? ";" : "") + std::to_string(seeds[i]);
  return {rule, std::to_string(K), std::to_string(n_eval), seed_list, num(ddsm_loss), num(ddsm_stderr),
          num(wasserstein1), num(coverage), num(diversity)};
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"format_version", 1},
                     {"ddsm_loss", opt(r.ddsm_loss)},
                     {"ddsm_stderr", opt(r.ddsm_stderr)},
                     {"wasserstein1", opt(r.wasserstein1)},
                     {"coverage", opt(r.coverage)},
                     {"diversity", opt(r.diversity)},
                     {"metadata", {{"n_eval", r.n_eval}, {"seeds", r.seeds}, {"rule", r.rule}, {"K", r.K}}}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  if (j.at("format_version").get<int>() != 1) throw DomainError("metric report: unsupported format_version");
  auto opt = [&](const char* key) -> std::optional<double> {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  r.ddsm_loss = opt("ddsm_loss");
  r.ddsm_stderr = opt("ddsm_stderr");
  r.wasserstein1 = opt("wasserstein1");
  r.coverage = opt("coverage");
  r.diversity = opt("diversity");
  const auto& m = j.at("metadata");
  r.n_eval = m.at("n_eval").get<long>();
  r.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
  r.rule = m.at("rule").get<std::string>();
  r.K = m.at("K").get<long>();
  r.validate();
}

}  // namespace ensdiff
