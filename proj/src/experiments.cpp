#include "ensdiff/experiments.hpp"

#include "ensdiff/gaussian.hpp"
#include "ensdiff/parallel.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace ensdiff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("cannot write " + path);
}

void log(const RunContext& ctx, const std::string& message) {
  if (ctx.log) *ctx.log << message << std::endl;
}

std::string format_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

// N(0, diag(alpha)) draws, one row per point.
Matrix gaussian_points(const Vector& alpha, Eigen::Index n, Stream stream) {
  Matrix out(n, alpha.size());
  const Vector sd = alpha.array().sqrt();
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = stream.normal_vector(alpha.size()).cwiseProduct(sd).transpose();
  return out;
}

TimeGrid sampling_grid(const TimeGrid& model_grid, int n_steps) {
  return n_steps > 0 ? TimeGrid(n_steps, model_grid.t_min()) : model_grid;
}

const std::string& require_path(const std::string& path, const char* key) {
  if (path.empty()) throw DomainError(std::string("config: ") + key + " is required for this command");
  return path;
}

PredictorEnsemble single(PredictorPtr p) { return PredictorEnsemble({std::move(p)}); }

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  throw DomainError("unknown format '" + std::string(name) + "' (expected csv or json)");
}

void Table::add(std::vector<json> row) {
  require(row.size() == columns.size(), "table: row width does not match the header");
  rows.push_back(std::move(row));
}

void Table::write_csv(std::ostream& out) const {
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_cell(row[c]);
    out << '\n';
  }
}

json Table::to_json() const {
  json rows_json = json::array();
  for (const auto& row : rows) {
    json obj = json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) obj[columns[c]] = row[c];
    rows_json.push_back(std::move(obj));
  }
  return json{{"format_version", 1}, {"columns", columns}, {"rows", std::move(rows_json)}};
}

std::string write_table(const std::string& dir, const std::string& stem, const Table& table, Format format) {
  const std::string name = stem + (format == Format::Csv ? ".csv" : ".json");
  if (format == Format::Csv) {
    std::ostringstream os;
    table.write_csv(os);
    write_text(join(dir, name), os.str());
  } else {
    write_text(join(dir, name), table.to_json().dump(2) + "\n");
  }
  return name;
}

Manifest::Manifest(const RunContext& ctx, std::string command)
    : ctx_(ctx), command_(std::move(command)), started_(now_seconds()) {
  ensure_dir(ctx.out_dir);
}

void Manifest::input(const std::string& path) { inputs_.push_back({{"path", path}, {"hash", file_hash(path)}}); }

void Manifest::output(const std::string& file_name) { outputs_.push_back(file_name); }

void Manifest::write() const {
  json outputs = json::array();
  for (const auto& name : outputs_) outputs.push_back({{"file", name}, {"hash", file_hash(join(ctx_.out_dir, name))}});
  json j{{"format_version", 1},
         {"tool", "ensdiff"},
         {"version", kVersion},
         {"command", command_},
         {"seeds", ctx_.seeds},
         {"config", ctx_.config},
         {"inputs", inputs_},
         {"outputs", std::move(outputs)},
         {"wall_time_s", now_seconds() - started_}};
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  write_text(join(ctx_.out_dir, "manifest.json"), j.dump(2) + "\n");
}

Split split_for(const MatrixRef& points, double test_fraction, std::uint64_t seed, int split) {
  return train_test_split(points, test_fraction, Stream(seed).child({0, static_cast<std::uint64_t>(split)}));
}

std::uint64_t training_seed(std::uint64_t seed, int split) {
  return Stream(seed).child({1, static_cast<std::uint64_t>(split)}).key();
}

std::uint64_t sampling_seed(std::uint64_t seed, int split, int batch) {
  return Stream(seed).child({2, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(batch)}).key();
}

ForestVpModel train_on_split(const ModelSection& model, const Split& split, std::vector<std::string> feature_names,
                             std::uint64_t seed, int split_index) {
  MinMaxScaler scaler = MinMaxScaler::fit(split.train);
  const Matrix scaled = scaler.transform(split.train);
  ForestVpConfig config{model.n_rep, model.forest};
  return train_forest_vp(scaled, model.schedule, model.grid(), config, training_seed(seed, split_index),
                         std::move(scaler), std::move(feature_names));
}

SampleBatch generate(const ScoreEnsemble& ensemble, const NoiseSchedule& schedule, const TimeGrid& grid,
                     const SamplingSection& sampling, Eigen::Index n, std::uint64_t seed, bool record_scores) {
  SamplerConfig config;
  config.grid = grid;
  config.schedule = schedule;
  config.scheme = sampling.scheme;
  config.rule = sampling.effective_rule();
  if (sampling.scheme == Scheme::StepWise) config.early_switch = sampling.early_switch;
  config.batch = n;
  config.seed = seed;
  config.record_scores = record_scores;
  if (n == 0) {
    config.validate(ensemble.size());
    SampleBatch empty;
    empty.samples.resize(0, ensemble.dim());
    return empty;
  }
  SampleBatch batch = sample(ensemble, config);
  if (sampling.clip) batch.samples = batch.samples.cwiseMax(-1.0).cwiseMin(1.0);
  return batch;
}

MetricReport compare_samples(const MatrixRef& fake, const MatrixRef& real, const MetricsSection& metrics,
                             std::uint64_t seed) {
  MetricReport report;
  report.seeds = {seed};
  const Eigen::Index m = std::min({fake.rows(), real.rows(), static_cast<Eigen::Index>(metrics.w1_max_n)});
  report.n_eval = static_cast<long>(m);
  if (metrics.wasserstein && m >= 1) {
    const Stream s(seed);
    report.wasserstein1 = wasserstein1_exact(subsample_rows(fake, m, s.child({3, 0})),
                                             subsample_rows(real, m, s.child({3, 1})));
  }
  if (metrics.coverage && real.rows() > metrics.coverage_k && fake.rows() >= 1)
    report.coverage = coverage(real, fake, metrics.coverage_k);
  return report;
}

// ---------------------------------------------------------------- sweep

SweepResult run_sweep(const RunContext& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  const Dataset data = read_csv_file(require_path(cfg.data.path, "data.path"));
  const auto& sw = cfg.sweep;

  SweepResult r;
  r.trees = sw.trees;
  r.columns = sw.columns;
  const std::size_t nk = sw.trees.size(), nc = sw.columns.size();
  r.w1.assign(nk, std::vector<double>(nc, 0.0));
  r.coverage.assign(nk, std::vector<double>(nc, 0.0));
  r.w1_per_split.assign(nk, std::vector<std::vector<double>>(nc, std::vector<double>(sw.n_splits, 0.0)));
  r.score_std.assign(nk, std::vector<std::vector<double>>(nc));

  ModelSection model_cfg = cfg.model;
  model_cfg.forest.n_trees = *std::max_element(sw.trees.begin(), sw.trees.end());

  for (int s = 0; s < sw.n_splits; ++s) {
    const Split split = split_for(data.points, cfg.data.test_fraction, seed, s);
    log(ctx, "sweep: split " + std::to_string(s) + ": training " + std::to_string(model_cfg.n_levels) + " x " +
                 std::to_string(model_cfg.forest.n_trees) + " trees on " + std::to_string(split.train.rows()) +
                 " rows");
    const ForestVpModel model = train_on_split(model_cfg, split, data.feature_names, seed, s);
    const Matrix test = model.scaler().transform(split.test);
    const TimeGrid grid = sampling_grid(model.grid(), cfg.sampling.n_steps);

    for (std::size_t ki = 0; ki < nk; ++ki) {
      const TreePrefix view(model, static_cast<std::size_t>(sw.trees[ki]));
      for (std::size_t ci = 0; ci < nc; ++ci) {
        SamplingSection sampling = cfg.sampling;
        sampling.scheme = sw.columns[ci].scheme;
        sampling.rule = sw.columns[ci].rule;
        double w1 = 0.0, cov = 0.0;
        for (int b = 0; b < sw.n_batches; ++b) {
          const std::uint64_t sseed = sampling_seed(seed, s, b);
          const SampleBatch batch = generate(view, model.schedule(), grid, sampling, test.rows(), sseed, b == 0);
          const MetricReport rep = compare_samples(batch.samples, test, cfg.metrics, sseed);
          w1 += rep.wasserstein1.value_or(std::numeric_limits<double>::quiet_NaN());
          cov += rep.coverage.value_or(std::numeric_limits<double>::quiet_NaN());
          if (b == 0) {
            const auto profile = score_std_profile(batch);
            auto& acc = r.score_std[ki][ci];
            if (acc.empty()) acc.assign(profile.size(), 0.0);
            for (std::size_t i = 0; i < profile.size(); ++i) acc[i] += profile[i] / sw.n_splits;
            r.step_times = batch.times;
          }
        }
        w1 /= sw.n_batches;
        cov /= sw.n_batches;
        r.w1_per_split[ki][ci][static_cast<std::size_t>(s)] = w1;
        r.w1[ki][ci] += w1 / sw.n_splits;
        r.coverage[ki][ci] += cov / sw.n_splits;
        std::ostringstream os;
        os << "sweep: split " << s << " K=" << sw.trees[ki] << " " << sw.columns[ci].name() << " W1=" << w1
           << " coverage=" << cov;
        log(ctx, os.str());
      }
    }
  }
  return r;
}

// -------------------------------------------------------------- perturb

std::vector<PerturbRow> run_perturb(const RunContext& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  const auto& pc = cfg.perturb;
  const Stream root(seed);

  PredictorPtr base;
  std::shared_ptr<const ForestVpModel> model;
  NoiseSchedule schedule = cfg.model.schedule;
  double t_min = cfg.model.t_min;
  Matrix data;
  if (pc.model.empty()) {
    base = std::make_shared<AnalyticGaussianScore>(pc.alpha, schedule);
    data = gaussian_points(pc.alpha, pc.n_data, root.child(0));
  } else {
    model = std::make_shared<ForestVpModel>(load_model(pc.model));
    base = model;
    schedule = model->schedule();
    t_min = model->grid().t_min();
    data = model->scaler().transform(read_csv_file(require_path(cfg.data.path, "data.path")).points);
  }

  const DdsmBatch batch = draw_ddsm_batch(data, schedule, pc.n_mc, root.child(1), t_min);
  const Matrix base_pred = predict_on_batch(*base, batch);
  const Matrix reference =
      pc.model.empty() ? gaussian_points(pc.alpha, pc.n_samples, root.child(4)) : subsample_rows(data, pc.n_samples, root.child(4));
  const TimeGrid grid(pc.n_steps, t_min);
  SamplingSection sampling;
  MetricsSection w1_only = cfg.metrics;
  w1_only.coverage = false;
  w1_only.wasserstein = true;

  std::vector<PerturbRow> rows;
  for (double tau : pc.tau) {
    auto noisy = std::make_shared<SphereNoisyScore>(base, tau, root.child(2).key());
    PerturbRow row;
    row.seed = seed;
    row.tau = tau;
    const Matrix pred = predict_on_batch(*noisy, batch);
    row.terms = ddsm_terms(pred, batch, cfg.metrics.weighting);
    row.ddsm = mean_with_stderr(row.terms);
    double rel = 0.0;
    long counted = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double nb = base_pred.row(i).norm();
      if (nb == 0.0) continue;
      rel += (pred.row(i) - base_pred.row(i)).norm() / nb;
      ++counted;
    }
    row.relative_perturbation = counted ? rel / static_cast<double>(counted) : 0.0;
    const PredictorEnsemble ens = single(noisy);
    const SampleBatch gen = generate(ens, schedule, grid, sampling, pc.n_samples, root.child(3).key(), false);
    row.w1 = compare_samples(gen.samples, reference, w1_only, root.child(5).key()).wasserstein1.value_or(0.0);
    rows.push_back(std::move(row));
    std::ostringstream os;
    os << "perturb: seed " << seed << " tau=" << tau << " ddsm=" << rows.back().ddsm.value << " +- "
       << rows.back().ddsm.std_error << " W1=" << rows.back().w1;
    log(ctx, os.str());
  }
  return rows;
}

// ------------------------------------------------------ property checks

PropCheck check_forward_moments(long n, std::uint64_t seed) {
  PropCheck c{"forward_marginal_moments", true, n, 0.0, ""};
  const NoiseSchedule schedule;
  const Eigen::Index d = 3;
  Stream s(seed);
  const Vector x0 = s.child(0).normal_vector(d) * 2.0;
  const double times[] = {0.05, 0.3, 1.0};
  double worst = 0.0;  // largest |deviation| / stderr
  for (std::size_t ti = 0; ti < 3; ++ti) {
    const double t = times[ti];
    Stream zs = s.child({1, ti});
    Matrix X(n, d);
    for (long i = 0; i < n; ++i) X.row(i) = forward_sample(schedule, x0, t, zs.normal_vector(d)).transpose();
    const double g = gamma(schedule, t), v = 1.0 - g;
    const Vector mean = X.colwise().mean().transpose();
    const Vector expected = std::sqrt(g) * x0;
    const Matrix centered = X.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < d; ++i) {
      worst = std::max(worst, std::abs(mean[i] - expected[i]) / std::sqrt(v / n));
      for (Eigen::Index j = 0; j < d; ++j) {
        const double target = i == j ? v : 0.0;
        // Var of a sample covariance entry for Gaussians: (s_ii s_jj + s_ij^2) / n.
        const double se = std::sqrt((v * v + target * target) / n);
        worst = std::max(worst, std::abs(cov(i, j) - target) / se);
      }
    }
  }
  c.worst = worst;
  c.passed = worst <= 5.0;
  c.detail = "max |deviation| in standard errors over mean and covariance entries at t = 0.05, 0.3, 1";
  return c;
}

PropCheck check_gap_sweep(long n, std::uint64_t seed) {
  PropCheck c{"commutativity_gap_sweep", true, n, std::numeric_limits<double>::infinity(), ""};
  Stream s(seed);
  long violations = 0;
  for (long i = 0; i < n; ++i) {
    const int K = 2 + static_cast<int>(s.index(7));
    Vector alpha(K);
    for (int k = 0; k < K; ++k) alpha[k] = std::pow(10.0, -2.0 + 4.0 * s.uniform());
    double g;
    do g = s.uniform();
    while (g <= 0.0);
    const auto r = commutativity_gap(alpha, g);
    c.worst = std::min(c.worst, r.gap);
    const bool equal = alpha.maxCoeff() / alpha.minCoeff() - 1.0 <= 1e-9;
    const bool zero_gap = r.gap <= 1e-12;
    if (r.gap < -1e-12 || equal != zero_gap) ++violations;
  }
  c.passed = violations == 0;
  c.detail = std::to_string(violations) + " violations; worst is the minimum gap";
  return c;
}

PropCheck check_equal_alpha(long n, std::uint64_t seed) {
  PropCheck c{"commutativity_gap_equal_alpha", true, n, 0.0, ""};
  Stream s(seed);
  for (long i = 0; i < n; ++i) {
    const int K = 2 + static_cast<int>(s.index(7));
    const Vector alpha = Vector::Constant(K, std::pow(10.0, -2.0 + 4.0 * s.uniform()));
    double g;
    do g = s.uniform();
    while (g <= 0.0);
    c.worst = std::max(c.worst, std::abs(commutativity_gap(alpha, g).gap));
  }
  c.passed = c.worst <= 1e-12;
  c.detail = "worst is the largest |gap| over equal-variance inputs";
  return c;
}

PropCheck check_reverse_minkowski(long n, std::uint64_t seed) {
  PropCheck c{"reverse_minkowski", true, n, std::numeric_limits<double>::infinity(), ""};
  Stream s(seed);
  const double exponents[] = {-1.0, 0.5, -2.0};
  long violations = 0;
  for (long i = 0; i < n; ++i) {
    const int K = 2 + static_cast<int>(s.index(7));
    Vector a(K), b(K);
    for (int k = 0; k < K; ++k) {
      a[k] = std::pow(10.0, -2.0 + 4.0 * s.uniform());
      b[k] = std::pow(10.0, -2.0 + 4.0 * s.uniform());
    }
    const double p = exponents[s.index(3)];
    const auto r = reverse_minkowski_check(a, b, p);
    c.worst = std::min(c.worst, r.lhs - r.rhs);
    if (!r.holds) ++violations;
    // Proportional inputs give equality.
    const Vector scaled = a * (0.5 + 2.0 * s.uniform());
    const auto e = reverse_minkowski_check(a, scaled, p);
    if (std::abs(e.lhs - e.rhs) > 1e-10 * std::max(1.0, std::abs(e.lhs))) ++violations;
  }
  c.passed = violations == 0;
  c.detail = std::to_string(violations) + " violations; worst is min(lhs - rhs)";
  return c;
}

PropCheck check_jensen(long n, std::uint64_t seed) {
  PropCheck c{"leave_one_out_jensen", true, n, -std::numeric_limits<double>::infinity(), ""};
  const NoiseSchedule schedule;
  Stream s(seed);
  long violations = 0;
  for (long i = 0; i < n; ++i) {
    const int K = 2 + static_cast<int>(s.index(7));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(s.index(4));
    Vector alpha(d);
    for (Eigen::Index j = 0; j < d; ++j) alpha[j] = std::pow(10.0, -1.0 + 2.0 * s.uniform());
    const double epsilon = s.uniform();
    const PredictorPtr base = std::make_shared<AnalyticGaussianScore>(alpha, schedule);
    const auto members = make_id_ensemble(base, K, epsilon, s());
    const Matrix data = gaussian_points(alpha, 200, s.child({1, static_cast<std::uint64_t>(i)}));
    const DdsmBatch batch = draw_ddsm_batch(data, schedule, 200, s.child({2, static_cast<std::uint64_t>(i)}));
    std::vector<Matrix> outputs;
    for (const auto& m : members) outputs.push_back(predict_on_batch(*m, batch));
    const auto sides = leave_one_out_jensen(std::span<const Matrix>(outputs),
                                            [&](const Matrix& pred) { return ddsm_terms(pred, batch).mean(); });
    c.worst = std::max(c.worst, sides.lhs - sides.rhs);
    if (sides.lhs > sides.rhs + 1e-12) ++violations;
  }
  c.passed = violations == 0;
  c.detail = std::to_string(violations) + " violations; worst is max(lhs - rhs)";
  return c;
}

PropCheck check_poe_simulation(long n, std::uint64_t seed) {
  PropCheck c{"poe_diffusion_simulation", true, n, 0.0, ""};
  const Vector alpha = (Vector(2) << 0.25, 4.0).finished();
  const double g = 0.5;
  const double poe_var = harmonic_mean(alpha);
  const auto gap = commutativity_gap(alpha, g);
  Stream s(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (long i = 0; i < n; ++i) {
    const double x0 = std::sqrt(poe_var) * s.normal();
    const double xt = std::sqrt(g) * x0 + std::sqrt(1.0 - g) * s.normal();
    sum += xt;
    sum_sq += xt * xt;
  }
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1);
  const double se = var * std::sqrt(2.0 / (n - 1));
  const double z_poe = std::abs(var - gap.c_poe) / se;
  const double z_not = std::abs(var - gap.c_not_poe) / se;
  c.worst = z_poe;
  c.passed = z_poe <= 5.0 && z_not > 5.0;
  std::ostringstream os;
  os << "simulated variance " << var << " vs c_poe " << gap.c_poe << " (" << z_poe << " se) and c_not_poe "
     << gap.c_not_poe << " (" << z_not << " se)";
  c.detail = os.str();
  return c;
}

std::vector<PropCheck> run_property_checks(const PropsSection& props, std::uint64_t seed) {
  const Stream root(seed);
  return {check_forward_moments(100000, root.child(0).key()),
          check_gap_sweep(props.n_gap_draws, root.child(1).key()),
          check_equal_alpha(props.n_gap_draws, root.child(2).key()),
          check_reverse_minkowski(props.n_minkowski_draws, root.child(3).key()),
          check_jensen(props.n_jensen_sets, root.child(4).key()),
          check_poe_simulation(props.n_poe_samples, root.child(5).key())};
}

// ------------------------------------------------------------ diversity

std::vector<DiversityRow> run_diversity(const RunContext& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  const auto& dc = cfg.diversity;
  const Stream root(seed);
  std::vector<DiversityRow> rows;
  std::vector<double> times(static_cast<std::size_t>(dc.n_points));

  if (dc.model.empty()) {
    const NoiseSchedule& schedule = cfg.model.schedule;
    const Matrix x0 = gaussian_points(dc.alpha, dc.n_points, root.child(0));
    Stream ts = root.child(1);
    Matrix xt(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      const double t = cfg.model.t_min + (1.0 - cfg.model.t_min) * ts.uniform();
      times[static_cast<std::size_t>(i)] = t;
      xt.row(i) = forward_sample(schedule, Vector(x0.row(i).transpose()), t, ts.normal_vector(x0.cols())).transpose();
    }
    const PredictorPtr base = std::make_shared<AnalyticGaussianScore>(dc.alpha, schedule);
    for (double eps : dc.epsilon) {
      const PredictorEnsemble ens(make_id_ensemble(base, dc.K, eps, root.child(2).key()));
      rows.push_back({"analytic", eps, dc.K, predictive_diversity(ens, xt, times)});
    }
    return rows;
  }

  const ForestVpModel model = load_model(dc.model);
  const Matrix data = model.scaler().transform(read_csv_file(require_path(cfg.data.path, "data.path")).points);
  Stream ps = root.child(0);
  Matrix xt(dc.n_points, data.cols());
  const double t_min = model.grid().t_min();
  for (Eigen::Index i = 0; i < xt.rows(); ++i) {
    const Vector x0 = data.row(static_cast<Eigen::Index>(ps.index(static_cast<std::size_t>(data.rows())))).transpose();
    const double t = t_min + (1.0 - t_min) * ps.uniform();
    times[static_cast<std::size_t>(i)] = t;
    xt.row(i) = forward_sample(model.schedule(), x0, t, ps.normal_vector(data.cols())).transpose();
  }
  for (int K : dc.trees) {
    if (static_cast<std::size_t>(K) > model.size())
      throw DomainError("diversity.trees: K = " + std::to_string(K) + " exceeds the model's " +
                        std::to_string(model.size()) + " trees");
    const TreePrefix view(model, static_cast<std::size_t>(K));
    rows.push_back({"forest", std::numeric_limits<double>::quiet_NaN(), K, predictive_diversity(view, xt, times)});
  }
  return rows;
}

// ------------------------------------------------------------------ nll

std::vector<double> ode_nll(const ScorePredictor& score, const MatrixRef& points, const NoiseSchedule& schedule,
                            const LikelihoodConfig& config, std::uint64_t seed, std::vector<std::string>* warnings) {
  std::vector<double> nll(static_cast<std::size_t>(points.rows()));
  std::vector<std::string> first_warnings;
  parallel_for(nll.size(), [&](std::size_t i) {
    const auto r = ode_loglik(score, points.row(static_cast<Eigen::Index>(i)).transpose(), schedule, config,
                              Stream(seed).child({4, i}));
    nll[i] = -r.log_density;
    if (i == 0) first_warnings = r.warnings;
  });
  if (warnings) warnings->insert(warnings->end(), first_warnings.begin(), first_warnings.end());
  return nll;
}

NllResult run_nll(const RunContext& ctx, std::uint64_t seed) {
  const auto& cfg = ctx.config;
  const auto& nc = cfg.nll;
  const Stream root(seed);
  NllResult r;
  r.points = nc.points.empty() ? gaussian_points(nc.alpha, nc.n_points, root.child(0))
                               : read_csv_file(nc.points).points;
  require(r.points.cols() == nc.alpha.size(), "nll: points and alpha differ in dimension");

  const NoiseSchedule& schedule = cfg.model.schedule;
  const PredictorPtr base = std::make_shared<AnalyticGaussianScore>(nc.alpha, schedule);
  std::unique_ptr<PredictorEnsemble> ensemble;
  std::unique_ptr<AggregatedScore> aggregated;
  const ScorePredictor* score = base.get();
  if (nc.K > 1 || nc.epsilon > 0.0) {
    ensemble = std::make_unique<PredictorEnsemble>(make_id_ensemble(base, nc.K, nc.epsilon, root.child(1).key()));
    aggregated = std::make_unique<AggregatedScore>(*ensemble, nc.rule);
    score = aggregated.get();
  }
  r.nll = ode_nll(*score, r.points, schedule, nc.likelihood, root.child(2).key(), &r.warnings);
  const Vector var = marginal_gaussian_covariance(schedule, nc.alpha, nc.likelihood.t_min);
  for (Eigen::Index i = 0; i < r.points.rows(); ++i)
    r.gaussian_nll.push_back(-gaussian_log_density(r.points.row(i).transpose(), var));
  return r;
}

// ------------------------------------------------------------- commands

int cmd_train(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const std::uint64_t seed = ctx.seeds.front();
  Manifest manifest(ctx, "train");
  const std::string& path = require_path(cfg.data.path, "data.path");
  const Dataset data = read_csv_file(path);
  manifest.input(path);
  const Split split = split_for(data.points, cfg.data.test_fraction, seed, 0);
  log(ctx, "train: " + std::to_string(cfg.model.n_levels) + " levels x " + std::to_string(cfg.model.forest.n_trees) +
               " trees on " + std::to_string(split.train.rows()) + " rows");
  const ForestVpModel model = train_on_split(cfg.model, split, data.feature_names, seed, 0);
  save_model(model, join(ctx.out_dir, "model.json"));
  write_csv_file(join(ctx.out_dir, "train.csv"), data.feature_names, split.train);
  write_csv_file(join(ctx.out_dir, "test.csv"), data.feature_names, split.test);
  for (const char* f : {"model.json", "train.csv", "test.csv"}) manifest.output(f);
  manifest.set("data_hash", file_hash(path));
  manifest.write();
  return 0;
}

int cmd_sample(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const auto& sc = cfg.sampling;
  const std::uint64_t seed = ctx.seeds.front();
  Manifest manifest(ctx, "sample");
  const std::string& path = require_path(sc.model, "sampling.model");
  const ForestVpModel model = load_model(path);
  manifest.input(path);
  const std::size_t K = sc.n_trees > 0 ? static_cast<std::size_t>(sc.n_trees) : model.size();
  if (K > model.size())
    throw DomainError("sampling.n_trees = " + std::to_string(K) + " exceeds the model's " +
                      std::to_string(model.size()) + " trees");
  const TreePrefix view(model, K);
  const TimeGrid grid = sampling_grid(model.grid(), sc.n_steps);
  const SampleBatch batch = generate(view, model.schedule(), grid, sc, sc.n_samples, seed, sc.diagnostics);

  std::vector<std::string> header = model.feature_names();
  if (header.empty())
    for (Eigen::Index j = 0; j < model.dim(); ++j) header.push_back("x" + std::to_string(j));
  const Matrix original = batch.samples.rows() > 0 ? model.scaler().inverse(batch.samples) : batch.samples;
  write_csv_file(join(ctx.out_dir, "samples.csv"), header, original);
  manifest.output("samples.csv");

  if (sc.diagnostics) {
    Table t{{"step", "t", "score_std", "score_mean_norm"}, {}};
    if (batch.samples.rows() > 0) {
      const auto sd = score_std_profile(batch);
      const auto norm = score_mean_norm_profile(batch);
      for (std::size_t i = 0; i < sd.size(); ++i) t.add({static_cast<long>(i), batch.times[i], sd[i], norm[i]});
    }
    manifest.output(write_table(ctx.out_dir, "diagnostics", t, ctx.format));
  }
  manifest.set("n_trees", K);
  manifest.set("scheme", sc.scheme == Scheme::StepWise ? to_string(sc.effective_rule()) : to_string(sc.scheme));
  manifest.write();
  return 0;
}

int cmd_eval(const RunContext& ctx, bool nll) {
  const auto& cfg = ctx.config;
  const auto& ec = cfg.eval;
  Manifest manifest(ctx, "eval");
  const std::string& samples_path = require_path(ec.samples, "eval.samples");
  const std::string& reference_path = require_path(ec.reference, "eval.reference");
  const Dataset samples = read_csv_file(samples_path);
  const Dataset reference = read_csv_file(reference_path);
  manifest.input(samples_path);
  manifest.input(reference_path);
  require(samples.dim() == reference.dim(), "eval: samples and reference differ in dimension");

  std::optional<ForestVpModel> model;
  if (!ec.model.empty()) {
    model = load_model(ec.model);
    manifest.input(ec.model);
  }
  if (nll && !model) throw DomainError("eval --nll needs eval.model");
  const MinMaxScaler scaler = model ? model->scaler() : MinMaxScaler::fit(reference.points);
  const Matrix fake = scaler.transform(samples.points);
  const Matrix real = scaler.transform(reference.points);

  std::vector<MetricReport> reports;
  for (std::uint64_t seed : ctx.seeds) {
    MetricReport r = compare_samples(fake, real, cfg.metrics, seed);
    r.rule = ec.rule;
    r.K = ec.K;
    r.validate();
    reports.push_back(std::move(r));
  }
  if (reports.size() > 1) {
    MetricReport mean;
    mean.rule = ec.rule;
    mean.K = ec.K;
    mean.n_eval = reports.front().n_eval;
    mean.seeds = ctx.seeds;
    auto avg = [&](auto member) -> std::optional<double> {
      if (!(reports.front().*member)) return std::nullopt;
      double s = 0.0;
      for (const auto& r : reports) s += *(r.*member);
      return s / static_cast<double>(reports.size());
    };
    mean.wasserstein1 = avg(&MetricReport::wasserstein1);
    mean.coverage = avg(&MetricReport::coverage);
    reports.push_back(std::move(mean));
  }

  if (ctx.format == Format::Json) {
    write_text(join(ctx.out_dir, "report.json"), json{{"format_version", 1}, {"reports", reports}}.dump(2) + "\n");
    manifest.output("report.json");
  } else {
    Table t{MetricReport::csv_columns(), {}};
    for (const auto& r : reports) {
      std::vector<json> row;
      for (auto& cell : r.csv_row()) row.emplace_back(cell);
      t.add(std::move(row));
    }
    manifest.output(write_table(ctx.out_dir, "report", t, Format::Csv));
  }

  if (nll) {
    std::vector<std::string> warnings;
    const auto values = ode_nll(*model, real, model->schedule(), cfg.nll.likelihood, ctx.seeds.front(), &warnings);
    Table t{{"index", "nll"}, {}};
    for (std::size_t i = 0; i < values.size(); ++i) t.add({static_cast<long>(i), values[i]});
    t.add({"mean", std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size())});
    manifest.output(write_table(ctx.out_dir, "nll", t, Format::Csv));
    manifest.set("nll_warnings", warnings);
    for (const auto& w : warnings) log(ctx, "warning: " + w);
  }
  manifest.write();
  return 0;
}

int cmd_sweep(const RunContext& ctx) {
  Manifest manifest(ctx, "sweep");
  manifest.input(require_path(ctx.config.data.path, "data.path"));
  const SweepResult r = run_sweep(ctx, ctx.seeds.front());

  Table table{{"K"}, {}}, cov{{"K"}, {}}, cells{{"K", "column", "split", "w1"}, {}};
  for (const auto& c : r.columns) {
    table.columns.push_back(c.name());
    cov.columns.push_back(c.name());
  }
  for (std::size_t ki = 0; ki < r.trees.size(); ++ki) {
    std::vector<json> row{r.trees[ki]}, crow{r.trees[ki]};
    for (std::size_t ci = 0; ci < r.columns.size(); ++ci) {
      row.emplace_back(r.w1[ki][ci]);
      crow.emplace_back(r.coverage[ki][ci]);
      for (std::size_t s = 0; s < r.w1_per_split[ki][ci].size(); ++s)
        cells.add({r.trees[ki], r.columns[ci].name(), static_cast<long>(s), r.w1_per_split[ki][ci][s]});
    }
    table.add(std::move(row));
    cov.add(std::move(crow));
  }
  Table profile{{"K", "column", "step", "t", "score_std"}, {}};
  for (std::size_t ki = 0; ki < r.trees.size(); ++ki)
    for (std::size_t ci = 0; ci < r.columns.size(); ++ci)
      for (std::size_t i = 0; i < r.score_std[ki][ci].size(); ++i)
        profile.add({r.trees[ki], r.columns[ci].name(), static_cast<long>(i), r.step_times[i], r.score_std[ki][ci][i]});

  manifest.output(write_table(ctx.out_dir, "sweep_w1", table, ctx.format));
  manifest.output(write_table(ctx.out_dir, "sweep_coverage", cov, ctx.format));
  manifest.output(write_table(ctx.out_dir, "sweep_cells", cells, ctx.format));
  manifest.output(write_table(ctx.out_dir, "score_std", profile, ctx.format));
  manifest.write();
  return 0;
}

int cmd_perturb(const RunContext& ctx) {
  Manifest manifest(ctx, "perturb");
  if (!ctx.config.perturb.model.empty()) manifest.input(ctx.config.perturb.model);
  Table t{{"seed", "tau", "ddsm_loss", "ddsm_stderr", "w1", "relative_perturbation"}, {}};
  for (std::uint64_t seed : ctx.seeds)
    for (const auto& row : run_perturb(ctx, seed))
      t.add({row.seed, row.tau, row.ddsm.value, row.ddsm.std_error, row.w1, row.relative_perturbation});
  manifest.output(write_table(ctx.out_dir, "perturb", t, ctx.format));
  manifest.write();
  return 0;
}

int cmd_verify_props(const RunContext& ctx) {
  Manifest manifest(ctx, "verify-props");
  const auto checks = run_property_checks(ctx.config.props, ctx.seeds.front());
  bool all = true;
  json report{{"format_version", 1}, {"checks", json::array()}};
  for (const auto& c : checks) {
    all = all && c.passed;
    report["checks"].push_back(
        {{"name", c.name}, {"passed", c.passed}, {"n", c.n}, {"worst", c.worst}, {"detail", c.detail}});
    log(ctx, std::string(c.passed ? "PASS " : "FAIL ") + c.name + ": " + c.detail);
  }
  report["passed"] = all;
  write_text(join(ctx.out_dir, "props.json"), report.dump(2) + "\n");
  manifest.output("props.json");
  manifest.set("passed", all);
  manifest.write();
  return all ? 0 : 1;
}

int cmd_diversity(const RunContext& ctx) {
  Manifest manifest(ctx, "diversity");
  if (!ctx.config.diversity.model.empty()) {
    manifest.input(ctx.config.diversity.model);
    manifest.input(require_path(ctx.config.data.path, "data.path"));
  }
  Table t{{"seed", "source", "epsilon", "K", "diversity"}, {}};
  for (std::uint64_t seed : ctx.seeds)
    for (const auto& row : run_diversity(ctx, seed))
      t.add({seed, row.source, std::isnan(row.epsilon) ? json(nullptr) : json(row.epsilon), row.K, row.diversity});
  manifest.output(write_table(ctx.out_dir, "diversity", t, ctx.format));
  manifest.write();
  return 0;
}

int cmd_nll(const RunContext& ctx) {
  Manifest manifest(ctx, "nll");
  if (!ctx.config.nll.points.empty()) manifest.input(ctx.config.nll.points);
  const NllResult r = run_nll(ctx, ctx.seeds.front());
  Table t{{"index", "nll", "gaussian_nll"}, {}};
  for (std::size_t i = 0; i < r.nll.size(); ++i) t.add({static_cast<long>(i), r.nll[i], r.gaussian_nll[i]});
  const auto n = static_cast<double>(r.nll.size());
  t.add({"mean", std::accumulate(r.nll.begin(), r.nll.end(), 0.0) / n,
         std::accumulate(r.gaussian_nll.begin(), r.gaussian_nll.end(), 0.0) / n});
  manifest.output(write_table(ctx.out_dir, "nll", t, ctx.format));
  manifest.set("warnings", r.warnings);
  manifest.write();
  return 0;
}

}  // namespace ensdiff
