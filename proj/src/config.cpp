#include "ensdiff/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ensdiff {

using nlohmann::json;

std::string Column::name() const {
  return scheme == Scheme::StepWise ? to_string(rule) : to_string(scheme);
}

Column Column::parse(std::string_view name) {
  for (auto r : kAllRules)
    if (to_string(r) == name) return {Scheme::StepWise, r};
  const Scheme s = parse_scheme(name);
  if (s == Scheme::StepWise) throw DomainError("column 'stepwise' needs a rule name instead");
  return {s, AggregationRule::Arithmetic};
}

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw DomainError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw DomainError(where(key) + ": " + e.what());
    }
  }

  void get_vector(const char* key, Vector& out) {
    std::vector<double> v;
    bool present = j_.contains(key);
    get(key, v);
    if (present) out = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void get_optional(const char* key, std::optional<double>& out) {
    used_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    double v = 0.0;
    get(key, v);
    out = v;
  }

  template <typename Parse>
  void get_enum(const char* key, Parse&& parse) {
    std::string name;
    if (!j_.contains(key) || j_.at(key).is_null()) {
      used_.insert(key);
      return;
    }
    get(key, name);
    try {
      parse(name);
    } catch (const DomainError& e) {
      throw DomainError(where(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) throw DomainError("unknown configuration key '" + where(item.key()) + "'");
  }

 private:
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string to_string(DivergenceKind k) { return k == DivergenceKind::Hutchinson ? "hutchinson" : "exact"; }
std::string to_string(Probe p) { return p == Probe::Gaussian ? "gaussian" : "rademacher"; }

}  // namespace

void from_json(const json& j, ExperimentConfig& c) {
  Reader root(j, "");
  {
    Reader r = root.child("data");
    r.get("path", c.data.path);
    r.get("test_fraction", c.data.test_fraction);
    r.finish();
  }
  {
    Reader r = root.child("model");
    double beta_min = c.model.schedule.beta_min, beta_max = c.model.schedule.beta_max;
    r.get("beta_min", beta_min);
    r.get("beta_max", beta_max);
    c.model.schedule = NoiseSchedule(beta_min, beta_max);
    r.get("n_levels", c.model.n_levels);
    r.get("t_min", c.model.t_min);
    r.get("n_rep", c.model.n_rep);
    r.get("n_trees", c.model.forest.n_trees);
    r.get("max_depth", c.model.forest.tree.max_depth);
    r.get("min_samples_leaf", c.model.forest.tree.min_samples_leaf);
    r.get("feature_subsample", c.model.forest.tree.feature_subsample);
    r.get("bootstrap", c.model.forest.bootstrap);
    r.finish();
  }
  {
    Reader r = root.child("sampling");
    r.get("model", c.sampling.model);
    r.get_enum("scheme", [&](const std::string& s) { c.sampling.scheme = parse_scheme(s); });
    r.get_enum("rule", [&](const std::string& s) { c.sampling.rule = parse_rule(s); });
    r.get("n_samples", c.sampling.n_samples);
    r.get("n_trees", c.sampling.n_trees);
    r.get("n_steps", c.sampling.n_steps);
    r.get_optional("early_switch", c.sampling.early_switch);
    r.get("clip", c.sampling.clip);
    r.get("diagnostics", c.sampling.diagnostics);
    r.finish();
  }
  {
    Reader r = root.child("metrics");
    r.get("wasserstein", c.metrics.wasserstein);
    r.get("coverage", c.metrics.coverage);
    r.get("coverage_k", c.metrics.coverage_k);
    r.get("w1_max_n", c.metrics.w1_max_n);
    r.get_enum("weighting", [&](const std::string& s) { c.metrics.weighting = parse_weighting(s); });
    r.finish();
  }
  {
    Reader r = root.child("eval");
    r.get("samples", c.eval.samples);
    r.get("reference", c.eval.reference);
    r.get("model", c.eval.model);
    r.get("rule", c.eval.rule);
    r.get("K", c.eval.K);
    r.finish();
  }
  {
    Reader r = root.child("sweep");
    r.get("trees", c.sweep.trees);
    std::vector<std::string> columns;
    const bool has_columns = r.has("columns");
    r.get("columns", columns);
    if (has_columns) {
      c.sweep.columns.clear();
      for (const auto& name : columns) {
        try {
          c.sweep.columns.push_back(Column::parse(name));
        } catch (const DomainError& e) {
          throw DomainError(std::string("sweep.columns: ") + e.what());
        }
      }
    }
    r.get("n_splits", c.sweep.n_splits);
    r.get("n_batches", c.sweep.n_batches);
    r.finish();
  }
  {
    Reader r = root.child("perturb");
    r.get("tau", c.perturb.tau);
    r.get_vector("alpha", c.perturb.alpha);
    r.get("model", c.perturb.model);
    r.get("n_data", c.perturb.n_data);
    r.get("n_mc", c.perturb.n_mc);
    r.get("n_samples", c.perturb.n_samples);
    r.get("n_steps", c.perturb.n_steps);
    r.finish();
  }
  {
    Reader r = root.child("diversity");
    r.get("epsilon", c.diversity.epsilon);
    r.get("K", c.diversity.K);
    r.get_vector("alpha", c.diversity.alpha);
    r.get("model", c.diversity.model);
    r.get("trees", c.diversity.trees);
    r.get("n_points", c.diversity.n_points);
    r.finish();
  }
  {
    Reader r = root.child("nll");
    r.get_vector("alpha", c.nll.alpha);
    r.get("points", c.nll.points);
    r.get("n_points", c.nll.n_points);
    r.get("K", c.nll.K);
    r.get("epsilon", c.nll.epsilon);
    r.get_enum("rule", [&](const std::string& s) { c.nll.rule = parse_rule(s); });
    auto& l = c.nll.likelihood;
    r.get("n_ode_steps", l.n_ode_steps);
    r.get_enum("divergence", [&](const std::string& s) {
      if (s == "exact") l.divergence = DivergenceKind::ExactFiniteDifference;
      else if (s == "hutchinson") l.divergence = DivergenceKind::Hutchinson;
      else throw DomainError("expected 'exact' or 'hutchinson'");
    });
    r.get("h", l.h);
    r.get("n_probes", l.n_probes);
    r.get_enum("probe", [&](const std::string& s) {
      if (s == "rademacher") l.probe = Probe::Rademacher;
      else if (s == "gaussian") l.probe = Probe::Gaussian;
      else throw DomainError("expected 'rademacher' or 'gaussian'");
    });
    r.get("t_min", l.t_min);
    r.get("blowup_norm", l.blowup_norm);
    r.finish();
  }
  {
    Reader r = root.child("props");
    r.get("n_gap_draws", c.props.n_gap_draws);
    r.get("n_minkowski_draws", c.props.n_minkowski_draws);
    r.get("n_jensen_sets", c.props.n_jensen_sets);
    r.get("n_poe_samples", c.props.n_poe_samples);
    r.finish();
  }
  root.get("seeds", c.seeds);
  root.get("output_dir", c.output_dir);
  root.finish();
  c.validate();
}

void to_json(json& j, const ExperimentConfig& c) {
  std::vector<std::string> columns;
  for (const auto& col : c.sweep.columns) columns.push_back(col.name());
  const auto& l = c.nll.likelihood;
  j = json{
      {"data", {{"path", c.data.path}, {"test_fraction", c.data.test_fraction}}},
      {"model",
       {{"beta_min", c.model.schedule.beta_min},
        {"beta_max", c.model.schedule.beta_max},
        {"n_levels", c.model.n_levels},
        {"t_min", c.model.t_min},
        {"n_rep", c.model.n_rep},
        {"n_trees", c.model.forest.n_trees},
        {"max_depth", c.model.forest.tree.max_depth},
        {"min_samples_leaf", c.model.forest.tree.min_samples_leaf},
        {"feature_subsample", c.model.forest.tree.feature_subsample},
        {"bootstrap", c.model.forest.bootstrap}}},
      {"sampling",
       {{"model", c.sampling.model},
        {"scheme", to_string(c.sampling.scheme)},
        {"rule", c.sampling.rule ? json(to_string(*c.sampling.rule)) : json(nullptr)},
        {"n_samples", c.sampling.n_samples},
        {"n_trees", c.sampling.n_trees},
        {"n_steps", c.sampling.n_steps},
        {"early_switch", optional_json(c.sampling.early_switch)},
        {"clip", c.sampling.clip},
        {"diagnostics", c.sampling.diagnostics}}},
      {"metrics",
       {{"wasserstein", c.metrics.wasserstein},
        {"coverage", c.metrics.coverage},
        {"coverage_k", c.metrics.coverage_k},
        {"w1_max_n", c.metrics.w1_max_n},
        {"weighting", to_string(c.metrics.weighting)}}},
      {"eval",
       {{"samples", c.eval.samples},
        {"reference", c.eval.reference},
        {"model", c.eval.model},
        {"rule", c.eval.rule},
        {"K", c.eval.K}}},
      {"sweep",
       {{"trees", c.sweep.trees},
        {"columns", columns},
        {"n_splits", c.sweep.n_splits},
        {"n_batches", c.sweep.n_batches}}},
      {"perturb",
       {{"tau", c.perturb.tau},
        {"alpha", as_std(c.perturb.alpha)},
        {"model", c.perturb.model},
        {"n_data", c.perturb.n_data},
        {"n_mc", c.perturb.n_mc},
        {"n_samples", c.perturb.n_samples},
        {"n_steps", c.perturb.n_steps}}},
      {"diversity",
       {{"epsilon", c.diversity.epsilon},
        {"K", c.diversity.K},
        {"alpha", as_std(c.diversity.alpha)},
        {"model", c.diversity.model},
        {"trees", c.diversity.trees},
        {"n_points", c.diversity.n_points}}},
      {"nll",
       {{"alpha", as_std(c.nll.alpha)},
        {"points", c.nll.points},
        {"n_points", c.nll.n_points},
        {"K", c.nll.K},
        {"epsilon", c.nll.epsilon},
        {"rule", to_string(c.nll.rule)},
        {"n_ode_steps", l.n_ode_steps},
        {"divergence", to_string(l.divergence)},
        {"h", l.h},
        {"n_probes", l.n_probes},
        {"probe", to_string(l.probe)},
        {"t_min", l.t_min},
        {"blowup_norm", l.blowup_norm}}},
      {"props",
       {{"n_gap_draws", c.props.n_gap_draws},
        {"n_minkowski_draws", c.props.n_minkowski_draws},
        {"n_jensen_sets", c.props.n_jensen_sets},
        {"n_poe_samples", c.props.n_poe_samples}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir}};
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw DomainError("config: " + msg);
  };
  check(data.test_fraction >= 0.0 && data.test_fraction < 1.0, "data.test_fraction must lie in [0, 1)");
  check(model.n_levels >= 1, "model.n_levels must be >= 1");
  check(model.t_min > 0.0 && model.t_min < 1.0, "model.t_min must lie in (0, 1)");
  check(model.n_rep >= 1, "model.n_rep must be >= 1");
  check(model.forest.n_trees >= 1, "model.n_trees must be >= 1");
  check(model.forest.tree.max_depth >= 0, "model.max_depth must be >= 0");
  check(model.forest.tree.min_samples_leaf >= 1, "model.min_samples_leaf must be >= 1");
  check(model.forest.tree.feature_subsample >= 0, "model.feature_subsample must be >= 0");
  check(sampling.n_samples >= 0, "sampling.n_samples must be >= 0");
  check(sampling.n_trees >= 0, "sampling.n_trees must be >= 0");
  check(sampling.n_steps >= 0, "sampling.n_steps must be >= 0");
  check(!(sampling.rule && sampling.scheme != Scheme::StepWise),
        "sampling.rule applies only to the stepwise scheme (got scheme '" + to_string(sampling.scheme) + "')");
  check(!(sampling.early_switch && sampling.scheme != Scheme::StepWise),
        "sampling.early_switch requires the stepwise scheme");
  check(metrics.coverage_k >= 1, "metrics.coverage_k must be >= 1");
  check(metrics.w1_max_n >= 1, "metrics.w1_max_n must be >= 1");
  check(!sweep.trees.empty() && !sweep.columns.empty(), "sweep.trees and sweep.columns must be non-empty");
  for (int K : sweep.trees) check(K >= 1, "sweep.trees entries must be >= 1");
  check(sweep.n_splits >= 1 && sweep.n_batches >= 1, "sweep.n_splits and sweep.n_batches must be >= 1");
  check(!perturb.tau.empty(), "perturb.tau must be non-empty");
  for (double t : perturb.tau) check(t >= 0.0 && t <= 1.0, "perturb.tau values must lie in [0, 1]");
  check(perturb.alpha.size() >= 1 && (perturb.alpha.array() > 0.0).all(), "perturb.alpha must be positive");
  check(perturb.n_data >= 1 && perturb.n_mc >= 1 && perturb.n_samples >= 1 && perturb.n_steps >= 1,
        "perturb sizes must be >= 1");
  for (double e : diversity.epsilon) check(e >= 0.0, "diversity.epsilon values must be >= 0");
  check(diversity.K >= 2, "diversity.K must be >= 2");
  check(diversity.alpha.size() >= 1 && (diversity.alpha.array() > 0.0).all(), "diversity.alpha must be positive");
  for (int K : diversity.trees) check(K >= 2, "diversity.trees entries must be >= 2");
  check(diversity.n_points >= 1, "diversity.n_points must be >= 1");
  check(nll.alpha.size() >= 1 && (nll.alpha.array() > 0.0).all(), "nll.alpha must be positive");
  check(nll.n_points >= 1 && nll.K >= 1 && nll.epsilon >= 0.0, "nll sizes must be >= 1 and epsilon >= 0");
  try {
    nll.likelihood.validate();
  } catch (const DomainError& e) {
    throw DomainError(std::string("config: nll: ") + e.what());
  }
  check(props.n_gap_draws >= 1 && props.n_minkowski_draws >= 1 && props.n_jensen_sets >= 1 &&
            props.n_poe_samples >= 2,
        "props sizes must be positive");
  check(!seeds.empty(), "seeds must be non-empty");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("config is not valid JSON: ") + e.what());
  }
  return j.get<ExperimentConfig>();
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ensdiff
