#pragma once

#include "ensdiff/aggregate.hpp"
#include "ensdiff/diffusion.hpp"
#include "ensdiff/forest.hpp"
#include "ensdiff/likelihood.hpp"
#include "ensdiff/metrics.hpp"
#include "ensdiff/sampler.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace ensdiff {

inline constexpr const char* kVersion = "0.1.0";

// One column of a sweep table: a step-wise rule or a trajectory scheme.
struct Column {
  Scheme scheme = Scheme::StepWise;
  AggregationRule rule = AggregationRule::Arithmetic;

  std::string name() const;
  static Column parse(std::string_view name);
};

struct DataSection {
  std::string path;
  double test_fraction = 0.2;
};

struct ModelSection {
  NoiseSchedule schedule;
  int n_levels = 50;
  double t_min = 1e-3;
  int n_rep = 100;
  ForestConfig forest;

  TimeGrid grid() const { return TimeGrid(n_levels, t_min); }
};

struct SamplingSection {
  std::string model;  // bundle path for `sample`
  Scheme scheme = Scheme::StepWise;
  std::optional<AggregationRule> rule;  // step-wise only
  long n_samples = 100;
  int n_trees = 0;  // 0: all trees of the bundle
  int n_steps = 0;  // 0: the bundle's own grid
  std::optional<double> early_switch;
  bool clip = false;  // clamp generated points to the training range
  bool diagnostics = false;

  AggregationRule effective_rule() const { return rule.value_or(AggregationRule::Arithmetic); }
};

struct MetricsSection {
  bool wasserstein = true;
  bool coverage = true;
  int coverage_k = 5;
  int w1_max_n = 500;
  Weighting weighting = Weighting::Variance;
};

struct EvalSection {
  std::string samples;
  std::string reference;
  std::string model;  // optional; its scaler defines the metric space
  std::string rule;   // labels copied into the report
  long K = 0;
};

struct SweepSection {
  std::vector<int> trees{1, 25, 50, 100, 500, 1000};
  std::vector<Column> columns{Column::parse("arithmetic"), Column::parse("geometric"), Column::parse("dominant"),
                              Column::parse("median"), Column::parse("alternating")};
  int n_splits = 3;
  int n_batches = 5;  // generated batches (test-set sized) averaged per cell
};

struct PerturbSection {
  std::vector<double> tau{0.0, 0.25, 0.5, 1.0};
  Vector alpha = Vector::Ones(2);
  std::string model;  // empty: analytic Gaussian score
  int n_data = 2000;
  int n_mc = 50000;
  long n_samples = 500;
  int n_steps = 50;
};

struct DiversitySection {
  std::vector<double> epsilon{0.0, 0.1, 0.2, 0.4, 0.8};
  int K = 8;
  Vector alpha = Vector::Ones(2);
  std::string model;  // set: per-K tree diversity of this bundle instead
  std::vector<int> trees{2, 10, 100};
  int n_points = 2000;
};

struct NllSection {
  Vector alpha = Vector::Ones(3);
  std::string points;  // CSV; empty: draw n_points from N(0, diag(alpha))
  int n_points = 100;
  int K = 1;  // K > 1: perturbed ensemble of the analytic score
  double epsilon = 0.0;
  AggregationRule rule = AggregationRule::Arithmetic;
  LikelihoodConfig likelihood;
};

struct PropsSection {
  int n_gap_draws = 10000;
  int n_minkowski_draws = 1000;
  int n_jensen_sets = 100;
  long n_poe_samples = 100000;
};

struct ExperimentConfig {
  DataSection data;
  ModelSection model;
  SamplingSection sampling;
  MetricsSection metrics;
  EvalSection eval;
  SweepSection sweep;
  PerturbSection perturb;
  DiversitySection diversity;
  NllSection nll;
  PropsSection props;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";

  void validate() const;
};

// Unknown keys anywhere are rejected with the offending path in the message.
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

}  // namespace ensdiff
