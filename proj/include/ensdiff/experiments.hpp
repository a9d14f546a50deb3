#pragma once

#include "ensdiff/config.hpp"
#include "ensdiff/dataset.hpp"
#include "ensdiff/forest_vp.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ensdiff {

enum class Format { Csv, Json };

Format parse_format(std::string_view name);

// A small column-oriented result table. Cells are JSON scalars (number,
// string or null); CSV prints null as an empty field.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  void add(std::vector<nlohmann::json> row);
  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.json`; returns the file name.
std::string write_table(const std::string& dir, const std::string& stem, const Table& table, Format format);

// Everything a subcommand needs besides its own config section.
struct RunContext {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";
  Format format = Format::Csv;
  std::ostream* log = nullptr;  // progress messages; null for silence
};

// Output directory bookkeeping: every command ends by writing manifest.json
// with the config echo, tool version, input hashes, output hashes and the
// wall time.
class Manifest {
 public:
  Manifest(const RunContext& ctx, std::string command);

  void input(const std::string& path);
  void output(const std::string& file_name);  // relative to the output directory
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
  void write() const;

 private:
  const RunContext& ctx_;
  std::string command_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  nlohmann::json extra_ = nlohmann::json::object();
  double started_;
};

// Streams used by every command that splits and trains, so that `train`
// with seed s reproduces split 0 of `sweep` with seed s.
Split split_for(const MatrixRef& points, double test_fraction, std::uint64_t seed, int split);
std::uint64_t training_seed(std::uint64_t seed, int split);
std::uint64_t sampling_seed(std::uint64_t seed, int split, int batch);

// Scales with the train split's scaler and trains one Forest-VP model.
ForestVpModel train_on_split(const ModelSection& model, const Split& split, std::vector<std::string> feature_names,
                             std::uint64_t seed, int split_index);

// Generated points in scaled units; clip projects them onto [-1, 1]^d.
SampleBatch generate(const ScoreEnsemble& ensemble, const NoiseSchedule& schedule, const TimeGrid& grid,
                     const SamplingSection& sampling, Eigen::Index n, std::uint64_t seed, bool record_scores);

// W1 on equal-size subsamples of at most max_n rows each, and coverage of
// `real` by `fake`, both in the coordinates given.
MetricReport compare_samples(const MatrixRef& fake, const MatrixRef& real, const MetricsSection& metrics,
                             std::uint64_t seed);

struct SweepResult {
  std::vector<int> trees;
  std::vector<Column> columns;
  // [K index][column index], means over splits and batches.
  std::vector<std::vector<double>> w1, coverage;
  // [K][column][split], means over batches.
  std::vector<std::vector<std::vector<double>>> w1_per_split;
  // [K][column] -> per-step score standard deviation, mean over splits.
  std::vector<std::vector<std::vector<double>>> score_std;
  std::vector<double> step_times;
};

SweepResult run_sweep(const RunContext& ctx, std::uint64_t seed);

struct PerturbRow {
  std::uint64_t seed = 0;
  double tau = 0.0;
  Estimate ddsm;
  double w1 = 0.0;
  double relative_perturbation = 0.0;  // mean of ||s_tau - s|| / ||s|| over the loss batch
  Vector terms;                        // per-draw loss summands (shared draws across tau)
};

std::vector<PerturbRow> run_perturb(const RunContext& ctx, std::uint64_t seed);

struct PropCheck {
  std::string name;
  bool passed = false;
  long n = 0;
  double worst = 0.0;  // the statistic closest to violating the check
  std::string detail;
};

// Forward-marginal moments, the commutativity-gap sweep, equality on equal
// variances, reverse Minkowski, the leave-one-out Jensen inequality and the
// PoE-versus-diffusion simulation.
std::vector<PropCheck> run_property_checks(const PropsSection& props, std::uint64_t seed);

PropCheck check_forward_moments(long n, std::uint64_t seed);
PropCheck check_gap_sweep(long n, std::uint64_t seed);
PropCheck check_equal_alpha(long n, std::uint64_t seed);
PropCheck check_reverse_minkowski(long n, std::uint64_t seed);
PropCheck check_jensen(long n, std::uint64_t seed);
PropCheck check_poe_simulation(long n, std::uint64_t seed);

struct DiversityRow {
  std::string source;  // "analytic" or "forest"
  double epsilon = 0.0;
  long K = 0;
  double diversity = 0.0;
};

std::vector<DiversityRow> run_diversity(const RunContext& ctx, std::uint64_t seed);

struct NllResult {
  Matrix points;
  std::vector<double> nll;
  std::vector<double> gaussian_nll;  // closed form for the base Gaussian at t_min
  std::vector<std::string> warnings;
};

NllResult run_nll(const RunContext& ctx, std::uint64_t seed);

// Negative log-likelihood of `points` under `score` via the probability-flow
// ODE, one probe stream per point.
std::vector<double> ode_nll(const ScorePredictor& score, const MatrixRef& points, const NoiseSchedule& schedule,
                            const LikelihoodConfig& config, std::uint64_t seed, std::vector<std::string>* warnings);

// Subcommands. Each writes its outputs and manifest.json into ctx.out_dir
// and returns the process exit code.
int cmd_train(const RunContext& ctx);
int cmd_sample(const RunContext& ctx);
int cmd_eval(const RunContext& ctx, bool nll);
int cmd_sweep(const RunContext& ctx);
int cmd_perturb(const RunContext& ctx);
int cmd_verify_props(const RunContext& ctx);
int cmd_diversity(const RunContext& ctx);
int cmd_nll(const RunContext& ctx);

}  // namespace ensdiff
