#include "helpers.hpp"

#include "ensdiff/experiments.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ensdiff;
namespace fs = std::filesystem;

namespace {

const std::string kIris = std::string(ENSDIFF_DATA_DIR) + "/iris.csv";

RunContext small_context(const std::string& out) {
  RunContext ctx;
  ctx.config.data.path = kIris;
  ctx.config.model.n_levels = 6;
  ctx.config.model.n_rep = 4;
  ctx.config.model.forest.n_trees = 4;
  ctx.config.model.forest.tree.max_depth = 3;
  ctx.config.sampling.n_samples = 40;
  ctx.seeds = {7};
  ctx.out_dir = out;
  return ctx;
}

Dataset read(const std::string& path) { return read_csv_file(path); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ENSDIFF_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("Table CSV and JSON output") {
  Table t{{"a", "b", "c"}, {}};
  t.add({1, "x", nullptr});
  t.add({2.5, "y", 3});
  std::ostringstream os;
  t.write_csv(os);
  CHECK(os.str() == "a,b,c\n1,x,\n2.5,y,3\n");
  const auto j = t.to_json();
  CHECK(j["rows"][1]["a"] == 2.5);
  CHECK(j["rows"][0]["c"].is_null());
  CHECK_THROWS_AS(t.add({1}), DomainError);
  CHECK(parse_format("json") == Format::Json);
  CHECK_THROWS_AS(parse_format("xml"), DomainError);
}

TEST_CASE("seed derivation is stable and distinct") {
  CHECK(training_seed(1, 0) == training_seed(1, 0));
  CHECK(training_seed(1, 0) != training_seed(1, 1));
  CHECK(training_seed(1, 0) != training_seed(2, 0));
  CHECK(sampling_seed(1, 0, 0) != sampling_seed(1, 0, 1));
  CHECK(sampling_seed(1, 0, 0) != training_seed(1, 0));
}

TEST_CASE("train: byte-identical outputs for the same seed, and a complete manifest") {
  const auto a = testing::scratch_dir("train_a"), b = testing::scratch_dir("train_b");
  CHECK(cmd_train(small_context(a)) == 0);
  CHECK(cmd_train(small_context(b)) == 0);
  for (const char* f : {"model.json", "train.csv", "test.csv"})
    CHECK(testing::read_file(a + "/" + f) == testing::read_file(b + "/" + f));

  const auto m = nlohmann::json::parse(testing::read_file(a + "/manifest.json"));
  for (const char* key : {"format_version", "tool", "version", "command", "seeds", "config", "inputs", "outputs",
                          "wall_time_s", "data_hash"})
    CHECK(m.contains(key));
  CHECK(m["command"] == "train");
  CHECK(m["outputs"].size() == 3);
  CHECK(m["inputs"][0]["hash"] == m["data_hash"]);
  // The echoed config parses back into the same configuration.
  CHECK(nlohmann::json(m["config"].get<ExperimentConfig>()) == m["config"]);

  const auto train = read(a + "/train.csv"), test = read(a + "/test.csv");
  CHECK(train.points.rows() + test.points.rows() == 150);
  CHECK(test.points.rows() == 30);
  CHECK(train.feature_names == read(kIris).feature_names);
}

TEST_CASE("sample: rules, K = 1, empty batches, diagnostics") {
  const auto dir = testing::scratch_dir("sample");
  auto ctx = small_context(dir);
  CHECK(cmd_train(ctx) == 0);
  ctx.config.sampling.model = dir + "/model.json";

  auto sample_with = [&](const std::string& rule, int trees, long n) {
    auto c = ctx;
    c.out_dir = dir + "/" + rule + std::to_string(trees) + "_" + std::to_string(n);
    c.config.sampling.rule = parse_rule(rule);
    c.config.sampling.n_trees = trees;
    c.config.sampling.n_samples = n;
    REQUIRE(cmd_sample(c) == 0);
    return testing::read_file(c.out_dir + "/samples.csv");
  };
  CHECK(sample_with("arithmetic", 0, 40) != sample_with("dominant", 0, 40));
  CHECK(sample_with("arithmetic", 0, 40) == sample_with("arithmetic", 0, 40));
  const auto one = sample_with("arithmetic", 1, 40);
  for (const char* rule : {"geometric", "median", "dominant"}) CHECK(sample_with(rule, 1, 40) == one);

  const auto empty = sample_with("arithmetic", 0, 0);
  CHECK(empty == "sepal_length,sepal_width,petal_length,petal_width\n");

  auto c = ctx;
  c.out_dir = dir + "/diag";
  c.config.sampling.diagnostics = true;
  c.format = Format::Json;
  CHECK(cmd_sample(c) == 0);
  const auto diag = nlohmann::json::parse(testing::read_file(c.out_dir + "/diagnostics.json"));
  CHECK(diag["rows"].size() == 6);
  CHECK(read(c.out_dir + "/samples.csv").points.rows() == 40);

  c.config.sampling.n_trees = 99;
  CHECK_THROWS_AS(cmd_sample(c), DomainError);
}

TEST_CASE("eval: samples equal to the reference give W1 0 and coverage 1") {
  const auto dir = testing::scratch_dir("eval");
  auto ctx = small_context(dir);
  CHECK(cmd_train(ctx) == 0);
  ctx.config.eval.samples = dir + "/test.csv";
  ctx.config.eval.reference = dir + "/test.csv";
  ctx.config.eval.model = dir + "/model.json";
  ctx.format = Format::Json;
  ctx.seeds = {1, 2};
  CHECK(cmd_eval(ctx, false) == 0);
  const auto rep = nlohmann::json::parse(testing::read_file(dir + "/report.json"));
  REQUIRE(rep["reports"].size() == 3);
  for (const auto& r : rep["reports"]) {
    CHECK(r["wasserstein1"].get<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r["coverage"].get<double>() == 1.0);
  }
  CHECK(rep["reports"][2]["metadata"]["seeds"].size() == 2);

  ctx.config.eval.model.clear();
  CHECK_THROWS_AS(cmd_eval(ctx, true), DomainError);
}

TEST_CASE("perturb: tau 0 is the baseline, perturbation size is tau, loss grows with tau") {
  RunContext ctx;
  ctx.config.perturb.tau = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  ctx.config.perturb.n_mc = 20000;
  ctx.config.perturb.n_samples = 50;
  ctx.config.perturb.n_steps = 10;
  const auto rows = run_perturb(ctx, 3);
  REQUIRE(rows.size() == 11);
  CHECK(rows[0].relative_perturbation == 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].relative_perturbation == doctest::Approx(rows[i].tau).epsilon(1e-12));
    CHECK(rows[i].ddsm.value > rows[i - 1].ddsm.value);
  }
  // The exact score: the loss is the irreducible part, below d = 2.
  CHECK(rows[0].ddsm.value < 2.0);
  const auto again = run_perturb(ctx, 3);
  CHECK(again[5].ddsm.value == rows[5].ddsm.value);
  CHECK(again[5].w1 == rows[5].w1);
}

TEST_CASE("verify-props, diversity and nll write their tables") {
  const auto dir = testing::scratch_dir("misc");
  RunContext ctx;
  ctx.out_dir = dir;
  ctx.config.props.n_gap_draws = 500;
  ctx.config.props.n_minkowski_draws = 100;
  ctx.config.props.n_jensen_sets = 10;
  ctx.config.props.n_poe_samples = 20000;
  CHECK(cmd_verify_props(ctx) == 0);
  const auto props = nlohmann::json::parse(testing::read_file(dir + "/props.json"));
  CHECK(props["checks"].size() == 6);

  ctx.config.diversity.n_points = 100;
  CHECK(cmd_diversity(ctx) == 0);
  const auto div = testing::read_file(dir + "/diversity.csv");
  CHECK(std::count(div.begin(), div.end(), '\n') == 6);

  ctx.config.nll.n_points = 5;
  ctx.config.nll.likelihood.n_ode_steps = 200;
  const auto nll = run_nll(ctx, 0);
  REQUIRE(nll.nll.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(nll.nll[i] - nll.gaussian_nll[i]) < 1e-3);
}

TEST_CASE("CLI exit codes") {
  const auto dir = testing::scratch_dir("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train --format xml --out " + dir) == 2);
  CHECK(run_cli("train --config " + dir + "/missing.json") == 2);
  std::ofstream(dir + "/bad.json") << R"({"model": {"n_tree": 3}})";
  CHECK(run_cli("train --config " + dir + "/bad.json") == 2);
  // No data path configured.
  CHECK(run_cli("train --out " + dir) == 2);
  std::ofstream(dir + "/missing_data.json") << R"({"data": {"path": "/nonexistent/iris.csv"}})";
  CHECK(run_cli("train --config " + dir + "/missing_data.json --out " + dir) == 2);

  std::ofstream(dir + "/props.json") << R"({"props": {"n_gap_draws": 200, "n_minkowski_draws": 50,
                                           "n_jensen_sets": 5, "n_poe_samples": 20000}})";
  CHECK(run_cli("verify-props --config " + dir + "/props.json --seed 2 --format json --out " + dir + "/p") == 0);
  CHECK(fs::exists(dir + "/p/props.json"));
  CHECK(fs::exists(dir + "/p/manifest.json"));
}
