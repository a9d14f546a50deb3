#include "ensdiff/forest_vp.hpp"

#include "ensdiff/parallel.hpp"

#include <fstream>

namespace ensdiff {

ForestVpModel::ForestVpModel(NoiseSchedule schedule, TimeGrid grid, int n_rep, std::vector<RandomForest> forests,
                             MinMaxScaler scaler, std::vector<std::string> feature_names)
    : schedule_(schedule),
      grid_(std::move(grid)),
      n_rep_(n_rep),
      forests_(std::move(forests)),
      scaler_(std::move(scaler)),
      feature_names_(std::move(feature_names)) {
  require(!forests_.empty(), "ForestVpModel: no forests");
  require(static_cast<int>(forests_.size()) == grid_.n_steps(), "ForestVpModel: one forest per grid node required");
  for (const auto& f : forests_) {
    require(f.n_trees() == forests_.front().n_trees(), "ForestVpModel: levels disagree on tree count");
    require(f.input_dim() == f.output_dim() && f.input_dim() == forests_.front().input_dim(),
            "ForestVpModel: every forest must map d inputs to d outputs");
  }
}

Vector ForestVpModel::evaluate(const VectorRef& x, double t) const {
  return forests_[static_cast<std::size_t>(level(t))].predict_mean(x);
}

Matrix ForestVpModel::members(const VectorRef& x, double t) const {
  return forests_[static_cast<std::size_t>(level(t))].predict_per_tree(x);
}

Vector ForestVpModel::member(std::size_t k, const VectorRef& x, double t) const {
  return forests_[static_cast<std::size_t>(level(t))].predict_tree(k, x);
}

ForestVpModel ForestVpModel::truncated(std::size_t K) const {
  std::vector<RandomForest> forests;
  forests.reserve(forests_.size());
  for (const auto& f : forests_) forests.push_back(f.truncated(K));
  return {schedule_, grid_, n_rep_, std::move(forests), scaler_, feature_names_};
}

TreePrefix::TreePrefix(const ForestVpModel& model, std::size_t K) : model_(model), K_(K) {
  require(K >= 1 && K <= model.size(), "TreePrefix: K out of range");
}

Vector TreePrefix::evaluate(const VectorRef& x, double t) const {
  return members(x, t).colwise().mean().transpose();
}

Matrix TreePrefix::members(const VectorRef& x, double t) const {
  return model_.forests()[static_cast<std::size_t>(model_.level(t))].predict_per_tree(x, K_);
}

Vector TreePrefix::member(std::size_t k, const VectorRef& x, double t) const {
  require(k < K_, "TreePrefix: member out of range");
  return model_.member(k, x, t);
}

LevelTrainingSet build_level_set(const MatrixRef& data, const NoiseSchedule& schedule, double t, int n_rep,
                                 Stream stream) {
  require(n_rep >= 1, "build_level_set: n_rep must be >= 1");
  const Eigen::Index n = data.rows(), d = data.cols();
  LevelTrainingSet set;
  set.x0 = data.replicate(n_rep, 1);
  const Matrix z = stream.normal_matrix(n * n_rep, d);
  const double sigma = marginal_std(schedule, t);
  set.inputs = forward_sample(schedule, set.x0, t, z);
  set.targets = -z / sigma;
  return set;
}

ForestVpModel train_forest_vp(const MatrixRef& data, const NoiseSchedule& schedule, const TimeGrid& grid,
                              const ForestVpConfig& config, std::uint64_t seed, MinMaxScaler scaler,
                              std::vector<std::string> feature_names) {
  if (data.rows() < 2) throw DomainError("train_forest_vp: need at least two data points");
  require(data.allFinite(), "train_forest_vp: non-finite data");
  require(config.n_rep >= 1, "train_forest_vp: n_rep must be >= 1");
  const Stream root(seed);
  std::vector<RandomForest> forests(static_cast<std::size_t>(grid.n_steps()));
  parallel_for(forests.size(), [&](std::size_t i) {
    const Stream level = root.child(i);
    const auto set = build_level_set(data, schedule, grid[static_cast<int>(i)], config.n_rep, level.child(0));
    forests[i] = fit_forest(set.inputs, set.targets, config.forest, level.child(1).key());
  });
  return {schedule, grid, config.n_rep, std::move(forests), std::move(scaler), std::move(feature_names)};
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = nlohmann::json{{"beta_min", s.beta_min}, {"beta_max", s.beta_max}, {"kind", "linear"}};
}

void from_json(const nlohmann::json& j, NoiseSchedule& s) {
  s = NoiseSchedule(j.at("beta_min").get<double>(), j.at("beta_max").get<double>());
}

void to_json(nlohmann::json& j, const ForestVpModel& m) {
  const auto& lo = m.scaler_.lo();
  const auto& hi = m.scaler_.hi();
  j = nlohmann::json{{"format_version", 1},
                     {"kind", "forest_vp"},
                     {"schedule", m.schedule_},
                     {"grid", m.grid_.nodes()},
                     {"n_rep", m.n_rep_},
                     {"feature_names", m.feature_names_},
                     {"scaler",
                      {{"lo", std::vector<double>(lo.data(), lo.data() + lo.size())},
                       {"hi", std::vector<double>(hi.data(), hi.data() + hi.size())}}},
                     {"forests", m.forests_}};
}

void from_json(const nlohmann::json& j, ForestVpModel& m) {
  require(j.at("format_version").get<int>() == 1, "model json: unsupported format_version");
  require(j.at("kind").get<std::string>() == "forest_vp", "model json: not a forest_vp bundle");
  auto lo = j.at("scaler").at("lo").get<std::vector<double>>();
  auto hi = j.at("scaler").at("hi").get<std::vector<double>>();
  MinMaxScaler scaler;
  if (!lo.empty())
    scaler = MinMaxScaler(Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                          Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())));
  m = ForestVpModel(j.at("schedule").get<NoiseSchedule>(), TimeGrid(j.at("grid").get<std::vector<double>>()),
                    j.at("n_rep").get<int>(), j.at("forests").get<std::vector<RandomForest>>(), std::move(scaler),
                    j.at("feature_names").get<std::vector<std::string>>());
}

void save_model(const ForestVpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << nlohmann::json(model).dump() << '\n';
}

ForestVpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return nlohmann::json::parse(in).get<ForestVpModel>();
}

}  // namespace ensdiff
