#pragma once

#include "ensdiff/dataset.hpp"
#include "ensdiff/diffusion.hpp"
#include "ensdiff/forest.hpp"
#include "ensdiff/score.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ensdiff {

struct ForestVpConfig {
  int n_rep = 100;  // noised copies of every training point per level
  ForestConfig forest;
};

// Score model with one random forest per noise level. The forest at level i
// regresses the conditional score -z / sqrt(1 - gamma(t_i)) on noised points
// x_t = sqrt(gamma) x0 + sqrt(1 - gamma) z. Queries at time t use the forest
// of the nearest grid node (times below t_min use level 0).
//
// As a ScoreEnsemble the members are the individual trees of the selected
// level's forest; as a ScorePredictor it returns their mean.
class ForestVpModel final : public ScorePredictor, public ScoreEnsemble {
 public:
  ForestVpModel() = default;
  ForestVpModel(NoiseSchedule schedule, TimeGrid grid, int n_rep, std::vector<RandomForest> forests,
                MinMaxScaler scaler = {}, std::vector<std::string> feature_names = {});

  Eigen::Index dim() const override { return forests_.front().output_dim(); }
  std::size_t size() const override { return forests_.front().n_trees(); }

  Vector evaluate(const VectorRef& x, double t) const override;
  Matrix members(const VectorRef& x, double t) const override;
  Vector member(std::size_t k, const VectorRef& x, double t) const override;

  Vector forest_score(const VectorRef& x, double t) const { return evaluate(x, t); }
  Matrix forest_score_per_tree(const VectorRef& x, double t) const { return members(x, t); }

  int level(double t) const { return grid_.nearest(t); }

  // Same model restricted to the first K trees of every level.
  ForestVpModel truncated(std::size_t K) const;

  const NoiseSchedule& schedule() const { return schedule_; }
  const TimeGrid& grid() const { return grid_; }
  int n_rep() const { return n_rep_; }
  const std::vector<RandomForest>& forests() const { return forests_; }
  const MinMaxScaler& scaler() const { return scaler_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  friend void to_json(nlohmann::json& j, const ForestVpModel& m);
  friend void from_json(const nlohmann::json& j, ForestVpModel& m);

 private:
  NoiseSchedule schedule_;
  TimeGrid grid_;
  int n_rep_ = 0;
  std::vector<RandomForest> forests_;
  MinMaxScaler scaler_;
  std::vector<std::string> feature_names_;
};

// The first K trees of every level of a model, without copying. The model
// must outlive the view.
class TreePrefix final : public ScorePredictor, public ScoreEnsemble {
 public:
  TreePrefix(const ForestVpModel& model, std::size_t K);

  Eigen::Index dim() const override { return model_.dim(); }
  std::size_t size() const override { return K_; }
  Vector evaluate(const VectorRef& x, double t) const override;
  Matrix members(const VectorRef& x, double t) const override;
  Vector member(std::size_t k, const VectorRef& x, double t) const override;

 private:
  const ForestVpModel& model_;
  std::size_t K_;
};

// Noised regression set of one level: rows of `inputs` are x_t, rows of
// `targets` the conditional scores, with x0 repeated n_rep times (rep-major).
struct LevelTrainingSet {
  Matrix x0;
  Matrix inputs;
  Matrix targets;
};

LevelTrainingSet build_level_set(const MatrixRef& data, const NoiseSchedule& schedule, double t, int n_rep,
                                 Stream stream);

// `data` must already be scaled. Level i uses Stream(seed).child(i), so the
// result is independent of how levels are scheduled across threads.
ForestVpModel train_forest_vp(const MatrixRef& data, const NoiseSchedule& schedule, const TimeGrid& grid,
                              const ForestVpConfig& config, std::uint64_t seed, MinMaxScaler scaler = {},
                              std::vector<std::string> feature_names = {});

void save_model(const ForestVpModel& model, const std::string& path);
ForestVpModel load_model(const std::string& path);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
void from_json(const nlohmann::json& j, NoiseSchedule& s);

}  // namespace ensdiff
