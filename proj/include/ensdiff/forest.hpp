#pragma once

#include "ensdiff/rng.hpp"
#include "ensdiff/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace ensdiff {

struct TreeConfig {
  int max_depth = 7;
  int min_samples_leaf = 1;
  // Features examined per split; 0 means all p.
  int feature_subsample = 0;

  friend bool operator==(const TreeConfig&, const TreeConfig&) = default;
};

struct ForestConfig {
  int n_trees = 100;
  TreeConfig tree;
  bool bootstrap = true;

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

// Multi-target CART tree stored as flat node arrays. Node 0 is the root;
// feature[i] < 0 marks a leaf. Points with x[feature] <= threshold go left.
class RegressionTree {
 public:
  RegressionTree() = default;

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return values_.cols(); }
  std::size_t n_nodes() const { return feature_.size(); }
  std::size_t n_leaves() const;
  int depth() const;

  // Leaf index reached by x.
  std::size_t route(const double* x) const;
  std::size_t route(const VectorRef& x) const { return route(x.data()); }

  Vector predict(const VectorRef& x) const;
  void predict_into(const double* x, double* out) const;

  const std::vector<int>& feature() const { return feature_; }
  const std::vector<double>& threshold() const { return threshold_; }
  const std::vector<int>& left() const { return left_; }
  const std::vector<int>& right() const { return right_; }
  // One row per node: weighted mean of the training targets routed there.
  const Matrix& values() const { return values_; }

  friend bool operator==(const RegressionTree& a, const RegressionTree& b);

  friend void to_json(nlohmann::json& j, const RegressionTree& tree);
  friend void from_json(const nlohmann::json& j, RegressionTree& tree);

 private:
  friend class TreeBuilder;

  Eigen::Index input_dim_ = 0;
  std::vector<int> feature_;
  std::vector<double> threshold_;
  std::vector<int> left_;
  std::vector<int> right_;
  Matrix values_;
};

// Per-feature row orders of X (ascending value, ties by row index). Computing
// them once lets every tree of a forest reuse the sort.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;

  static SortedColumns of(const MatrixRef& X);
};

// Greedy exact CART: every node picks, among a random subset of features, the
// midpoint threshold that minimizes the summed within-child squared error of
// all targets. `weights` are integer row multiplicities (bootstrap counts);
// empty means one per row. Leaf sizes count distinct rows.
RegressionTree fit_tree(const MatrixRef& X, const MatrixRef& Y, const TreeConfig& config,
                        Stream feature_rng, const std::vector<std::uint32_t>& weights = {},
                        const SortedColumns* presorted = nullptr);

// Bootstrap resample of n rows expressed as per-row multiplicities (sum n).
std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Stream& stream);

// Training-set squared error of a tree, weighted by multiplicities.
double tree_sse(const RegressionTree& tree, const MatrixRef& X, const MatrixRef& Y);

class RandomForest {
 public:
  RandomForest() = default;

  std::size_t n_trees() const { return trees_.size(); }
  Eigen::Index input_dim() const { return trees_.empty() ? 0 : trees_.front().input_dim(); }
  Eigen::Index output_dim() const { return trees_.empty() ? 0 : trees_.front().output_dim(); }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  const ForestConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  // K x d, row k is tree k's prediction; `limit` > 0 keeps the first `limit` trees.
  Matrix predict_per_tree(const VectorRef& x, std::size_t limit = 0) const;
  Vector predict_mean(const VectorRef& x) const;
  Vector predict_tree(std::size_t k, const VectorRef& x) const;

  // The first K trees. Tree k depends only on (seed, k), so this equals a
  // forest trained with n_trees = K and the same seed.
  RandomForest truncated(std::size_t K) const;

  friend bool operator==(const RandomForest& a, const RandomForest& b);

  friend void to_json(nlohmann::json& j, const RandomForest& forest);
  friend void from_json(const nlohmann::json& j, RandomForest& forest);

 private:
  friend RandomForest fit_forest(const MatrixRef&, const MatrixRef&, const ForestConfig&, std::uint64_t);

  std::vector<RegressionTree> trees_;
  ForestConfig config_;
  std::uint64_t seed_ = 0;
};

// Tree k is fit on a bootstrap drawn from Stream(seed).child(k) (when enabled)
// with feature subsets from a sibling stream.
RandomForest fit_forest(const MatrixRef& X, const MatrixRef& Y, const ForestConfig& config,
                        std::uint64_t seed);

void to_json(nlohmann::json& j, const TreeConfig& c);
void from_json(const nlohmann::json& j, TreeConfig& c);
void to_json(nlohmann::json& j, const ForestConfig& c);
void from_json(const nlohmann::json& j, ForestConfig& c);

}  // namespace ensdiff
