#include "ensdiff/forest.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace ensdiff {

std::size_t RegressionTree::n_leaves() const {
  return static_cast<std::size_t>(std::count(feature_.begin(), feature_.end(), -1));
}

int RegressionTree::depth() const {
  if (feature_.empty()) return 0;
  std::vector<int> level(feature_.size(), 0);
  int deepest = 0;
  // Children are always appended after their parent.
  for (std::size_t i = 0; i < feature_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (feature_[i] >= 0) {
      level[static_cast<std::size_t>(left_[i])] = level[i] + 1;
      level[static_cast<std::size_t>(right_[i])] = level[i] + 1;
    }
  }
  return deepest;
}

std::size_t RegressionTree::route(const double* x) const {
  std::size_t node = 0;
  while (feature_[node] >= 0)
    node = static_cast<std::size_t>(x[feature_[node]] <= threshold_[node] ? left_[node] : right_[node]);
  return node;
}

Vector RegressionTree::predict(const VectorRef& x) const {
  require(x.size() == input_dim_, "RegressionTree::predict: dimension mismatch");
  return values_.row(static_cast<Eigen::Index>(route(x.data()))).transpose();
}

void RegressionTree::predict_into(const double* x, double* out) const {
  const auto leaf = static_cast<Eigen::Index>(route(x));
  std::copy_n(values_.row(leaf).data(), values_.cols(), out);
}

bool operator==(const RegressionTree& a, const RegressionTree& b) {
  return a.input_dim_ == b.input_dim_ && a.feature_ == b.feature_ && a.threshold_ == b.threshold_ &&
         a.left_ == b.left_ && a.right_ == b.right_ && a.values_.rows() == b.values_.rows() &&
         a.values_.cols() == b.values_.cols() && a.values_ == b.values_;
}

SortedColumns SortedColumns::of(const MatrixRef& X) {
  SortedColumns s;
  const auto n = static_cast<std::uint32_t>(X.rows());
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0U);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
    s.order.push_back(std::move(idx));
  }
  return s;
}

std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Stream& stream) {
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[stream.index(n)];
  return counts;
}

// Builds one tree depth-first. Every feature keeps its own copy of the
// active rows sorted by that feature (row id, value, weight, weighted
// targets); the current node owns the same [begin, end) range in all of them
// and a split stably partitions each copy, so children stay sorted and every
// scan is sequential.
class TreeBuilder {
 public:
  TreeBuilder(const MatrixRef& X, const MatrixRef& Y, const TreeConfig& config, const SortedColumns& sorted)
      : X_(X), Y_(Y), sorted_(sorted), config_(config), p_(X.cols()), d_(Y.cols()) {
    const auto n = static_cast<std::size_t>(X.rows());
    cols_.resize(static_cast<std::size_t>(p_));
    for (auto& c : cols_) c.reserve(n, static_cast<std::size_t>(d_));
    scratch_.resize(n, static_cast<std::size_t>(d_));
    goes_left_.assign(n, 0);
    m_ = config.feature_subsample <= 0 ? p_ : std::min<Eigen::Index>(config.feature_subsample, p_);
    features_.resize(static_cast<std::size_t>(p_));
    left_sum_.resize(static_cast<std::size_t>(d_));
    node_sum_.resize(static_cast<std::size_t>(d_));
  }

  // Buffers are reused across calls, so one builder serves a whole forest.
  RegressionTree build(const std::vector<std::uint32_t>& weights, Stream rng) {
    rng_ = rng;
    load(weights);
    require(active_ > 0, "fit_tree: no rows with positive weight");
    tree_ = RegressionTree();
    tree_.input_dim_ = p_;
    values_.clear();
    grow(0, active_, 0);
    tree_.values_ = Eigen::Map<Matrix>(values_.data(), static_cast<Eigen::Index>(tree_.feature_.size()), d_);
    return std::move(tree_);
  }

 private:
  void load(const std::vector<std::uint32_t>& weights) {
    const auto d = static_cast<std::size_t>(d_);
    for (Eigen::Index f = 0; f < p_; ++f) {
      auto& c = cols_[static_cast<std::size_t>(f)];
      c.row.clear();
      c.x.clear();
      c.w.clear();
      c.wy.clear();
      for (auto r : sorted_.order[static_cast<std::size_t>(f)]) {
        if (!weights.empty() && weights[r] == 0) continue;
        const double w = weights.empty() ? 1.0 : static_cast<double>(weights[r]);
        const auto ri = static_cast<Eigen::Index>(r);
        c.row.push_back(r);
        c.x.push_back(X_(ri, f));
        c.w.push_back(w);
        for (std::size_t j = 0; j < d; ++j) c.wy.push_back(w * Y_(ri, static_cast<Eigen::Index>(j)));
      }
    }
    active_ = cols_.front().row.size();
  }

  struct Column {
    std::vector<std::uint32_t> row;
    std::vector<double> x, w, wy;
    void reserve(std::size_t n, std::size_t d) {
      row.reserve(n);
      x.reserve(n);
      w.reserve(n);
      wy.reserve(n * d);
    }
    void resize(std::size_t n, std::size_t d) {
      row.resize(n);
      x.resize(n);
      w.resize(n);
      wy.resize(n * d);
    }
  };

  struct Candidate {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
    std::size_t n_left = 0;
  };

  int grow(std::size_t begin, std::size_t end, int depth) {
    const auto node = static_cast<int>(tree_.feature_.size());
    tree_.feature_.push_back(-1);
    tree_.threshold_.push_back(0.0);
    tree_.left_.push_back(-1);
    tree_.right_.push_back(-1);

    const auto d = static_cast<std::size_t>(d_);
    const Column& c = cols_.front();
    double w_total = 0.0, sq_total = 0.0;
    std::fill(node_sum_.begin(), node_sum_.end(), 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const double w = c.w[i];
      w_total += w;
      for (std::size_t j = 0; j < d; ++j) {
        const double wy = c.wy[i * d + j];
        node_sum_[j] += wy;
        sq_total += wy * wy / w;
      }
    }
    double parent_score = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      values_.push_back(node_sum_[j] / w_total);
      parent_score += node_sum_[j] * node_sum_[j];
    }
    parent_score /= w_total;

    const std::size_t count = end - begin;
    const double sse = sq_total - parent_score;
    const auto min_leaf = static_cast<std::size_t>(std::max(1, config_.min_samples_leaf));
    if (depth >= config_.max_depth || count < 2 * min_leaf || sse <= 1e-12 * std::max(1.0, sq_total))
      return node;

    const Candidate best = find_split(begin, end, w_total, min_leaf);
    // Splits must remove squared error beyond rounding noise.
    if (best.feature < 0 || best.score - parent_score <= 1e-12 * std::max(1.0, sq_total)) return node;

    partition(begin, end, best);
    const std::size_t mid = begin + best.n_left;
    tree_.feature_[static_cast<std::size_t>(node)] = best.feature;
    tree_.threshold_[static_cast<std::size_t>(node)] = best.threshold;
    const int l = grow(begin, mid, depth + 1);
    tree_.left_[static_cast<std::size_t>(node)] = l;
    const int r = grow(mid, end, depth + 1);
    tree_.right_[static_cast<std::size_t>(node)] = r;
    return node;
  }

  void choose_features() {
    std::iota(features_.begin(), features_.end(), Eigen::Index{0});
    if (m_ == p_) return;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng_.index(static_cast<std::size_t>(p_ - i)));
      std::swap(features_[static_cast<std::size_t>(i)], features_[static_cast<std::size_t>(j)]);
    }
    std::sort(features_.begin(), features_.begin() + m_);
  }

  // Maximizes |S_L|^2 / W_L + |S_R|^2 / W_R, which is equivalent to minimizing
  // the children's summed squared error. Features are scanned in increasing
  // index and thresholds in increasing value; only strict improvements
  // replace the incumbent, so ties resolve to the lowest (feature, threshold).
  Candidate find_split(std::size_t begin, std::size_t end, double w_total, std::size_t min_leaf) {
    switch (d_) {
      case 1: return find_split_d<1>(begin, end, w_total, min_leaf);
      case 2: return find_split_d<2>(begin, end, w_total, min_leaf);
      case 3: return find_split_d<3>(begin, end, w_total, min_leaf);
      case 4: return find_split_d<4>(begin, end, w_total, min_leaf);
      case 5: return find_split_d<5>(begin, end, w_total, min_leaf);
      case 6: return find_split_d<6>(begin, end, w_total, min_leaf);
      case 7: return find_split_d<7>(begin, end, w_total, min_leaf);
      case 8: return find_split_d<8>(begin, end, w_total, min_leaf);
      default: return find_split_d<0>(begin, end, w_total, min_leaf);
    }
  }

  // D > 0 fixes the output width at compile time; D = 0 reads it from d_.
  template <std::size_t D>
  Candidate find_split_d(std::size_t begin, std::size_t end, double w_total, std::size_t min_leaf) {
    choose_features();
    Candidate best;
    bool found = false;
    const std::size_t count = end - begin;
    const std::size_t d = D > 0 ? D : static_cast<std::size_t>(d_);
    // Local copies keep the running sums out of memory the compiler must
    // assume aliases the target arrays.
    constexpr std::size_t kLocal = D > 0 ? D : 1;
    std::array<double, kLocal> total_local{}, left_local{};
    const double* total = D > 0 ? total_local.data() : node_sum_.data();
    double* left = D > 0 ? left_local.data() : left_sum_.data();
    if constexpr (D > 0) std::copy_n(node_sum_.begin(), D, total_local.begin());
    for (Eigen::Index fi = 0; fi < m_; ++fi) {
      const Eigen::Index f = features_[static_cast<std::size_t>(fi)];
      const Column& c = cols_[static_cast<std::size_t>(f)];
      const double* __restrict xs = c.x.data();
      const double* __restrict ws = c.w.data();
      const double* __restrict wys = c.wy.data();
      std::fill_n(left, d, 0.0);
      double w_left = 0.0;
      for (std::size_t i = begin; i + 1 < end; ++i) {
        w_left += ws[i];
        const double* wy = wys + i * d;
#pragma GCC unroll 8
        for (std::size_t j = 0; j < d; ++j) left[j] += wy[j];
        const std::size_t n_left = i + 1 - begin;
        if (n_left < min_leaf) continue;
        if (count - n_left < min_leaf) break;
        const double a = xs[i];
        const double b = xs[i + 1];
        if (!(b > a)) continue;
        double sl = 0.0, sr = 0.0;
#pragma GCC unroll 8
        for (std::size_t j = 0; j < d; ++j) {
          const double rj = total[j] - left[j];
          sl += left[j] * left[j];
          sr += rj * rj;
        }
        const double score = sl / w_left + sr / (w_total - w_left);
        if (!found || score > best.score) {
          found = true;
          double thr = 0.5 * (a + b);
          if (!(thr < b)) thr = a;
          best = {static_cast<int>(f), thr, score, n_left};
        }
      }
    }
    return best;
  }

  void partition(std::size_t begin, std::size_t end, const Candidate& split) {
    switch (d_) {
      case 1: return partition_d<1>(begin, end, split);
      case 2: return partition_d<2>(begin, end, split);
      case 3: return partition_d<3>(begin, end, split);
      case 4: return partition_d<4>(begin, end, split);
      default: return partition_d<0>(begin, end, split);
    }
  }

  template <std::size_t D>
  void partition_d(std::size_t begin, std::size_t end, const Candidate& split) {
    const Column& pivot = cols_[static_cast<std::size_t>(split.feature)];
    for (std::size_t i = begin; i < end; ++i) goes_left_[pivot.row[i]] = pivot.x[i] <= split.threshold ? 1 : 0;
    const std::size_t d = D > 0 ? D : static_cast<std::size_t>(d_);
    const std::uint8_t* goes_left = goes_left_.data();
    for (auto& c : cols_) {
      std::uint32_t* row = c.row.data();
      double* x = c.x.data();
      double* w = c.w.data();
      double* wy = c.wy.data();
      std::uint32_t* srow = scratch_.row.data();
      double* sx = scratch_.x.data();
      double* sw = scratch_.w.data();
      double* swy = scratch_.wy.data();
      std::size_t l = begin, s = 0;
      for (std::size_t i = begin; i < end; ++i) {
        if (goes_left[row[i]]) {
          row[l] = row[i];
          x[l] = x[i];
          w[l] = w[i];
          for (std::size_t j = 0; j < d; ++j) wy[l * d + j] = wy[i * d + j];
          ++l;
        } else {
          srow[s] = row[i];
          sx[s] = x[i];
          sw[s] = w[i];
          for (std::size_t j = 0; j < d; ++j) swy[s * d + j] = wy[i * d + j];
          ++s;
        }
      }
      std::copy_n(srow, s, row + l);
      std::copy_n(sx, s, x + l);
      std::copy_n(sw, s, w + l);
      std::copy_n(swy, s * d, wy + l * d);
    }
  }

  const MatrixRef& X_;
  const MatrixRef& Y_;
  const SortedColumns& sorted_;
  TreeConfig config_;
  Stream rng_;
  Eigen::Index p_, d_, m_ = 0;
  std::size_t active_ = 0;
  std::vector<Column> cols_;
  Column scratch_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<Eigen::Index> features_;
  std::vector<double> left_sum_, node_sum_;
  std::vector<double> values_;
  RegressionTree tree_;
};

namespace {

void check_training_inputs(const MatrixRef& X, const MatrixRef& Y, const TreeConfig& config) {
  if (X.rows() == 0 || X.cols() == 0 || Y.cols() == 0) throw DomainError("fit_tree: empty input");
  require(X.rows() == Y.rows(), "fit_tree: X and Y row counts differ");
  require(config.max_depth >= 0 && config.min_samples_leaf >= 1, "fit_tree: bad tree configuration");
  require(X.allFinite() && Y.allFinite(), "fit_tree: non-finite training data");
}

}  // namespace

RegressionTree fit_tree(const MatrixRef& X, const MatrixRef& Y, const TreeConfig& config,
                        Stream feature_rng, const std::vector<std::uint32_t>& weights,
                        const SortedColumns* presorted) {
  check_training_inputs(X, Y, config);
  require(weights.empty() || weights.size() == static_cast<std::size_t>(X.rows()),
          "fit_tree: weight count mismatch");
  SortedColumns local;
  if (presorted == nullptr) {
    local = SortedColumns::of(X);
    presorted = &local;
  }
  return TreeBuilder(X, Y, config, *presorted).build(weights, feature_rng);
}

double tree_sse(const RegressionTree& tree, const MatrixRef& X, const MatrixRef& Y) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    sse += (tree.predict(X.row(i).transpose()) - Y.row(i).transpose()).squaredNorm();
  return sse;
}

Matrix RandomForest::predict_per_tree(const VectorRef& x, std::size_t limit) const {
  require(!trees_.empty(), "RandomForest: no trees");
  require(x.size() == input_dim(), "RandomForest: dimension mismatch");
  require(limit <= trees_.size(), "RandomForest: tree limit out of range");
  const std::size_t K = limit == 0 ? trees_.size() : limit;
  Matrix out(static_cast<Eigen::Index>(K), output_dim());
  for (std::size_t k = 0; k < K; ++k)
    trees_[k].predict_into(x.data(), out.row(static_cast<Eigen::Index>(k)).data());
  return out;
}

Vector RandomForest::predict_mean(const VectorRef& x) const {
  return predict_per_tree(x).colwise().mean().transpose();
}

Vector RandomForest::predict_tree(std::size_t k, const VectorRef& x) const {
  return trees_.at(k).predict(x);
}

bool operator==(const RandomForest& a, const RandomForest& b) {
  return a.config_ == b.config_ && a.seed_ == b.seed_ && a.trees_ == b.trees_;
}

RandomForest RandomForest::truncated(std::size_t K) const {
  require(K >= 1 && K <= trees_.size(), "RandomForest::truncated: K out of range");
  RandomForest out;
  out.trees_.assign(trees_.begin(), trees_.begin() + static_cast<std::ptrdiff_t>(K));
  out.config_ = config_;
  out.config_.n_trees = static_cast<int>(K);
  out.seed_ = seed_;
  return out;
}

RandomForest fit_forest(const MatrixRef& X, const MatrixRef& Y, const ForestConfig& config,
                        std::uint64_t seed) {
  require(config.n_trees >= 1, "fit_forest: n_trees must be >= 1");
  check_training_inputs(X, Y, config.tree);
  const SortedColumns sorted = SortedColumns::of(X);
  RandomForest forest;
  forest.config_ = config;
  forest.seed_ = seed;
  forest.trees_.reserve(static_cast<std::size_t>(config.n_trees));
  const Stream root(seed);
  TreeBuilder builder(X, Y, config.tree, sorted);
  for (int k = 0; k < config.n_trees; ++k) {
    const Stream tree_stream = root.child(static_cast<std::uint64_t>(k));
    std::vector<std::uint32_t> counts;
    if (config.bootstrap) {
      Stream boot = tree_stream.child(0);
      counts = bootstrap_counts(static_cast<std::size_t>(X.rows()), boot);
    }
    forest.trees_.push_back(builder.build(counts, tree_stream.child(1)));
  }
  return forest;
}

void to_json(nlohmann::json& j, const RegressionTree& tree) {
  j = nlohmann::json{{"input_dim", tree.input_dim_},
                     {"output_dim", tree.values_.cols()},
                     {"feature", tree.feature_},
                     {"threshold", tree.threshold_},
                     {"left", tree.left_},
                     {"right", tree.right_},
                     {"value", std::vector<double>(tree.values_.data(), tree.values_.data() + tree.values_.size())}};
}

void from_json(const nlohmann::json& j, RegressionTree& tree) {
  tree.input_dim_ = j.at("input_dim").get<Eigen::Index>();
  const auto d = j.at("output_dim").get<Eigen::Index>();
  tree.feature_ = j.at("feature").get<std::vector<int>>();
  tree.threshold_ = j.at("threshold").get<std::vector<double>>();
  tree.left_ = j.at("left").get<std::vector<int>>();
  tree.right_ = j.at("right").get<std::vector<int>>();
  auto v = j.at("value").get<std::vector<double>>();
  const auto n = static_cast<Eigen::Index>(tree.feature_.size());
  require(n >= 1 && tree.threshold_.size() == tree.feature_.size() && tree.left_.size() == tree.feature_.size() &&
              tree.right_.size() == tree.feature_.size() && static_cast<Eigen::Index>(v.size()) == n * d,
          "tree json: inconsistent node arrays");
  for (std::size_t i = 0; i < tree.feature_.size(); ++i) {
    if (tree.feature_[i] < 0) continue;
    require(tree.feature_[i] < tree.input_dim_ && tree.left_[i] > static_cast<int>(i) &&
                tree.right_[i] > static_cast<int>(i) && tree.left_[i] < n && tree.right_[i] < n,
            "tree json: malformed node " + std::to_string(i));
  }
  tree.values_ = Eigen::Map<Matrix>(v.data(), n, d);
}

void to_json(nlohmann::json& j, const TreeConfig& c) {
  j = nlohmann::json{{"max_depth", c.max_depth},
                     {"min_samples_leaf", c.min_samples_leaf},
                     {"feature_subsample", c.feature_subsample}};
}

void from_json(const nlohmann::json& j, TreeConfig& c) {
  c.max_depth = j.value("max_depth", c.max_depth);
  c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
  c.feature_subsample = j.value("feature_subsample", c.feature_subsample);
}

void to_json(nlohmann::json& j, const ForestConfig& c) {
  j = nlohmann::json{{"n_trees", c.n_trees}, {"bootstrap", c.bootstrap}, {"tree", c.tree}};
}

void from_json(const nlohmann::json& j, ForestConfig& c) {
  c.n_trees = j.value("n_trees", c.n_trees);
  c.bootstrap = j.value("bootstrap", c.bootstrap);
  if (j.contains("tree")) c.tree = j.at("tree").get<TreeConfig>();
}

void to_json(nlohmann::json& j, const RandomForest& forest) {
  j = nlohmann::json{{"format_version", 1},
                     {"config", forest.config_},
                     {"seed", forest.seed_},
                     {"trees", forest.trees_}};
}

void from_json(const nlohmann::json& j, RandomForest& forest) {
  require(j.at("format_version").get<int>() == 1, "forest json: unsupported format_version");
  forest.config_ = j.at("config").get<ForestConfig>();
  forest.seed_ = j.at("seed").get<std::uint64_t>();
  forest.trees_ = j.at("trees").get<std::vector<RegressionTree>>();
  require(!forest.trees_.empty(), "forest json: no trees");
}

}  // namespace ensdiff
