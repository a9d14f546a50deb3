#pragma once

#include "ensdiff/score.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testing {

using ensdiff::Matrix;
using ensdiff::Vector;
using ensdiff::VectorRef;

// s(x, t) = A x, independent of t.
class LinearScore final : public ensdiff::ScorePredictor {
 public:
  explicit LinearScore(Matrix A) : A_(std::move(A)) {}
  Eigen::Index dim() const override { return A_.rows(); }
  Vector evaluate(const VectorRef& x, double) const override { return A_ * x; }

 private:
  Matrix A_;
};

class ConstantScore final : public ensdiff::ScorePredictor {
 public:
  explicit ConstantScore(Vector c) : c_(std::move(c)) {}
  Eigen::Index dim() const override { return c_.size(); }
  Vector evaluate(const VectorRef&, double) const override { return c_; }

 private:
  Vector c_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ensdiff_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testing
