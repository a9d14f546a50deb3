#pragma once

#include "ensdiff/rng.hpp"
#include "ensdiff/types.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace ensdiff {

// Per-feature affine map of [min, max] onto [-1, 1]. Constant features map
// to 0 and invert back to their constant value.
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(Vector lo, Vector hi);

  static MinMaxScaler fit(const MatrixRef& points);

  Matrix transform(const MatrixRef& points) const;
  Matrix inverse(const MatrixRef& scaled) const;

  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  Eigen::Index dim() const { return lo_.size(); }

 private:
  Vector lo_, hi_;
};

struct Dataset {
  Matrix points;  // n x d, original units
  std::vector<std::string> feature_names;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  void validate() const;
};

// Header row required, numeric columns only, comma separated.
Dataset read_csv(std::istream& in);
Dataset read_csv_file(const std::string& path);

void write_csv(std::ostream& out, const std::vector<std::string>& header, const MatrixRef& rows);
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const MatrixRef& rows);

// FNV-1a over the raw bytes of a file; used to fingerprint inputs in manifests.
std::string file_hash(const std::string& path);
std::string bytes_hash(const std::string& bytes);

struct Split {
  Matrix train;
  Matrix test;
};

// Shuffled train/test partition; test gets round(n * test_fraction) rows,
// at least one, and train keeps at least two.
Split train_test_split(const MatrixRef& points, double test_fraction, Stream stream);

// Rows drawn uniformly without replacement (all rows, shuffled, if m >= n).
Matrix subsample_rows(const MatrixRef& points, Eigen::Index m, Stream stream);

}  // namespace ensdiff
