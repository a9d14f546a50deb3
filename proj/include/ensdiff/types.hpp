#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ensdiff {

// Row-major so that a batch of points is a contiguous block per sample.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

using MatrixRef = Eigen::Ref<const Matrix>;
using VectorRef = Eigen::Ref<const Vector>;

// Raised for out-of-range times, mismatched shapes and similar contract
// violations that callers can detect before the call.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised when a numerical routine produces or receives non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an input file cannot be read or an output cannot be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DomainError(message);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace ensdiff
