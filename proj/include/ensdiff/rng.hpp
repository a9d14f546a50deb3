#pragma once

#include "ensdiff/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace ensdiff {

namespace detail {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based random stream: the n-th output is a pure function of
// (key, n), which is SplitMix64 keyed by `key`. Child streams are derived by
// hashing the parent key with an identifier, so a stream for
// (seed, sample, step) is the same no matter which thread asks for it or in
// which order streams are created.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key = 0) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGoldenGamma);
  }

  [[nodiscard]] Stream child(std::uint64_t id) const {
    return Stream(detail::mix64(key_ ^ detail::mix64(id + detail::kGoldenGamma)));
  }

  [[nodiscard]] Stream child(std::initializer_list<std::uint64_t> path) const {
    Stream s = *this;
    for (auto id : path) s = s.child(id);
    return s;
  }

  std::uint64_t key() const { return key_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }

  double normal() { return normal_(*this); }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this);
  }

  Vector normal_vector(Eigen::Index d) {
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = normal();
    return z;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix z(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal();
    return z;
  }

  // Uniform on the unit sphere S^{d-1}; in one dimension this is a fair sign.
  Vector unit_sphere(Eigen::Index d) {
    if (d == 1) {
      Vector s(1);
      s[0] = uniform() < 0.5 ? -1.0 : 1.0;
      return s;
    }
    for (;;) {
      Vector z = normal_vector(d);
      const double n = z.norm();
      if (n > 0.0) return z / n;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_;
};

}  // namespace ensdiff
