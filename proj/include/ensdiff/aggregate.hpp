#pragma once

#include "ensdiff/types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ensdiff {

// Step-wise rules: combine K score vectors evaluated at the same (x, t).
enum class AggregationRule { Arithmetic, Geometric, Median, Dominant, Sum };

inline constexpr AggregationRule kAllRules[] = {AggregationRule::Arithmetic, AggregationRule::Geometric,
                                                AggregationRule::Median, AggregationRule::Dominant,
                                                AggregationRule::Sum};

std::string to_string(AggregationRule rule);
AggregationRule parse_rule(std::string_view name);

namespace detail {

template <typename Col>
double median_of(const Col& col) {
  std::vector<double> v(col.data(), col.data() + col.size());
  const auto n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

// Rows of `scores` are the K member outputs, columns the d coordinates.
//
//   Arithmetic  coordinate-wise mean
//   Sum         coordinate-wise sum
//   Median      coordinate-wise median, midpoint of the central pair for even K
//   Geometric   sign(mean_j) * (prod_k |s_kj|)^(1/K), 0 if any |s_kj| = 0
//   Dominant    the entry of largest |s_kj| in each column, lowest k on ties
template <typename Derived>
Vector aggregate(const Eigen::MatrixBase<Derived>& scores, AggregationRule rule) {
  const Eigen::Index K = scores.rows();
  const Eigen::Index d = scores.cols();
  if (K == 0) throw DomainError("aggregate: no ensemble members");
  if (scores.hasNaN()) throw NumericalError("aggregate: NaN in member scores");

  Vector out(d);
  switch (rule) {
    case AggregationRule::Arithmetic:
      // Offsetting by the first member keeps K identical rows exact.
      out = (scores.row(0) + (scores.rowwise() - scores.row(0)).colwise().mean()).transpose();
      break;
    case AggregationRule::Sum:
      out = scores.colwise().sum().transpose();
      break;
    case AggregationRule::Median: {
      // Column copies are contiguous for nth_element.
      Vector col(K);
      for (Eigen::Index j = 0; j < d; ++j) {
        col = scores.col(j);
        out[j] = detail::median_of(col);
      }
      break;
    }
    case AggregationRule::Geometric:
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto c = scores.col(j).array();
        if ((c == c(0)).all()) {  // exp(log|s|) is not exact
          out[j] = c(0);
          continue;
        }
        const double mean = c.mean();
        if ((c == 0.0).any() || mean == 0.0) {
          out[j] = 0.0;
          continue;
        }
        const double magnitude = std::exp(c.abs().log().mean());
        out[j] = std::copysign(magnitude, mean);
      }
      break;
    case AggregationRule::Dominant:
      for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::Index best = 0;
        double best_abs = std::abs(scores(0, j));
        for (Eigen::Index k = 1; k < K; ++k) {
          const double a = std::abs(scores(k, j));
          if (a > best_abs) {
            best_abs = a;
            best = k;
          }
        }
        out[j] = scores(best, j);
      }
      break;
  }
  if (rule != AggregationRule::Sum) {
    // Identical members reproduce their common value exactly; a floating-point
    // mean of K equal numbers need not.
    for (Eigen::Index j = 0; j < d; ++j)
      if ((scores.col(j).array() == scores(0, j)).all()) out[j] = scores(0, j);
  }
  return out;
}

struct JensenSides {
  double lhs = 0.0;  // loss of the K-member mean
  double rhs = 0.0;  // mean over j of the loss of the mean without member j
};

// Both sides of L(mean_k s_k) <= (1/K) sum_j L(mean_{k != j} s_k) for a convex
// loss. member_outputs[k] holds member k's predictions over a fixed batch and
// `loss` maps a prediction of that shape to a scalar.
template <typename Loss>
JensenSides leave_one_out_jensen(std::span<const Matrix> member_outputs, Loss&& loss) {
  const auto K = member_outputs.size();
  if (K < 2) throw DomainError("leave_one_out_jensen: need at least two members");
  Matrix total = member_outputs[0];
  for (std::size_t k = 1; k < K; ++k) {
    require(member_outputs[k].rows() == total.rows() && member_outputs[k].cols() == total.cols(),
            "leave_one_out_jensen: member shapes differ");
    total += member_outputs[k];
  }
  JensenSides sides;
  sides.lhs = loss(Matrix(total / static_cast<double>(K)));
  for (std::size_t j = 0; j < K; ++j)
    sides.rhs += loss(Matrix((total - member_outputs[j]) / static_cast<double>(K - 1)));
  sides.rhs /= static_cast<double>(K);
  return sides;
}

}  // namespace ensdiff
