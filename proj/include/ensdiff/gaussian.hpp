#pragma once

#include "ensdiff/types.hpp"

#include <cmath>

namespace ensdiff {

// Closed-form algebra for centered Gaussians N(0, diag(alpha)) under the VP
// forward process and under the normalized product of experts (PoE, the
// normalized geometric mean of K densities).

// H(x) = K / sum_k 1/x_k.
template <typename Derived>
typename Derived::Scalar harmonic_mean(const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  require(values.size() >= 1, "harmonic_mean: no values");
  require((values.array() > Scalar(0)).all(), "harmonic_mean: values must be positive");
  return Scalar(values.size()) / values.array().inverse().sum();
}

// PoE of N(0, diag(v_k)), k = 1..K, is N(0, diag(H_k(v_k))) coordinate-wise.
// Rows of `variances` are experts, columns coordinates.
template <typename Derived>
VectorX<typename Derived::Scalar> poe_covariance(const Eigen::MatrixBase<Derived>& variances) {
  using Scalar = typename Derived::Scalar;
  require(variances.rows() >= 1, "poe_covariance: no experts");
  require((variances.array() > Scalar(0)).all(), "poe_covariance: variances must be positive");
  VectorX<Scalar> out(variances.cols());
  for (Eigen::Index j = 0; j < variances.cols(); ++j) out[j] = harmonic_mean(variances.col(j));
  return out;
}

template <typename Scalar>
struct CommutativityGap {
  Scalar c_poe;      // variance of the diffused PoE: gamma H(alpha) + 1 - gamma
  Scalar c_not_poe;  // variance of the PoE of the diffused experts: H(gamma alpha + 1 - gamma)
  Scalar gap;        // c_not_poe - c_poe, >= 0 with equality iff all alpha_k agree
};

// Isotropic experts N(0, alpha_k I) diffused to a time with coefficient gamma.
template <typename Derived>
CommutativityGap<typename Derived::Scalar> commutativity_gap(const Eigen::MatrixBase<Derived>& alphas,
                                                             typename Derived::Scalar g) {
  using Scalar = typename Derived::Scalar;
  if (!(g > Scalar(0) && g < Scalar(1))) throw DomainError("commutativity_gap: gamma must lie in (0, 1)");
  require((alphas.array() > Scalar(0)).all(), "commutativity_gap: alphas must be positive");
  const Scalar c_poe = g * harmonic_mean(alphas) + (Scalar(1) - g);
  const VectorX<Scalar> diffused = (g * alphas.array() + (Scalar(1) - g)).matrix();
  const Scalar c_not_poe = harmonic_mean(diffused);
  return {c_poe, c_not_poe, c_not_poe - c_poe};
}

template <typename Scalar>
struct MinkowskiCheck {
  Scalar lhs;  // (sum (a_k + b_k)^p)^(1/p)
  Scalar rhs;  // (sum a_k^p)^(1/p) + (sum b_k^p)^(1/p)
  bool holds;  // lhs >= rhs up to rounding
};

// Reverse Minkowski inequality for p < 1, p != 0. With p = -1 this is the
// super-additivity of the harmonic mean.
template <typename DerivedA, typename DerivedB>
MinkowskiCheck<typename DerivedA::Scalar> reverse_minkowski_check(const Eigen::MatrixBase<DerivedA>& a,
                                                                  const Eigen::MatrixBase<DerivedB>& b,
                                                                  typename DerivedA::Scalar p) {
  using Scalar = typename DerivedA::Scalar;
  if (!(p < Scalar(1)) || p == Scalar(0)) throw DomainError("reverse_minkowski_check: need p < 1, p != 0");
  require(a.size() == b.size() && a.size() >= 1, "reverse_minkowski_check: size mismatch");
  require((a.array() > Scalar(0)).all() && (b.array() > Scalar(0)).all(),
          "reverse_minkowski_check: entries must be positive");
  auto power_sum = [p](const auto& v) { return std::pow(v.array().pow(p).sum(), Scalar(1) / p); };
  const Scalar lhs = power_sum((a + b).eval());
  const Scalar rhs = power_sum(a.eval()) + power_sum(b.eval());
  const Scalar tol = Scalar(1e-12) * std::max(Scalar(1), std::abs(lhs));
  return {lhs, rhs, lhs >= rhs - tol};
}

// True when a = lambda b for some lambda > 0, to relative tolerance `tol`.
template <typename DerivedA, typename DerivedB>
bool proportional(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  typename DerivedA::Scalar tol = 1e-10) {
  const auto ratio = (a.array() / b.array()).eval();
  return (ratio.maxCoeff() - ratio.minCoeff()) <= tol * std::abs(ratio.mean());
}

}  // namespace ensdiff
