#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "panel_msfe/panel.hpp"

namespace panel_msfe {

/// Sign with which the individual term Lambda_k enters the linear part of
/// the variance.
///
/// Expanding the estimator to first order in the errors gives the factor
/// (Lambda - Lambda_k); kDisplayed reproduces the published (Lambda + Lambda_k)
/// form. The two coincide whenever Lambda = 0, which holds asymptotically in
/// every built-in simulation design.
enum class LambdaSign { kDerived, kDisplayed };

/// Slope-gap directions of the linear variance term.
struct LambdaTerms {
  VectorXd lambda;      ///< common term, length K
  MatrixXd individual;  ///< column k is Lambda_k (K x N)
};

namespace detail {

/// Column i is sum_j X_j'X_j (b_j - b_i), computed relative to b_0 so that
/// identical slopes give exact zeros.
inline MatrixXd pooled_gap_moments(const PanelGeometry& geo, const MatrixXd& betas) {
  const Index n = geo.n();
  const Index k = betas.rows();
  VectorXd anchor = VectorXd::Zero(k);
  for (Index j = 0; j < n; ++j) anchor.noalias() += geo.gram(j) * (betas.col(j) - betas.col(0));
  MatrixXd out(k, n);
  for (Index i = 0; i < n; ++i)
    out.col(i) = anchor - geo.pooled_gram() * (betas.col(i) - betas.col(0));
  return out;
}

/// Column i is (sum_j X_j'X_j)^{-1} sum_j X_j'X_j (b_j - b_i): the gap between
/// the Gram-weighted average slope and b_i.
inline MatrixXd pooled_gaps(const PanelGeometry& geo, const MatrixXd& betas) {
  return geo.pooled_factor().solve(pooled_gap_moments(geo, betas));
}

}  // namespace detail

/// Lambda and Lambda_k evaluated at the slopes `betas` (K x N).
inline LambdaTerms lambda_terms(const Panel& panel, const PanelGeometry& geo,
                                const MatrixXd& betas) {
  const Index n = panel.n();
  const Index k = panel.k();
  const double t = static_cast<double>(panel.t_len());
  const double nn = static_cast<double>(n);
  const MatrixXd gaps = std::sqrt(t) * detail::pooled_gaps(geo, betas);

  LambdaTerms out{VectorXd::Zero(k), MatrixXd(k, n)};
  VectorXd avg = VectorXd::Zero(k);
  for (Index i = 0; i < n; ++i) {
    const double proj = panel.x_next.col(i).dot(gaps.col(i));
    avg += panel.x_next.col(i) * (proj / nn);
    out.individual.col(i) = geo.scaled_weights(i) * proj;
  }
  // (sum_j X_j'X_j / (NT))^{-1} avg
  out.lambda = (nn * t) * geo.pooled_factor().solve(avg);
  return out;
}

/// One non-zero entry of the (i, k) double sum: `cross` is the K x K matrix
/// X_i' S^{(i,k)} X_k (already including Sigma_N weights or kernel weights).
struct PairCross {
  Index i;
  Index k;
  MatrixXd cross;
};

struct VarianceParts {
  double quadratic = 0.0;  ///< (1/N) sum of the squared-error terms
  double linear = 0.0;     ///< (1/N) sum of the slope-gap terms
  double diagonal_abs_quadratic = 0.0;  ///< i == k part of `quadratic`, absolute values

  double total() const { return quadratic + linear; }
};

/// (1/N) sum over pairs of 2 (v_i' C_ik v_k / T)^2 + 4 (L + s L_i)' C_ik / T (L + s L_k).
inline VarianceParts assemble_variance(const Panel& panel, const PanelGeometry& geo,
                                       const LambdaTerms& lambdas,
                                       const std::vector<PairCross>& pairs, LambdaSign sign) {
  const double t = static_cast<double>(panel.t_len());
  const double s = sign == LambdaSign::kDerived ? -1.0 : 1.0;
  VarianceParts parts;
  for (const auto& p : pairs) {
    const VectorXd vi = geo.scaled_weights(p.i);
    const VectorXd vk = geo.scaled_weights(p.k);
    const double q = vi.dot(p.cross * vk) / t;
    parts.quadratic += 2.0 * q * q;
    if (p.i == p.k) parts.diagonal_abs_quadratic += 2.0 * q * q;
    const VectorXd li = lambdas.lambda + s * lambdas.individual.col(p.i);
    const VectorXd lk = lambdas.lambda + s * lambdas.individual.col(p.k);
    parts.linear += 4.0 * li.dot(p.cross * lk) / t;
  }
  const double nn = static_cast<double>(panel.n());
  parts.quadratic /= nn;
  parts.linear /= nn;
  parts.diagonal_abs_quadratic /= nn;
  return parts;
}

}  // namespace panel_msfe
