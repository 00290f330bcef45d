#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "panel_msfe/cov_operator.hpp"
#include "panel_msfe/panel.hpp"
#include "panel_msfe/variance_terms.hpp"

namespace panel_msfe {

/// Data-generating truth: slopes and the separable error covariance
/// Cov(eps_i, eps_k) = (Sigma_N)_{ik} * Omega_i Sigma_T Omega_k.
///
/// `error_scale` (T x N) holds the diagonal of Omega_i for heteroskedastic
/// designs and is empty otherwise; `next_scale` is the matching factor at
/// time T+1.
struct TrueModel {
  MatrixXd betas;  // K x N
  CrossCov sigma_n;
  CovOperator sigma_t;
  MatrixXd error_scale;
  VectorXd next_scale;

  bool heteroskedastic() const { return error_scale.size() > 0; }

  CovOperator pair_cov(Index i, Index k) const {
    const double s = sigma_n(i, k);
    CovOperator op = sigma_t.times(s);
    if (heteroskedastic()) op = op.scaled(error_scale.col(i), error_scale.col(k));
    return op;
  }

  /// Var(eps_{i,T+1}).
  double forecast_noise_var(Index i) const {
    VectorXd e1 = VectorXd::Zero(sigma_t.size());
    e1(0) = 1.0;
    const double w = next_scale.size() ? next_scale(i) : 1.0;
    return sigma_n(i, i) * sigma_t.quad(e1) * w * w;
  }

  void validate(const Panel& panel) const {
    if (betas.rows() != panel.k() || betas.cols() != panel.n())
      throw InvalidModel("true slopes must be K x N");
    if (sigma_n.size() != panel.n()) throw InvalidModel("Sigma_N must be N x N");
    if (sigma_t.size() != panel.t_len()) throw InvalidModel("Sigma_T must be T x T");
    if (heteroskedastic() &&
        (error_scale.rows() != panel.t_len() || error_scale.cols() != panel.n()))
      throw InvalidModel("error scale must be T x N");
    const MatrixXd sn = sigma_n.materialize();
    if (!sn.isApprox(sn.transpose(), 1e-12)) throw InvalidModel("Sigma_N is not symmetric");
    if ((sn.diagonal().array() <= 0.0).any()) throw InvalidModel("Sigma_N diagonal must be positive");
    if (sigma_t.core() == CovOperator::Core::kDense || sigma_t.has_scaling() ||
        sigma_t.centered()) {
      const MatrixXd st = sigma_t.materialize();
      if (!st.isApprox(st.transpose(), 1e-12)) throw InvalidModel("Sigma_T is not symmetric");
      for (Index h = 0; h < st.rows(); ++h) {
        const auto d = st.diagonal(h);
        if ((d.array() - d(0)).abs().maxCoeff() > 1e-10 * (1.0 + std::abs(d(0))))
          throw InvalidModel("Sigma_T is not Toeplitz (stationary)");
      }
      if (st(0, 0) <= 0.0) throw InvalidModel("Sigma_T diagonal must be positive");
    } else if (sigma_t.quad(VectorXd::Unit(sigma_t.size(), 0)) <= 0.0) {
      throw InvalidModel("Sigma_T diagonal must be positive");
    }
  }
};

/// Exact conditional prediction errors and their decomposition
/// E^ind - E^pool = E1 - E2 - E3.
struct ErrorDecomposition {
  VectorXd e_ind_per_i;
  VectorXd e_pool_per_i;
  double e1 = 0.0;
  double e2 = 0.0;
  double e3 = 0.0;
  double diff = 0.0;  ///< E^pool - E^ind

  double e_ind() const { return e_ind_per_i.mean(); }
  double e_pool() const { return e_pool_per_i.mean(); }
};

/// Pairwise matrices X_i' Cov(eps_i, eps_k) X_k for every pair with
/// (Sigma_N)_{ik} != 0.
inline std::vector<PairCross> true_pair_crosses(const Panel& panel, const TrueModel& truth) {
  std::vector<PairCross> out;
  truth.sigma_n.for_each_nonzero([&](Index i, Index k, double) {
    out.push_back({i, k, truth.pair_cov(i, k).bilinear(panel.x[i], panel.x[k])});
  });
  return out;
}

namespace detail {

inline double individual_error(const Panel& panel, const TrueModel& truth,
                               const PanelGeometry& geo, Index i) {
  const VectorXd u = geo.forecast_weights().col(i);
  // w_i = X_i u_i; one operator application per factor.
  const VectorXd w = panel.x[i] * u;
  return truth.pair_cov(i, i).quad(w) + truth.forecast_noise_var(i);
}

/// sum_{j,k} (Sigma_N)_{jk} X_j' Sigma_T X_k.
inline MatrixXd pooled_noise_moment(const Panel& panel, const std::vector<PairCross>& pairs) {
  MatrixXd b = MatrixXd::Zero(panel.k(), panel.k());
  for (const auto& p : pairs) b += p.cross;
  return b;
}

}  // namespace detail

/// E_i^ind = (Sigma_N)_ii Tr[Sigma_T X_i G_i^{-1} x x' G_i^{-1} X_i'] + (Sigma_N)_ii (Sigma_T)_11.
inline double individual_error(const Panel& panel, const TrueModel& truth, Index i) {
  panel.validate();
  truth.validate(panel);
  if (i < 0 || i >= panel.n()) throw OutOfRange("individual index out of range");
  return detail::individual_error(panel, truth, PanelGeometry(panel), i);
}

/// E_i^pool: squared pooling bias + pooled variance term + forecast noise.
inline double pooled_error(const Panel& panel, const TrueModel& truth, Index i) {
  panel.validate();
  truth.validate(panel);
  if (i < 0 || i >= panel.n()) throw OutOfRange("individual index out of range");
  const PanelGeometry geo(panel);
  const VectorXd gap = detail::pooled_gaps(geo, truth.betas).col(i);
  const double bias = panel.x_next.col(i).dot(gap);
  const MatrixXd b = detail::pooled_noise_moment(panel, true_pair_crosses(panel, truth));
  const VectorXd p = geo.pooled_factor().solve(panel.x_next.col(i));
  return bias * bias + p.dot(b * p) + truth.forecast_noise_var(i);
}

inline ErrorDecomposition decompose_errors(const Panel& panel, const TrueModel& truth,
                                           const PanelGeometry& geo,
                                           const std::vector<PairCross>& pairs) {
  const Index n = panel.n();
  const double nn = static_cast<double>(n);
  ErrorDecomposition out;
  out.e_ind_per_i.resize(n);
  out.e_pool_per_i.resize(n);

  const MatrixXd gaps = detail::pooled_gaps(geo, truth.betas);
  const MatrixXd b = detail::pooled_noise_moment(panel, pairs);
  const MatrixXd p = geo.pooled_factor().solve(panel.x_next);
  const MatrixXd& u = geo.forecast_weights();

  // Sigma_N diagonal terms are needed for E1; take them from the pair list
  // so the operator work is shared.
  VectorXd own = VectorXd::Zero(n);
  for (const auto& pc : pairs)
    if (pc.i == pc.k) own(pc.i) = u.col(pc.i).dot(pc.cross * u.col(pc.i));

  for (Index i = 0; i < n; ++i) {
    const double noise = truth.forecast_noise_var(i);
    const double bias = panel.x_next.col(i).dot(gaps.col(i));
    const double pooled_var = p.col(i).dot(b * p.col(i));
    out.e_ind_per_i(i) = own(i) + noise;
    out.e_pool_per_i(i) = bias * bias + pooled_var + noise;
    out.e1 += own(i);
    out.e2 += bias * bias;
    out.e3 += pooled_var;
  }
  out.e1 /= nn;
  out.e2 /= nn;
  out.e3 /= nn;
  out.diff = out.e2 + out.e3 - out.e1;
  return out;
}

inline ErrorDecomposition decompose_errors(const Panel& panel, const TrueModel& truth) {
  panel.validate();
  truth.validate(panel);
  const PanelGeometry geo(panel);
  return decompose_errors(panel, truth, geo, true_pair_crosses(panel, truth));
}

/// Oracle variance threshold below which tau_N^2 is reported as degenerate.
inline constexpr double kDegenerateVariance = 1e-14;

inline double oracle_tau(const Panel& panel, const TrueModel& truth, const PanelGeometry& geo,
                         const std::vector<PairCross>& pairs,
                         LambdaSign sign = LambdaSign::kDerived) {
  const LambdaTerms lambdas = lambda_terms(panel, geo, truth.betas);
  const double tau = assemble_variance(panel, geo, lambdas, pairs, sign).total();
  if (!(tau > kDegenerateVariance))
    throw DegenerateVariance("oracle variance tau_N^2 = " + std::to_string(tau) +
                             " is not positive");
  return tau;
}

/// Conditional asymptotic variance tau_N^2 from the true slopes and covariances.
inline double oracle_tau(const Panel& panel, const TrueModel& truth,
                         LambdaSign sign = LambdaSign::kDerived) {
  panel.validate();
  truth.validate(panel);
  const PanelGeometry geo(panel);
  return oracle_tau(panel, truth, geo, true_pair_crosses(panel, truth), sign);
}

}  // namespace panel_msfe
