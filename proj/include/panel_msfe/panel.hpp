#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "panel_msfe/error.hpp"

namespace panel_msfe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Reciprocal condition number below which a Gram matrix is treated as
/// singular.
inline constexpr double kSingularRcond = 1e-12;

/// Balanced linear panel y_{i,t} = x_{i,t}' beta_i + eps_{i,t}.
///
/// Storage is individual-major: `x[i]` is the T x K design of individual i,
/// column i of `y` (T x N) holds its responses and column i of `x_next`
/// (K x N) the prediction regressors x_{i,T+1}.
struct Panel {
  std::vector<MatrixXd> x;
  MatrixXd y;
  MatrixXd x_next;
  bool demeaned = false;

  Index n() const { return static_cast<Index>(x.size()); }
  Index t_len() const { return y.rows(); }
  Index k() const { return x_next.rows(); }

  /// Throws InvalidPanel when shapes disagree, T <= K or a value is not
  /// finite.
  void validate() const {
    if (x.empty()) throw InvalidPanel("panel has no individuals");
    const Index t = t_len();
    const Index kk = k();
    if (y.cols() != n() || x_next.cols() != n())
      throw InvalidPanel("y / x_next column count does not match number of individuals");
    if (kk < 1) throw InvalidPanel("panel needs at least one regressor");
    if (t <= kk)
      throw InvalidPanel("t_len (" + std::to_string(t) + ") must exceed k (" +
                         std::to_string(kk) + ")");
    for (Index i = 0; i < n(); ++i) {
      if (x[i].rows() != t || x[i].cols() != kk)
        throw InvalidPanel("regressor block of individual " + std::to_string(i) +
                           " has wrong shape");
      if (!x[i].allFinite())
        throw InvalidPanel("non-finite regressor for individual " + std::to_string(i));
    }
    if (!y.allFinite()) throw InvalidPanel("non-finite response");
    if (!x_next.allFinite()) throw InvalidPanel("non-finite prediction regressor");
  }
};

/// Individual slopes (column i is beta_hat_i, K x N) and the pooled slope.
struct SlopeEstimates {
  MatrixXd individual;
  VectorXd pooled;
};

/// OLS residuals, column i holds y_i - X_i beta_hat_i (T x N).
struct ResidualSet {
  MatrixXd residuals;
};

namespace detail {

inline Eigen::LDLT<MatrixXd> checked_ldlt(const MatrixXd& gram, long index) {
  Eigen::LDLT<MatrixXd> ldlt(gram);
  // rcond() alone misses exact rank deficiency (a zero pivot is skipped), so
  // the pivots are checked against the largest one as well.
  const VectorXd d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || d.size() == 0 ||
      !(d.minCoeff() > kSingularRcond * d.cwiseAbs().maxCoeff()) ||
      !(ldlt.rcond() >= kSingularRcond))
    throw SingularGram(index);
  return ldlt;
}

}  // namespace detail

/// Gram matrices and their pivoted factorizations, computed once per panel
/// and shared by the estimators, the oracle and the inference routines.
class PanelGeometry {
 public:
  explicit PanelGeometry(const Panel& panel) : t_len_(panel.t_len()) {
    const Index n = panel.n();
    const Index k = panel.k();
    grams_.reserve(n);
    factors_.reserve(n);
    weights_.resize(k, n);
    pooled_gram_ = MatrixXd::Zero(k, k);
    for (Index i = 0; i < n; ++i) {
      MatrixXd g = MatrixXd::Zero(k, k);
      g.selfadjointView<Eigen::Lower>().rankUpdate(panel.x[i].transpose());
      g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
      factors_.push_back(detail::checked_ldlt(g, static_cast<long>(i)));
      weights_.col(i) = factors_.back().solve(panel.x_next.col(i));
      pooled_gram_ += g;
      grams_.push_back(std::move(g));
    }
    pooled_factor_ = detail::checked_ldlt(pooled_gram_, kPooledIndex);
  }

  Index n() const { return static_cast<Index>(grams_.size()); }
  Index t_len() const { return t_len_; }

  const MatrixXd& gram(Index i) const { return grams_[i]; }
  const Eigen::LDLT<MatrixXd>& factor(Index i) const { return factors_[i]; }
  const MatrixXd& pooled_gram() const { return pooled_gram_; }
  const Eigen::LDLT<MatrixXd>& pooled_factor() const { return pooled_factor_; }

  /// u_i = (X_i'X_i)^{-1} x_{i,T+1}, one column per individual.
  const MatrixXd& forecast_weights() const { return weights_; }

  /// v_i = (X_i'X_i / T)^{-1} x_{i,T+1} = T u_i.
  VectorXd scaled_weights(Index i) const {
    return static_cast<double>(t_len_) * weights_.col(i);
  }

 private:
  Index t_len_;
  std::vector<MatrixXd> grams_;
  std::vector<Eigen::LDLT<MatrixXd>> factors_;
  MatrixXd weights_;
  MatrixXd pooled_gram_;
  Eigen::LDLT<MatrixXd> pooled_factor_;
};

inline MatrixXd fit_individual_ols(const Panel& panel, const PanelGeometry& geo) {
  MatrixXd slopes(panel.k(), panel.n());
  for (Index i = 0; i < panel.n(); ++i)
    slopes.col(i) = geo.factor(i).solve(panel.x[i].transpose() * panel.y.col(i));
  return slopes;
}

/// beta_hat_i = [X_i'X_i]^{-1} X_i'y_i for every individual (K x N).
inline MatrixXd fit_individual_ols(const Panel& panel) {
  panel.validate();
  return fit_individual_ols(panel, PanelGeometry(panel));
}

inline VectorXd fit_pooled_ols(const Panel& panel, const PanelGeometry& geo) {
  VectorXd moment = VectorXd::Zero(panel.k());
  for (Index i = 0; i < panel.n(); ++i) moment.noalias() += panel.x[i].transpose() * panel.y.col(i);
  return geo.pooled_factor().solve(moment);
}

/// (sum_j X_j'X_j)^{-1} sum_j X_j'y_j.
inline VectorXd fit_pooled_ols(const Panel& panel) {
  panel.validate();
  return fit_pooled_ols(panel, PanelGeometry(panel));
}

inline SlopeEstimates fit_slopes(const Panel& panel, const PanelGeometry& geo) {
  return {fit_individual_ols(panel, geo), fit_pooled_ols(panel, geo)};
}

inline SlopeEstimates fit_slopes(const Panel& panel) {
  panel.validate();
  return fit_slopes(panel, PanelGeometry(panel));
}

inline ResidualSet residuals(const Panel& panel, const SlopeEstimates& slopes) {
  if (slopes.individual.rows() != panel.k() || slopes.individual.cols() != panel.n())
    throw ShapeMismatch("slope estimates do not match panel dimensions");
  ResidualSet out{MatrixXd(panel.t_len(), panel.n())};
  for (Index i = 0; i < panel.n(); ++i)
    out.residuals.col(i) = panel.y.col(i) - panel.x[i] * slopes.individual.col(i);
  return out;
}

/// Within (fixed-effects) transformation: subtracts each individual's time
/// mean from x and y and shifts x_{i,T+1} by the same regressor mean.
inline Panel within_demean(const Panel& panel) {
  if (panel.demeaned) throw AlreadyDemeaned("panel has already been demeaned");
  Panel out = panel;
  for (Index i = 0; i < panel.n(); ++i) {
    const Eigen::RowVectorXd xbar = panel.x[i].colwise().mean();
    out.x[i].rowwise() -= xbar;
    out.x_next.col(i) -= xbar.transpose();
    out.y.col(i).array() -= panel.y.col(i).mean();
  }
  out.demeaned = true;
  return out;
}

}  // namespace panel_msfe
