#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Core>

#include "panel_msfe/error.hpp"

namespace panel_msfe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A T x T matrix kept in structured form
///
///     S = M^c * D_l * C * D_r * M^c
///
/// where C is a banded Toeplitz matrix, a geometric Toeplitz matrix
/// (scale * phi^|s-t|) or a dense matrix, D_l / D_r are optional diagonal
/// scalings and M = I - 11'/T is the centering projection (c in {0, 1}).
///
/// Products with a T x K block cost O(T K band) for the Toeplitz cores and
/// O(T K) for the geometric core. The dense form is only built on request.
class CovOperator {
 public:
  enum class Core { kBanded, kGeometric, kDense };

  CovOperator() = default;

  static CovOperator identity(Index t) { return scaled_identity(t, 1.0); }

  static CovOperator scaled_identity(Index t, double c) {
    return banded_toeplitz(t, VectorXd::Constant(1, c));
  }

  static CovOperator diagonal(const VectorXd& d) {
    CovOperator op = identity(d.size());
    op.left_ = d;
    return op;
  }

  /// Entry (s, t) = lags[|s - t|] when |s - t| < lags.size(), else 0.
  static CovOperator banded_toeplitz(Index t, VectorXd lags) {
    if (lags.size() < 1) throw InvalidBandwidth("banded Toeplitz operator needs at least lag 0");
    CovOperator op;
    op.core_ = Core::kBanded;
    op.t_ = t;
    if (lags.size() > t) lags.conservativeResize(t);
    op.lags_ = std::move(lags);
    return op;
  }

  /// Entry (s, t) = scale * phi^|s - t|.
  static CovOperator geometric(Index t, double scale, double phi) {
    if (!(std::abs(phi) < 1.0)) throw InvalidModel("geometric Toeplitz operator needs |phi| < 1");
    CovOperator op;
    op.core_ = Core::kGeometric;
    op.t_ = t;
    op.scale_ = scale;
    op.phi_ = phi;
    return op;
  }

  /// Covariance of a stationary AR(1) process with unit-variance innovations.
  static CovOperator ar1(Index t, double phi, double innovation_var = 1.0) {
    return geometric(t, innovation_var / (1.0 - phi * phi), phi);
  }

  static CovOperator dense(MatrixXd m) {
    if (m.rows() != m.cols()) throw ShapeMismatch("dense covariance must be square");
    CovOperator op;
    op.core_ = Core::kDense;
    op.t_ = m.rows();
    op.dense_ = std::move(m);
    return op;
  }

  Index size() const { return t_; }
  Core core() const { return core_; }
  bool centered() const { return centered_; }
  bool has_scaling() const { return left_.size() > 0 || right_.size() > 0; }

  /// Number of non-zero diagonals of the core (T for geometric and dense).
  Index band() const { return core_ == Core::kBanded ? lags_.size() : t_; }
  const VectorXd& lags() const { return lags_; }
  double geometric_scale() const { return scale_; }
  double geometric_phi() const { return phi_; }

  /// D_l * S * D_r.
  CovOperator scaled(const VectorXd& left, const VectorXd& right) const {
    if (left.size() != t_ || right.size() != t_)
      throw ShapeMismatch("scaling vectors must have length T");
    if (centered_) {
      MatrixXd m = materialize();
      return dense(left.asDiagonal() * m * right.asDiagonal());
    }
    CovOperator op = *this;
    op.left_ = op.left_.size() ? VectorXd(op.left_.cwiseProduct(left)) : left;
    op.right_ = op.right_.size() ? VectorXd(op.right_.cwiseProduct(right)) : right;
    return op;
  }

  /// M * S * M.
  CovOperator centered_version() const {
    CovOperator op = *this;
    op.centered_ = true;
    return op;
  }

  CovOperator times(double c) const {
    CovOperator op = *this;
    switch (core_) {
      case Core::kBanded: op.lags_ *= c; break;
      case Core::kGeometric: op.scale_ *= c; break;
      case Core::kDense: op.dense_ *= c; break;
    }
    return op;
  }

  /// S * b.
  MatrixXd apply(const MatrixXd& b) const {
    check_rows(b);
    MatrixXd w = prepare(b, right_);
    MatrixXd out = apply_core(w);
    if (left_.size()) out = left_.asDiagonal() * out;
    if (centered_) center(out);
    return out;
  }

  /// a' * S * b.
  MatrixXd bilinear(const MatrixXd& a, const MatrixXd& b) const {
    check_rows(a);
    check_rows(b);
    return prepare(a, left_).transpose() * apply_core(prepare(b, right_));
  }

  /// w' * S * w.
  double quad(const VectorXd& w) const { return bilinear(w, w)(0, 0); }

  MatrixXd materialize() const { return apply(MatrixXd::Identity(t_, t_)); }

 private:
  void check_rows(const MatrixXd& b) const {
    if (b.rows() != t_) throw ShapeMismatch("operand row count does not match operator size");
  }

  static void center(MatrixXd& m) { m.rowwise() -= m.colwise().mean(); }

  MatrixXd prepare(const MatrixXd& b, const VectorXd& scale) const {
    MatrixXd w = b;
    if (centered_) center(w);
    if (scale.size()) w = scale.asDiagonal() * w;
    return w;
  }

  MatrixXd apply_core(const MatrixXd& b) const {
    switch (core_) {
      case Core::kBanded: {
        MatrixXd out = lags_(0) * b;
        for (Index h = 1; h < lags_.size(); ++h) {
          const double c = lags_(h);
          if (c == 0.0) continue;
          out.topRows(t_ - h) += c * b.bottomRows(t_ - h);
          out.bottomRows(t_ - h) += c * b.topRows(t_ - h);
        }
        return out;
      }
      case Core::kGeometric: {
        // Sum of a forward and a backward first-order recursion.
        MatrixXd fwd = b;
        MatrixXd bwd = b;
        for (Index s = 1; s < t_; ++s) fwd.row(s) += phi_ * fwd.row(s - 1);
        for (Index s = t_ - 2; s >= 0; --s) bwd.row(s) += phi_ * bwd.row(s + 1);
        return scale_ * (fwd + bwd - b);
      }
      case Core::kDense:
        return dense_ * b;
    }
    return b;
  }

  Core core_ = Core::kBanded;
  Index t_ = 0;
  VectorXd lags_;
  double scale_ = 0.0;
  double phi_ = 0.0;
  MatrixXd dense_;
  VectorXd left_;
  VectorXd right_;
  bool centered_ = false;
};

/// N x N cross-sectional covariance with structure-aware pair iteration.
class CrossCov {
 public:
  enum class Kind { kIdentity, kScaled, kDiagonal, kDense };

  CrossCov() = default;

  static CrossCov identity(Index n) { return scaled(n, 1.0); }

  static CrossCov scaled(Index n, double c) {
    CrossCov s;
    s.kind_ = c == 1.0 ? Kind::kIdentity : Kind::kScaled;
    s.n_ = n;
    s.scale_ = c;
    return s;
  }

  static CrossCov diagonal(VectorXd d) {
    CrossCov s;
    s.kind_ = Kind::kDiagonal;
    s.n_ = d.size();
    s.diag_ = std::move(d);
    return s;
  }

  static CrossCov dense(MatrixXd m) {
    if (m.rows() != m.cols()) throw ShapeMismatch("Sigma_N must be square");
    CrossCov s;
    s.kind_ = Kind::kDense;
    s.n_ = m.rows();
    s.dense_ = std::move(m);
    return s;
  }

  Kind kind() const { return kind_; }
  Index size() const { return n_; }
  bool is_diagonal() const { return kind_ != Kind::kDense; }

  double operator()(Index i, Index k) const {
    switch (kind_) {
      case Kind::kIdentity:
      case Kind::kScaled: return i == k ? scale_ : 0.0;
      case Kind::kDiagonal: return i == k ? diag_(i) : 0.0;
      case Kind::kDense: return dense_(i, k);
    }
    return 0.0;
  }

  /// Calls f(i, k, sigma_ik) for every pair with sigma_ik != 0, in
  /// row-major order.
  template <class F>
  void for_each_nonzero(F&& f) const {
    if (is_diagonal()) {
      for (Index i = 0; i < n_; ++i) {
        const double s = (*this)(i, i);
        if (s != 0.0) f(i, i, s);
      }
      return;
    }
    for (Index i = 0; i < n_; ++i)
      for (Index k = 0; k < n_; ++k)
        if (dense_(i, k) != 0.0) f(i, k, dense_(i, k));
  }

  MatrixXd materialize() const {
    if (kind_ == Kind::kDense) return dense_;
    MatrixXd m = MatrixXd::Zero(n_, n_);
    for (Index i = 0; i < n_; ++i) m(i, i) = (*this)(i, i);
    return m;
  }

 private:
  Kind kind_ = Kind::kIdentity;
  Index n_ = 0;
  double scale_ = 1.0;
  VectorXd diag_;
  MatrixXd dense_;
};

}  // namespace panel_msfe
