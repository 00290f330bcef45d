#pragma once

// Shared fixtures and literal reference implementations for the test suites.
// The reference code uses dense matrices, explicit inverses and plain loops so
// that it shares no structure with the library's factorized evaluation.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "panel_msfe.hpp"

namespace pmt {

using namespace panel_msfe;

inline MatrixXd gaussian(std::mt19937_64& rng, Index rows, Index cols, double mean = 0.0,
                         double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = d(rng);
  return m;
}

/// Random panel with N(1,1) regressors and y = X_i b_i + noise.
inline Panel random_panel(std::mt19937_64& rng, Index n, Index t, Index k, const MatrixXd& betas,
                          double noise = 1.0) {
  Panel p;
  p.y.resize(t, n);
  for (Index i = 0; i < n; ++i) {
    p.x.push_back(gaussian(rng, t, k, 1.0, 1.0));
    p.y.col(i) = p.x[i] * betas.col(i) + noise * gaussian(rng, t, 1);
  }
  p.x_next = gaussian(rng, k, n, 1.0, 1.0);
  return p;
}

inline Panel random_panel(std::mt19937_64& rng, Index n, Index t, Index k, double noise = 1.0) {
  return random_panel(rng, n, t, k, gaussian(rng, k, n, 1.0, 0.5), noise);
}

/// (1/(1-phi^2)) phi^|s-t|, written out entry by entry.
inline MatrixXd ar1_toeplitz(Index t, double phi) {
  MatrixXd m(t, t);
  for (Index s = 0; s < t; ++s)
    for (Index r = 0; r < t; ++r) m(s, r) = std::pow(phi, std::abs(s - r)) / (1.0 - phi * phi);
  return m;
}

inline MatrixXd inv(const MatrixXd& a) { return a.inverse(); }

/// Dense Sigma_N and Sigma_T versions of a truth, for the literal formulas.
struct DenseTruth {
  MatrixXd betas;
  MatrixXd sigma_n;
  MatrixXd sigma_t;
};

inline double literal_e_ind(const Panel& p, const DenseTruth& d, Index i) {
  const MatrixXd& x = p.x[i];
  const VectorXd xn = p.x_next.col(i);
  const MatrixXd h = x * inv(x.transpose() * x) * xn;  // T x 1
  const MatrixXd proj = h * h.transpose();
  return d.sigma_n(i, i) * (d.sigma_t * proj).trace() + d.sigma_n(i, i) * d.sigma_t(0, 0);
}

inline MatrixXd literal_pooled_gram(const Panel& p) {
  MatrixXd g = MatrixXd::Zero(p.k(), p.k());
  for (Index j = 0; j < p.n(); ++j) g += p.x[j].transpose() * p.x[j];
  return g;
}

inline double literal_bias(const Panel& p, const MatrixXd& betas, Index i) {
  VectorXd m = VectorXd::Zero(p.k());
  for (Index j = 0; j < p.n(); ++j) m += p.x[j].transpose() * p.x[j] * (betas.col(j) - betas.col(i));
  return p.x_next.col(i).dot(inv(literal_pooled_gram(p)) * m);
}

inline double literal_pooled_var(const Panel& p, const DenseTruth& d, Index i) {
  MatrixXd b = MatrixXd::Zero(p.k(), p.k());
  for (Index j = 0; j < p.n(); ++j)
    for (Index k = 0; k < p.n(); ++k)
      b += d.sigma_n(j, k) * p.x[j].transpose() * d.sigma_t * p.x[k];
  const VectorXd w = inv(literal_pooled_gram(p)) * p.x_next.col(i);
  return w.dot(b * w);
}

inline double literal_e_pool(const Panel& p, const DenseTruth& d, Index i) {
  const double bias = literal_bias(p, d.betas, i);
  return bias * bias + literal_pooled_var(p, d, i) + d.sigma_n(i, i) * d.sigma_t(0, 0);
}

/// Literal tau^2 over all (i, k) with Sigma_N weights, true slopes, minus sign
/// on the individual slope-gap term.
inline double literal_tau(const Panel& p, const DenseTruth& d) {
  const Index n = p.n();
  const double t = static_cast<double>(p.t_len());
  const double nn = static_cast<double>(n);
  const MatrixXd g = literal_pooled_gram(p);
  std::vector<VectorXd> v(n), li(n);
  VectorXd avg = VectorXd::Zero(p.k());
  std::vector<double> proj(n);
  for (Index i = 0; i < n; ++i) {
    v[i] = inv(p.x[i].transpose() * p.x[i] / t) * p.x_next.col(i);
    proj[i] = std::sqrt(t) * literal_bias(p, d.betas, i);
    avg += p.x_next.col(i) * proj[i] / nn;
  }
  const VectorXd lam = inv(g / (nn * t)) * avg;
  for (Index i = 0; i < n; ++i) li[i] = lam - v[i] * proj[i];
  double tau = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < n; ++k) {
      const MatrixXd c = d.sigma_n(i, k) * p.x[i].transpose() * d.sigma_t * p.x[k] / t;
      const double q = v[i].dot(c * v[k]);
      tau += 2.0 * q * q + 4.0 * li[i].dot(c * li[k]);
    }
  return tau / nn;
}

/// Literal E_hat: (1/N) sum_i (x' G^{-1} sum_j X_j'X_j (b_j - b_i))^2.
inline double literal_e_hat(const Panel& p, const MatrixXd& b) {
  double s = 0.0;
  for (Index i = 0; i < p.n(); ++i) {
    const double v = literal_bias(p, b, i);
    s += v * v;
  }
  return s / static_cast<double>(p.n());
}

/// Residual autocovariance sum_{t} r_i[t] r_k[t+h] / (T-h-K) by loop.
inline double literal_autocov(const VectorXd& a, const VectorXd& b, Index h, Index k) {
  double s = 0.0;
  for (Index t = 0; t + h < a.size(); ++t) s += a(t) * b(t + h);
  return s / static_cast<double>(a.size() - h - k);
}

/// Banded estimate with entries xi(|s-t|) for |s-t| < b, built by loop.
/// Lag h above the diagonal pairs r_i at s with r_k at s+h.
inline MatrixXd literal_banded(const VectorXd& ri, const VectorXd& rk, Index b, Index k) {
  const Index t = ri.size();
  MatrixXd m = MatrixXd::Zero(t, t);
  for (Index s = 0; s < t; ++s)
    for (Index r = 0; r < t; ++r) {
      const Index h = std::abs(s - r);
      if (h < b) m(s, r) = literal_autocov(ri, rk, h, k);
    }
  return m;
}

/// Step-by-step feasible pipeline with a banded estimator and b' = 1.
struct LiteralResult {
  double e_hat = 0.0;
  double e1_hat = 0.0;
  double tau_sq = 0.0;
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline LiteralResult literal_pipeline(const Panel& p, Index band, double z) {
  const Index n = p.n();
  const double t = static_cast<double>(p.t_len());
  const double nn = static_cast<double>(n);
  MatrixXd bhat(p.k(), n);
  MatrixXd r(p.t_len(), n);
  for (Index i = 0; i < n; ++i) {
    bhat.col(i) = inv(p.x[i].transpose() * p.x[i]) * p.x[i].transpose() * p.y.col(i);
    r.col(i) = p.y.col(i) - p.x[i] * bhat.col(i);
  }
  LiteralResult out;
  out.e_hat = literal_e_hat(p, bhat);

  const MatrixXd g = literal_pooled_gram(p);
  VectorXd avg = VectorXd::Zero(p.k());
  std::vector<VectorXd> v(n), lam_i(n);
  std::vector<double> proj(n);
  for (Index i = 0; i < n; ++i) {
    const MatrixXd a = p.x[i].transpose() * p.x[i] / t;
    v[i] = inv(a) * p.x_next.col(i);
    proj[i] = std::sqrt(t) * literal_bias(p, bhat, i);
    avg += p.x_next.col(i) * proj[i] / nn;
  }
  const VectorXd lam = inv(g / (nn * t)) * avg;
  for (Index i = 0; i < n; ++i) lam_i[i] = v[i] * proj[i];

  for (Index i = 0; i < n; ++i) {
    const MatrixXd s = literal_banded(r.col(i), r.col(i), band, p.k());
    const MatrixXd x = p.x[i];
    const MatrixXd u = inv(x.transpose() * x) * p.x_next.col(i);
    out.e1_hat += (s * x * u * u.transpose() * x.transpose()).trace() / nn;
    const MatrixXd c = x.transpose() * s * x / t;
    const double q = v[i].dot(c * v[i]);
    const VectorXd l = lam - lam_i[i];
    out.tau_sq += (2.0 * q * q + 4.0 * l.dot(c * l)) / nn;
  }
  out.point = out.e_hat - 2.0 * out.e1_hat;
  const double half = z * std::sqrt(out.tau_sq) / (std::sqrt(nn) * t);
  out.lo = out.point - half;
  out.hi = out.point + half;
  return out;
}

/// Normal CDF from the series erf(x) = 2/sqrt(pi) sum (-1)^n x^(2n+1) / (n! (2n+1)),
/// evaluated in long double; accurate for |x| < 4.
inline long double series_cdf(long double x) {
  const long double z = x / std::sqrt(2.0L);
  long double term = z;
  long double sum = z;
  for (int n = 1; n < 200; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
  }
  return 0.5L + sum / std::sqrt(std::acos(-1.0L));
}

inline double bisect_quantile(double p) {
  long double lo = -4.0L;
  long double hi = 4.0L;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    (series_cdf(mid) < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

}  // namespace pmt
