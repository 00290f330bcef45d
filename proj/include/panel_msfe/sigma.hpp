#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <variant>

#include <Eigen/Core>

#include "panel_msfe/cov_operator.hpp"
#include "panel_msfe/error.hpp"
#include "panel_msfe/oracle.hpp"
#include "panel_msfe/panel.hpp"

namespace panel_msfe {

/// Known positive scale omega(x_{i,t}) for heteroskedastic errors.
struct ScaleFunction {
  enum class Kind { kAbsComponent, kConstant };

  Kind kind = Kind::kAbsComponent;
  Index component = 0;  ///< used by kAbsComponent
  double value = 1.0;   ///< used by kConstant

  static ScaleFunction abs_component(Index c) { return {Kind::kAbsComponent, c, 1.0}; }
  static ScaleFunction constant(double v) { return {Kind::kConstant, 0, v}; }

  template <class Row>
  double operator()(const Row& x) const {
    return kind == Kind::kAbsComponent ? std::abs(x(component)) : value;
  }

  std::string describe() const {
    return kind == Kind::kAbsComponent ? "abs(x" + std::to_string(component + 1) + ")"
                                       : "const(" + std::to_string(value) + ")";
  }

  friend bool operator==(const ScaleFunction& a, const ScaleFunction& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::kAbsComponent ? a.component == b.component : a.value == b.value;
  }
};

/// Strategy selecting the estimator of the T x T error covariance.
/// A bandwidth of 0 means "use default_bandwidth(T)".
struct SigmaSpec {
  struct Banded {
    Index bandwidth = 0;
    friend bool operator==(const Banded&, const Banded&) = default;
  };
  struct Ar1Parametric {
    friend bool operator==(const Ar1Parametric&, const Ar1Parametric&) = default;
  };
  struct HeteroScaled {
    ScaleFunction scale;
    std::shared_ptr<const SigmaSpec> inner;
    friend bool operator==(const HeteroScaled& a, const HeteroScaled& b) {
      if (!(a.scale == b.scale)) return false;
      if (!a.inner || !b.inner) return a.inner == b.inner;
      return *a.inner == *b.inner;
    }
  };
  struct Hac {
    Index bandwidth = 0;
    friend bool operator==(const Hac&, const Hac&) = default;
  };
  /// Plugs in a known covariance; a null model means unit-variance
  /// independent errors (Sigma_N = I, Sigma_T = I).
  struct TrueSigma {
    std::shared_ptr<const TrueModel> truth;
    friend bool operator==(const TrueSigma& a, const TrueSigma& b) { return a.truth == b.truth; }
  };

  std::variant<Banded, Ar1Parametric, HeteroScaled, Hac, TrueSigma> variant = Banded{};
  bool demean_adjust = false;

  static SigmaSpec banded(Index b = 0) { return {Banded{b}, false}; }
  static SigmaSpec ar1() { return {Ar1Parametric{}, false}; }
  static SigmaSpec hac(Index b = 0) { return {Hac{b}, false}; }
  static SigmaSpec hetero(ScaleFunction scale, SigmaSpec inner) {
    return {HeteroScaled{scale, std::make_shared<const SigmaSpec>(std::move(inner))}, false};
  }
  static SigmaSpec true_sigma(std::shared_ptr<const TrueModel> truth = nullptr) {
    return {TrueSigma{std::move(truth)}, false};
  }

  SigmaSpec with_demean(bool on = true) const {
    SigmaSpec s = *this;
    s.demean_adjust = on;
    return s;
  }

  std::string describe() const {
    std::string base = std::visit(
        [](const auto& v) -> std::string {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, Banded>)
            return v.bandwidth ? "banded(b=" + std::to_string(v.bandwidth) + ")" : "banded(b=auto)";
          else if constexpr (std::is_same_v<V, Ar1Parametric>)
            return "ar1";
          else if constexpr (std::is_same_v<V, HeteroScaled>)
            return "hetero[" + v.scale.describe() + "](" + (v.inner ? v.inner->describe() : "?") + ")";
          else if constexpr (std::is_same_v<V, Hac>)
            return v.bandwidth ? "hac(b=" + std::to_string(v.bandwidth) + ")" : "hac(b=auto)";
          else
            return "true";
        },
        variant);
    return demean_adjust ? base + "+demean" : base;
  }

  friend bool operator==(const SigmaSpec& a, const SigmaSpec& b) {
    return a.demean_adjust == b.demean_adjust && a.variant == b.variant;
  }
};

/// T x T covariance estimate for a pair (i, k), held in structured form.
struct SigmaEstimate {
  CovOperator op;
  Index band = 0;         ///< effective bandwidth (T for full-band estimators)
  bool psd_flag = false;  ///< true when positive semidefinite by construction

  MatrixXd matrix() const { return op.materialize(); }
};

/// round(T^{2/7}) with halves rounded up, at least 1.
inline Index default_bandwidth(Index t_len) {
  if (t_len < 2) throw InvalidBandwidth("default bandwidth needs t_len >= 2");
  const double raw = std::pow(static_cast<double>(t_len), 2.0 / 7.0);
  return std::max<Index>(1, static_cast<Index>(std::floor(raw + 0.5)));
}

/// Lag-h cross autocovariance sum_{t<=T-h} r_i[t] r_k[t+h] / (T - h - K).
inline double autocov_hat(const VectorXd& r_i, const VectorXd& r_k, Index h, Index k_dim) {
  const Index t = r_i.size();
  if (r_k.size() != t) throw ShapeMismatch("residual series must have equal length");
  if (h < 0 || h >= t || t - h - k_dim <= 0)
    throw LagTooLarge("lag " + std::to_string(h) + " leaves no degrees of freedom (T=" +
                      std::to_string(t) + ", K=" + std::to_string(k_dim) + ")");
  return r_i.head(t - h).dot(r_k.tail(t - h)) / static_cast<double>(t - h - k_dim);
}

/// Toeplitz estimate with entries xi(|s-t|) for |s-t| < b and exact zeros
/// elsewhere.
inline SigmaEstimate banded_sigma(const VectorXd& r_i, const VectorXd& r_k, Index b, Index k_dim) {
  const Index t = r_i.size();
  if (b < 1 || b > t - k_dim)
    throw InvalidBandwidth("bandwidth " + std::to_string(b) + " outside [1, T-K] = [1, " +
                           std::to_string(t - k_dim) + "]");
  VectorXd lags(b);
  for (Index h = 0; h < b; ++h) lags(h) = autocov_hat(r_i, r_k, h, k_dim);
  return {CovOperator::banded_toeplitz(t, std::move(lags)), b, false};
}

inline constexpr double kPhiClamp = 0.999;

/// phi + (1 + 3 phi) / T, clamped to [-0.999, 0.999].
inline double bias_corrected_phi(double phi_hat, Index t_len) {
  const double bc = phi_hat + (1.0 + 3.0 * phi_hat) / static_cast<double>(t_len);
  return std::clamp(bc, -kPhiClamp, kPhiClamp);
}

/// Least-squares AR(1) coefficient of r_t on r_{t-1} (no intercept).
inline double ar1_coefficient(const VectorXd& r) {
  const Index t = r.size();
  const double denom = r.head(t - 1).squaredNorm();
  if (denom <= 0.0) return 0.0;
  return r.head(t - 1).dot(r.tail(t - 1)) / denom;
}

/// Parametric AR(1) estimate sigma^2 * phi_bc^|s-t| with
/// sigma^2 = sum r_t^2 / (T - K).
inline SigmaEstimate ar1_sigma(const VectorXd& r_i, Index k_dim) {
  const Index t = r_i.size();
  if (t < 3) throw InvalidBandwidth("AR(1) estimator needs T >= 3");
  if (t - k_dim <= 0) throw LagTooLarge("AR(1) variance estimate needs T > K");
  const double phi = bias_corrected_phi(ar1_coefficient(r_i), t);
  const double var = r_i.squaredNorm() / static_cast<double>(t - k_dim);
  return {CovOperator::geometric(t, var, phi), t, true};
}

/// Bartlett-weighted outer product: entry (s,t) = (1 - |s-t|/(b+1)) 1{|s-t| < b} r_s r_t.
inline SigmaEstimate hac_sigma(const VectorXd& r_i, const VectorXd& r_k, Index b) {
  const Index t = r_i.size();
  if (b < 1) throw InvalidBandwidth("HAC bandwidth must be >= 1");
  const Index band = std::min(b, t);
  VectorXd w(band);
  for (Index h = 0; h < band; ++h) w(h) = 1.0 - static_cast<double>(h) / static_cast<double>(b + 1);
  return {CovOperator::banded_toeplitz(t, std::move(w)).scaled(r_i, r_k), band, band == 1 && r_i == r_k};
}

inline SigmaEstimate hac_sigma(const VectorXd& r_i, Index b) { return hac_sigma(r_i, r_i, b); }

/// M_T * S * M_T with M_T = I - 11'/T.
inline SigmaEstimate demean_adjust(const SigmaEstimate& est) {
  return {est.op.centered_version(), est.band, est.psd_flag};
}

/// omega(x_{i,t}) for t = 1..T; throws ZeroScale when any value is <= 1e-12.
inline VectorXd scale_series(const MatrixXd& x_i, const ScaleFunction& scale) {
  VectorXd w(x_i.rows());
  for (Index t = 0; t < x_i.rows(); ++t) {
    w(t) = scale(x_i.row(t));
    if (!(w(t) > 1e-12)) throw ZeroScale("scale function is not positive at t=" + std::to_string(t));
  }
  return w;
}

/// Estimate for one pair of residual series. `x_i` / `x_k` are the matching
/// regressor blocks (used by scale functions) and `same` marks i == k.
inline SigmaEstimate estimate_pair(const SigmaSpec& spec, const VectorXd& r_i, const VectorXd& r_k,
                                   const MatrixXd& x_i, const MatrixXd& x_k, bool same,
                                   Index k_dim);

/// Omega_i * inner(r_i / omega_i, r_k / omega_k) * Omega_k.
inline SigmaEstimate hetero_sigma(const VectorXd& r_i, const VectorXd& r_k, const MatrixXd& x_i,
                                  const MatrixXd& x_k, bool same, const ScaleFunction& scale,
                                  const SigmaSpec& inner, Index k_dim) {
  const VectorXd wi = scale_series(x_i, scale);
  const VectorXd wk = same ? wi : scale_series(x_k, scale);
  const VectorXd si = r_i.cwiseQuotient(wi);
  const VectorXd sk = same ? si : VectorXd(r_k.cwiseQuotient(wk));
  SigmaEstimate est = estimate_pair(inner, si, sk, x_i, x_k, same, k_dim);
  return {est.op.scaled(wi, wk), est.band, est.psd_flag && same};
}

/// Single-individual form of the heteroskedasticity-scaled estimator.
inline SigmaEstimate hetero_sigma(const VectorXd& resid_i, const MatrixXd& x_i,
                                  const ScaleFunction& scale, const SigmaSpec& inner, Index k_dim) {
  return hetero_sigma(resid_i, resid_i, x_i, x_i, true, scale, inner, k_dim);
}

inline SigmaEstimate estimate_pair(const SigmaSpec& spec, const VectorXd& r_i, const VectorXd& r_k,
                                   const MatrixXd& x_i, const MatrixXd& x_k, bool same,
                                   Index k_dim) {
  const Index t = r_i.size();
  auto resolve = [t](Index b) { return b > 0 ? b : default_bandwidth(t); };
  SigmaEstimate est = std::visit(
      [&](const auto& v) -> SigmaEstimate {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, SigmaSpec::Banded>) {
          return banded_sigma(r_i, r_k, resolve(v.bandwidth), k_dim);
        } else if constexpr (std::is_same_v<V, SigmaSpec::Ar1Parametric>) {
          if (!same)
            throw ValidationError("the parametric AR(1) estimator has no cross-sectional form; use b'=1");
          return ar1_sigma(r_i, k_dim);
        } else if constexpr (std::is_same_v<V, SigmaSpec::HeteroScaled>) {
          if (!v.inner) throw ValidationError("hetero-scaled estimator needs an inner estimator");
          return hetero_sigma(r_i, r_k, x_i, x_k, same, v.scale, *v.inner, k_dim);
        } else if constexpr (std::is_same_v<V, SigmaSpec::Hac>) {
          return hac_sigma(r_i, r_k, resolve(v.bandwidth));
        } else {
          // Known covariance: handled by estimate_sigma, which knows (i, k).
          return {same ? CovOperator::identity(t) : CovOperator::scaled_identity(t, 0.0), 1, true};
        }
      },
      spec.variant);
  return spec.demean_adjust ? demean_adjust(est) : est;
}

/// Estimate for the pair (i, k) of a fitted panel; applies the M_T
/// adjustment when the spec requests it.
inline SigmaEstimate estimate_sigma(const SigmaSpec& spec, const Panel& panel,
                                    const ResidualSet& resid, Index i, Index k) {
  if (const auto* known = std::get_if<SigmaSpec::TrueSigma>(&spec.variant); known && known->truth) {
    SigmaEstimate est{known->truth->pair_cov(i, k), panel.t_len(), true};
    return spec.demean_adjust ? demean_adjust(est) : est;
  }
  return estimate_pair(spec, resid.residuals.col(i), resid.residuals.col(k), panel.x[i], panel.x[k],
                       i == k, panel.k());
}

}  // namespace panel_msfe
