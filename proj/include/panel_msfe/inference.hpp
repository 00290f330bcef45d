#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "panel_msfe/error.hpp"
#include "panel_msfe/normal.hpp"
#include "panel_msfe/panel.hpp"
#include "panel_msfe/sigma.hpp"
#include "panel_msfe/variance_terms.hpp"

namespace panel_msfe {

/// Cross-sectional kernel K(|i-k| / b'). Every shape satisfies K(0) = 1 and
/// K(x) = 0 for x >= 1.
struct KernelSpec {
  enum class Shape { kBartlett, kParzen };

  Shape shape = Shape::kBartlett;
  double b_prime = 1.0;

  double operator()(double x) const {
    x = std::abs(x);
    if (x >= 1.0) return 0.0;
    switch (shape) {
      case Shape::kBartlett: return 1.0 - x;
      case Shape::kParzen:
        return x <= 0.5 ? 1.0 - 6.0 * x * x + 6.0 * x * x * x : 2.0 * std::pow(1.0 - x, 3);
    }
    return 0.0;
  }

  double weight(Index i, Index k) const {
    return (*this)(static_cast<double>(std::abs(i - k)) / b_prime);
  }

  /// Largest |i - k| with a non-zero weight.
  Index reach() const {
    return std::max<Index>(0, static_cast<Index>(std::ceil(b_prime)) - 1);
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

struct InferenceOptions {
  double alpha = 0.05;
  /// Use the displayed endpoints [Phi^{-1}(alpha), Phi^{-1}(1-alpha)] instead
  /// of the two-sided z = Phi^{-1}(1 - alpha/2).
  bool strict_paper_ci = false;
  LambdaSign lambda_sign = LambdaSign::kDerived;
  /// Replace a non-positive variance estimate by its diagonal quadratic part.
  bool floor_variance = true;
};

enum class Decision { kPooledPreferred, kIndividualPreferred, kInconclusive };

inline std::string to_string(Decision d) {
  switch (d) {
    case Decision::kPooledPreferred: return "pooled preferred";
    case Decision::kIndividualPreferred: return "individual preferred";
    case Decision::kInconclusive: return "inconclusive";
  }
  return "inconclusive";
}

/// Confidence interval for E^pool - E^ind with its ingredients.
struct InferenceResult {
  double e_hat = 0.0;
  double e1_hat = 0.0;
  VectorXd e1_components;  ///< per-individual E1_hat^{(i)}
  double tau_sq = 0.0;
  double point = 0.0;  ///< E_hat - 2 E1_hat
  double lo = 0.0;
  double hi = 0.0;
  double alpha = 0.05;
  double z = 0.0;  ///< quantile used for the half-width
  Index bandwidth = 0;
  double b_prime = 1.0;
  std::string variant_used;
  bool degenerate_variance = false;
  Index n = 0;
  Index t_len = 0;

  double length() const { return hi - lo; }
  bool covers(double value) const { return lo <= value && value <= hi; }

  /// The interval targets E^pool - E^ind: entirely negative means the pooled
  /// forecasts have the smaller error.
  Decision decision() const {
    if (hi < 0.0) return Decision::kPooledPreferred;
    if (lo > 0.0) return Decision::kIndividualPreferred;
    return Decision::kInconclusive;
  }
};

inline double e_hat(const Panel& panel, const SlopeEstimates& slopes, const PanelGeometry& geo) {
  const MatrixXd gaps = detail::pooled_gaps(geo, slopes.individual);
  double sum = 0.0;
  for (Index i = 0; i < panel.n(); ++i) {
    const double f = panel.x_next.col(i).dot(gaps.col(i));
    sum += f * f;
  }
  return sum / static_cast<double>(panel.n());
}

/// (1/N) sum_i (x_{i,T+1}' (sum_j X_j'X_j)^{-1} sum_j X_j'X_j (b_j - b_i))^2.
inline double e_hat(const Panel& panel, const SlopeEstimates& slopes) {
  panel.validate();
  return e_hat(panel, slopes, PanelGeometry(panel));
}

struct E1Hat {
  double value = 0.0;
  VectorXd components;
};

/// X_i' S^{(i,k)} X_k for all kernel-supported pairs, weighted by K(|i-k|/b').
/// The diagonal entries come first, one per individual, in order.
inline std::vector<PairCross> estimated_pair_crosses(const Panel& panel, const ResidualSet& resid,
                                                     const SigmaSpec& spec,
                                                     const KernelSpec& kernel,
                                                     Index* band = nullptr) {
  std::vector<PairCross> pairs;
  const Index n = panel.n();
  pairs.reserve(n);
  for (Index i = 0; i < n; ++i) {
    const SigmaEstimate est = estimate_sigma(spec, panel, resid, i, i);
    if (band && i == 0) *band = est.band;
    pairs.push_back({i, i, est.op.bilinear(panel.x[i], panel.x[i])});
  }
  const Index reach = kernel.reach();
  for (Index i = 0; i < n; ++i) {
    for (Index k = std::max<Index>(0, i - reach); k <= std::min(n - 1, i + reach); ++k) {
      if (k == i) continue;
      const double w = kernel.weight(i, k);
      if (w <= 0.0) continue;
      const SigmaEstimate est = estimate_sigma(spec, panel, resid, i, k);
      pairs.push_back({i, k, w * est.op.bilinear(panel.x[i], panel.x[k])});
    }
  }
  return pairs;
}

namespace detail {

inline E1Hat e1_from_pairs(const Panel& panel, const PanelGeometry& geo,
                           const std::vector<PairCross>& pairs) {
  const Index n = panel.n();
  const double t = static_cast<double>(panel.t_len());
  E1Hat out{0.0, VectorXd::Zero(n)};
  for (const auto& p : pairs) {
    if (p.i != p.k) continue;
    const VectorXd v = geo.scaled_weights(p.i);
    out.components(p.i) = v.dot(p.cross * v) / (t * t);
  }
  out.value = out.components.mean();
  return out;
}

inline SigmaSpec effective_spec(const Panel& panel, const SigmaSpec& spec) {
  return panel.demeaned && !spec.demean_adjust ? spec.with_demean(true) : spec;
}

}  // namespace detail

/// (1/N) sum_i Tr[S_i X_i (X_i'X_i)^{-1} x x' (X_i'X_i)^{-1} X_i'], evaluated as
/// v_i' (X_i' S_i X_i) v_i / T^2.
inline E1Hat e1_hat(const Panel& panel, const ResidualSet& resid, const SigmaSpec& spec) {
  panel.validate();
  const PanelGeometry geo(panel);
  std::vector<PairCross> pairs;
  for (Index i = 0; i < panel.n(); ++i) {
    const SigmaEstimate est = estimate_sigma(spec, panel, resid, i, i);
    pairs.push_back({i, i, est.op.bilinear(panel.x[i], panel.x[i])});
  }
  return detail::e1_from_pairs(panel, geo, pairs);
}

/// Lambda_hat and Lambda_hat_k: the slope-gap terms at the OLS estimates.
inline LambdaTerms lambda_hats(const Panel& panel, const SlopeEstimates& slopes) {
  panel.validate();
  return lambda_terms(panel, PanelGeometry(panel), slopes.individual);
}

struct TauHat {
  double value = 0.0;  ///< after flooring
  double raw = 0.0;
  bool degenerate = false;
};

inline TauHat tau_from_pairs(const Panel& panel, const PanelGeometry& geo,
                             const SlopeEstimates& slopes, const std::vector<PairCross>& pairs,
                             const InferenceOptions& opts) {
  const LambdaTerms lambdas = lambda_terms(panel, geo, slopes.individual);
  const VarianceParts parts = assemble_variance(panel, geo, lambdas, pairs, opts.lambda_sign);
  TauHat out;
  out.raw = parts.total();
  out.value = out.raw;
  if (!(out.raw > 0.0)) {
    out.degenerate = true;
    if (!opts.floor_variance)
      throw DegenerateVariance("variance estimate " + std::to_string(out.raw) + " is not positive");
    out.value = parts.diagonal_abs_quadratic;
  }
  return out;
}

/// Feasible variance estimate tau_hat_N^2 over kernel-supported pairs.
inline TauHat tau_hat(const Panel& panel, const SlopeEstimates& slopes, const ResidualSet& resid,
                      const SigmaSpec& spec, const KernelSpec& kernel,
                      const InferenceOptions& opts = {}) {
  panel.validate();
  const PanelGeometry geo(panel);
  return tau_from_pairs(panel, geo, slopes, estimated_pair_crosses(panel, resid, spec, kernel), opts);
}

/// Interval around E_hat - 2 E1_hat with half-width z sqrt(tau^2) / (sqrt(N) T).
inline InferenceResult confidence_interval(double e_hat_value, double e1_hat_value, double tau_sq,
                                           Index n, Index t_len, double alpha,
                                           bool strict_paper_ci = false) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw OutOfRange("alpha must lie in (0, 1)");
  if (!(tau_sq > 0.0)) throw NonpositiveVariance("tau^2 must be positive");
  if (n < 1 || t_len < 1) throw OutOfRange("n and t_len must be positive");
  InferenceResult r;
  r.e_hat = e_hat_value;
  r.e1_hat = e1_hat_value;
  r.tau_sq = tau_sq;
  r.alpha = alpha;
  r.n = n;
  r.t_len = t_len;
  r.point = e_hat_value - 2.0 * e1_hat_value;
  const double scale = std::sqrt(tau_sq) / (std::sqrt(static_cast<double>(n)) * static_cast<double>(t_len));
  if (strict_paper_ci) {
    r.z = normal_quantile(1.0 - alpha);
    r.lo = r.point + normal_quantile(alpha) * scale;
    r.hi = r.point + r.z * scale;
  } else {
    r.z = normal_quantile(1.0 - alpha / 2.0);
    r.lo = r.point - r.z * scale;
    r.hi = r.point + r.z * scale;
  }
  return r;
}

inline InferenceResult run_inference(const Panel& panel, const PanelGeometry& geo,
                                     const SlopeEstimates& slopes, const ResidualSet& resid,
                                     const SigmaSpec& spec, const KernelSpec& kernel,
                                     const InferenceOptions& opts) {
  const SigmaSpec used = detail::effective_spec(panel, spec);
  Index band = 0;
  const auto pairs = estimated_pair_crosses(panel, resid, used, kernel, &band);
  const E1Hat e1 = detail::e1_from_pairs(panel, geo, pairs);
  const double eh = e_hat(panel, slopes, geo);
  const TauHat tau = tau_from_pairs(panel, geo, slopes, pairs, opts);

  InferenceResult r;
  if (tau.value > 0.0) {
    r = confidence_interval(eh, e1.value, tau.value, panel.n(), panel.t_len(), opts.alpha,
                            opts.strict_paper_ci);
  } else {
    // Zero variance even after flooring (e.g. noiseless data): the interval
    // collapses to the point estimate.
    r.e_hat = eh;
    r.e1_hat = e1.value;
    r.alpha = opts.alpha;
    r.n = panel.n();
    r.t_len = panel.t_len();
    r.point = eh - 2.0 * e1.value;
    r.lo = r.hi = r.point;
    r.tau_sq = 0.0;
    r.z = normal_quantile(opts.strict_paper_ci ? 1.0 - opts.alpha : 1.0 - opts.alpha / 2.0);
  }
  r.e1_components = e1.components;
  r.degenerate_variance = tau.degenerate;
  r.bandwidth = band;
  r.b_prime = kernel.b_prime;
  r.variant_used = used.describe();
  return r;
}

/// Full feasible pipeline: fit, residuals, covariance estimates, E_hat,
/// E1_hat, tau_hat^2 and the interval. Deterministic.
inline InferenceResult run_inference(const Panel& panel, const SigmaSpec& spec,
                                     const KernelSpec& kernel = {},
                                     const InferenceOptions& opts = {}) {
  panel.validate();
  const PanelGeometry geo(panel);
  const SlopeEstimates slopes = fit_slopes(panel, geo);
  const ResidualSet resid = residuals(panel, slopes);
  return run_inference(panel, geo, slopes, resid, spec, kernel, opts);
}

}  // namespace panel_msfe
