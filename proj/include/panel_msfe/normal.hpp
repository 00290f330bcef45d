#pragma once

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "panel_msfe/error.hpp"

namespace panel_msfe {

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Phi^{-1}(p). Computed from the lower tail for p <= 1/2 and mirrored
/// otherwise, so quantile(1 - p) == -quantile(p) holds exactly.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw OutOfRange("normal quantile needs 0 < p < 1");
  static const boost::math::normal_distribution<double> standard;
  if (p > 0.5) return -boost::math::quantile(standard, 1.0 - p);
  return boost::math::quantile(standard, p);
}

}  // namespace panel_msfe
