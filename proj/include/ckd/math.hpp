#pragma once

#include <cmath>

namespace ckd {

// log(1 + e^x) without overflow: max(x, 0) + log1p(e^{-|x|}).
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -ln sigmoid(x) == softplus(-x)
inline double neg_log_sigmoid(double x) { return softplus(-x); }

}  // namespace ckd
