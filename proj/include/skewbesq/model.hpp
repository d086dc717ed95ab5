#pragma once

#include <cmath>
#include <string>

#include "skewbesq/errors.hpp"

namespace skewbesq {

/// Parameters of the skew-reflected CIR equation
///
///   dR = sigma sqrt|R| dW + (sigma^2/4)(delta - b R) dt + (2p-1) dl^0(R - lambda^2)
///
/// sigma = 2, b = 0 is the squared Bessel process of dimension delta.
struct ModelParams {
  double sigma = 2.0;
  double delta = 2.0;
  double b = 0.0;
  double p = 0.5;

  double sigma2() const { return sigma * sigma; }
  /// Coefficient 2p-1 in front of the local time.
  double skew() const { return 2.0 * p - 1.0; }
  /// Point-symmetric sign of 2p-1.
  int skew_sign() const { return p > 0.5 ? 1 : (p < 0.5 ? -1 : 0); }

  bool operator==(const ModelParams&) const = default;
};

inline void validate(const ModelParams& m) {
  if (!std::isfinite(m.sigma) || !(m.sigma > 0.0))
    throw ValidationError("sigma must be a finite positive number");
  if (!std::isfinite(m.delta) || !(m.delta > 0.0))
    throw ValidationError("delta must be a finite positive number");
  if (!std::isfinite(m.b) || !(m.b >= 0.0))
    throw ValidationError("b must be a finite nonnegative number");
  if (!(m.p > 0.0 && m.p < 1.0))
    throw ValidationError(
        "p must lie in (0,1): for |2p-1|>1 the equation has no solution "
        "and p in {0,1} (pure reflection) is not supported");
}

inline ModelParams make_params(double sigma, double delta, double b, double p) {
  ModelParams m{sigma, delta, b, p};
  validate(m);
  return m;
}

} // namespace skewbesq
