#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "skewbesq/errors.hpp"
#include "skewbesq/model.hpp"

namespace skewbesq {

/// Value with first and second derivative at a point.
struct Jet {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Twice-differentiable real function with analytic derivatives on a closed
/// validity interval.
class ScalarFunction {
public:
  using Evaluator = std::function<Jet(double)>;

  ScalarFunction() = default;
  ScalarFunction(std::string name, Evaluator eval,
                 double lo = -std::numeric_limits<double>::infinity(),
                 double hi = std::numeric_limits<double>::infinity())
      : name_(std::move(name)), eval_(std::move(eval)), lo_(lo), hi_(hi) {}

  Jet operator()(double x) const {
    if (!in_domain(x))
      throw DomainError(name_ + ": argument " + std::to_string(x) + " outside validity domain");
    return eval_(x);
  }
  double value(double x) const { return (*this)(x).value; }

  bool in_domain(double x) const { return x >= lo_ && x <= hi_; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }
  const std::string& name() const { return name_; }

private:
  std::string name_;
  Evaluator eval_;
  double lo_ = 0.0, hi_ = 0.0;
};

/// Time-homogeneous generator
///   L f(x) = (sigma^2/2)|x| f''(x) + (sigma^2/4)(delta - b x) f'(x).
struct GeneratorL {
  ModelParams params;

  double apply(double x, const Jet& f) const {
    const double s2 = params.sigma2();
    return 0.5 * s2 * std::abs(x) * f.d2 + 0.25 * s2 * (params.delta - params.b * x) * f.d1;
  }
  double apply(const ScalarFunction& f, double x) const { return apply(x, f(x)); }
};

namespace detail {

inline bool is_nonpositive_integer(double b) {
  return b <= 0.0 && std::floor(b) == b;
}

inline constexpr int kummer_max_terms = 10'000;
inline constexpr double kummer_rel_cutoff = 1e-15;

} // namespace detail

/// Kummer's confluent hypergeometric function of the first kind,
///   M(a, b, z) = sum_n (a)_n / (b)_n z^n / n!,   z >= 0,
/// summed by the term ratio (a+n) z / ((b+n)(n+1)) until the term drops
/// below 1e-15 relative to the partial sum while terms are decreasing.
inline double kummer_m(double a, double b, double z) {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(z))
    throw DomainError("kummer_m: arguments must be finite");
  if (detail::is_nonpositive_integer(b))
    throw DomainError("kummer_m: b must not be zero or a negative integer");
  if (z < 0.0) throw DomainError("kummer_m: z must be nonnegative");

  double term = 1.0;
  double sum = 1.0;
  for (int n = 0; n < detail::kummer_max_terms; ++n) {
    const double ratio = (a + n) * z / ((b + n) * (n + 1));
    term *= ratio;
    sum += term;
    if (!std::isfinite(sum)) throw NumericalFailure("kummer_m: series overflow");
    if (term == 0.0) return sum;
    const double next_ratio = (a + n + 1) * z / ((b + n + 1) * (n + 2));
    if (std::abs(term) <= detail::kummer_rel_cutoff * std::abs(sum) && std::abs(next_ratio) < 1.0)
      return sum;
  }
  throw NumericalFailure("kummer_m: series did not converge within 10^4 terms");
}

/// M and its first two z-derivatives, from the term-wise differentiated
/// series d/dz M(a,b,z) = (a/b) M(a+1,b+1,z).
inline Jet kummer_m_jet(double a, double b, double z) {
  Jet j;
  j.value = kummer_m(a, b, z);
  j.d1 = a == 0.0 ? 0.0 : (a / b) * kummer_m(a + 1.0, b + 1.0, z);
  j.d2 = (a == 0.0 || a == -1.0)
             ? 0.0
             : (a * (a + 1.0)) / (b * (b + 1.0)) * kummer_m(a + 2.0, b + 2.0, z);
  return j;
}

/// Eigenvalue sigma^2 b alpha / 4 of L for the Kummer eigenfunction.
inline double eigenvalue(const ModelParams& m, double alpha) {
  return 0.25 * m.sigma2() * m.b * alpha;
}

/// f(x) = M(alpha, delta/2, b x / 2) on x >= 0, solving L f = (sigma^2 b alpha / 4) f.
/// alpha = delta/2 gives exp(b x / 2); alpha = 0 gives the constant 1.
inline ScalarFunction eigenfunction(const ModelParams& m, double alpha) {
  validate(m);
  if (!(m.b > 0.0))
    throw DomainError("eigenfunction requires b > 0; use f(x)=x when b = 0");
  const double kb = 0.5 * m.delta;
  const double scale = 0.5 * m.b;
  return ScalarFunction(
      "kummer_eigenfunction",
      [=](double x) {
        const Jet k = kummer_m_jet(alpha, kb, scale * x);
        return Jet{k.value, scale * k.d1, scale * scale * k.d2};
      },
      0.0);
}

namespace detail {

// Absolute-plus-relative adaptive Gauss-Kronrod.
template <class F>
double integrate(F&& f, double a, double b) {
  if (a == b) return 0.0;
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, 15, 1e-14, &err);
  if (!std::isfinite(v)) throw NumericalFailure("quadrature produced a non-finite value");
  return v;
}

// Density y^(delta/2) e^(b y / 2) of h' on the negative half-line (in u = -x).
inline double harmonic_density(const ModelParams& m, double u) {
  return std::pow(u, 0.5 * m.delta) * std::exp(0.5 * m.b * u);
}

inline Jet harmonic_jet(const ModelParams& m, double x) {
  if (x >= 0.0) return {};
  const double u = -x;
  const double value = -integrate([&](double y) { return harmonic_density(m, y); }, 0.0, u);
  const double d1 = harmonic_density(m, u);
  const double d2 = -(0.5 * m.delta) * std::pow(u, 0.5 * m.delta - 1.0) * std::exp(0.5 * m.b * u) -
                    0.5 * m.b * d1;
  return {value, d1, d2};
}

} // namespace detail

/// h(x) = 0 for x >= 0 and -int_0^{-x} y^(delta/2) e^(b y/2) dy for x < 0.
/// C^1 with locally integrable h''; L h = 0 off the origin.
inline ScalarFunction harmonic_h(const ModelParams& m) {
  validate(m);
  return ScalarFunction("harmonic_h", [m](double x) { return detail::harmonic_jet(m, x); });
}

/// C^1 gate used by f_g: g = 0 on x <= 0, x^(delta/2+2) on [0, c/2], then a
/// quadratic rise with g' decreasing linearly to 0 at x = c, then the
/// positive decreasing tail g(c) / (1 + ((x - c)/c)^2).
///
/// g' > 0 on (0, c), g'(c) = 0, g' < 0 on (c, inf) and g > 0 on (0, inf).
struct Gate {
  double c;
  double power;

  Jet operator()(double x) const {
    if (x <= 0.0) return {};
    const double h = 0.5 * c;
    if (x <= h) {
      return {std::pow(x, power), power * std::pow(x, power - 1.0),
              power * (power - 1.0) * std::pow(x, power - 2.0)};
    }
    const double g0 = std::pow(h, power);
    const double g1 = power * std::pow(h, power - 1.0);
    if (x <= c) {
      const double s = x - h;
      return {g0 + g1 * (s - s * s / c), g1 * (1.0 - 2.0 * s / c), -2.0 * g1 / c};
    }
    const double peak = g0 + 0.25 * g1 * c;
    const double r = (x - c) / c;
    const double q = 1.0 + r * r;
    return {peak / q, -peak * 2.0 * r / (c * q * q),
            peak * (6.0 * r * r - 2.0) / (c * c * q * q * q)};
  }
};

/// Strictly increasing C^1 function built from the gate g, together with its
/// closed-form generator value L f_g(x) = (sigma^2/2) x^(1-delta/2) e^(bx/2) g'(x), x > 0.
struct GatedFunction {
  ModelParams params;
  Gate gate;
  ScalarFunction f;

  double generator(double x) const {
    if (x <= 0.0) return 0.0;
    return 0.5 * params.sigma2() * std::pow(x, 1.0 - 0.5 * params.delta) *
           std::exp(0.5 * params.b * x) * gate(x).d1;
  }
};

inline GatedFunction f_g(const ModelParams& m, double c) {
  validate(m);
  if (!std::isfinite(c) || !(c > 0.0)) throw ValidationError("f_g requires c > 0");
  const Gate g{c, 0.5 * m.delta + 2.0};
  auto eval = [m, g](double x) -> Jet {
    if (x < 0.0) return detail::harmonic_jet(m, x);
    if (x == 0.0) return {0.0, 0.0, 0.0};
    const double hd = 0.5 * m.delta;
    auto integrand = [&](double y) {
      return y == 0.0 ? 0.0 : g(y).value * std::pow(y, -hd) * std::exp(0.5 * m.b * y);
    };
    // Split at the gate's knots so each panel is smooth.
    double value = 0.0;
    double lo = 0.0;
    for (double knot : {0.5 * g.c, g.c}) {
      if (x <= knot) break;
      value += detail::integrate(integrand, lo, knot);
      lo = knot;
    }
    value += detail::integrate(integrand, lo, x);
    const Jet gj = g(x);
    const double w = std::pow(x, -hd) * std::exp(0.5 * m.b * x);
    const double d1 = gj.value * w;
    const double d2 = gj.d1 * w + gj.value * w * (-hd / x + 0.5 * m.b);
    return {value, d1, d2};
  };
  return GatedFunction{m, g, ScalarFunction("f_g", eval)};
}

} // namespace skewbesq
