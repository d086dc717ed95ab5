#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skewbesq/curve.hpp"
#include "skewbesq/errors.hpp"
#include "skewbesq/format.hpp"
#include "skewbesq/model.hpp"
#include "skewbesq/special_functions.hpp"

namespace skewbesq {

/// Three-branch weight gbar(y) = gamma on y<0, (alpha+gamma)/2 at 0, alpha on y>0.
struct SkewWeight {
  double alpha;
  double gamma;

  /// alpha = 1-p, gamma = p: the choice that cancels the local time.
  static SkewWeight canonical(double p) { return {1.0 - p, p}; }

  double operator()(double y) const {
    if (y < 0.0) return gamma;
    if (y > 0.0) return alpha;
    return 0.5 * (alpha + gamma);
  }

  /// Coefficient alpha p - gamma (1-p) of the local time in the Ito-Tanaka
  /// expansion of gbar(R - lambda^2) F.
  double local_time_coefficient(double p) const { return alpha * p - gamma * (1.0 - p); }
};

/// alpha p - gamma (1-p) for the canonical weight. Zero bitwise: both
/// products are the same IEEE product p(1-p).
inline double skew_weight_cancellation(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("p must lie in (0,1)");
  return SkewWeight::canonical(p).local_time_coefficient(p);
}

enum class Verdict { Guaranteed, Inconclusive };
enum class Route { CorollaryLinearF, CorollaryExponentialF, GeneralPde, C1Residual };

inline std::string_view to_string(Verdict v) {
  return v == Verdict::Guaranteed ? "GUARANTEED" : "INCONCLUSIVE";
}

inline std::string_view to_string(Route r) {
  switch (r) {
  case Route::CorollaryLinearF: return "corollary-linear-f";
  case Route::CorollaryExponentialF: return "corollary-exponential-f";
  case Route::GeneralPde: return "general-PDE";
  case Route::C1Residual: return "c1-residual";
  }
  return "?";
}

struct Violation {
  double t0;
  double t1;
  double margin;
};

/// Outcome of a sufficient pathwise-uniqueness check. There is no
/// "not unique" verdict: failing the condition proves nothing.
struct CriterionReport {
  Verdict verdict = Verdict::Inconclusive;
  Route route = Route::CorollaryLinearF;
  std::string witness;
  /// Smallest slack of the checked inequality over the horizon (negative
  /// when violated).
  double min_margin = 0.0;
  std::optional<Violation> violation;

  bool guaranteed() const { return verdict == Verdict::Guaranteed; }

  std::string headline() const {
    return "verdict=" + std::string(to_string(verdict)) + " route=" + std::string(to_string(route));
  }

  std::string to_kv() const {
    std::ostringstream os;
    os << "verdict=" << to_string(verdict) << '\n'
       << "route=" << to_string(route) << '\n'
       << "witness=" << witness << '\n'
       << "min_margin=" << fmt17(min_margin) << '\n';
    if (violation) {
      os << "violation_t0=" << fmt17(violation->t0) << '\n'
         << "violation_t1=" << fmt17(violation->t1) << '\n'
         << "violation_margin=" << fmt17(violation->margin) << '\n';
    } else {
      os << "violation=none\n";
    }
    return os.str();
  }

  static std::string csv_header() {
    return "verdict,route,witness,min_margin,violation_t0,violation_t1,violation_margin";
  }

  std::string to_csv_row() const {
    std::string w = witness;
    std::replace(w.begin(), w.end(), '"', '\'');
    std::ostringstream os;
    os << to_string(verdict) << ',' << to_string(route) << ",\"" << w << "\","
       << fmt17(min_margin) << ',';
    if (violation)
      os << fmt17(violation->t0) << ',' << fmt17(violation->t1) << ',' << fmt17(violation->margin);
    else
      os << ",,";
    return os.str();
  }
};

namespace detail {

inline void check_horizon(const Curve& curve, double horizon) {
  if (!std::isfinite(horizon) || !(horizon > 0.0))
    throw DomainError("horizon must be positive");
  if (horizon > curve.t_max())
    throw DomainError("horizon [0," + fmt17(horizon) + "] exceeds curve domain [0," +
                      fmt17(curve.t_max()) + "]");
}

// Accumulates the smallest margin and the first maximal violating interval
// from a left-to-right sweep.
struct ViolationSweep {
  double min_margin = INFINITY;
  std::optional<Violation> first;
  bool open = false;

  void add(double t0, double t1, double margin) {
    min_margin = std::min(min_margin, margin);
    if (margin < 0.0) {
      if (!first) {
        first = Violation{t0, t1, margin};
        open = true;
      } else if (open && first->t1 == t0) {
        first->t1 = t1;
        first->margin = std::min(first->margin, margin);
      } else {
        open = false;
      }
    } else {
      open = false;
    }
  }
};

// For a margin function monotone on [0, T], the sub-interval where it is
// negative (located by bisection; the verdict itself only uses endpoints).
template <class Margin>
void sweep_monotone(ViolationSweep& sweep, const Margin& margin, double T) {
  const double m0 = margin(0.0), m1 = margin(T);
  if (m0 >= 0.0 && m1 >= 0.0) {
    sweep.add(0.0, T, std::min(m0, m1));
    return;
  }
  if (m0 < 0.0 && m1 < 0.0) {
    sweep.add(0.0, T, std::min(m0, m1));
    return;
  }
  double lo = 0.0, hi = T;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if ((margin(mid) < 0.0) == (m0 < 0.0))
      lo = mid;
    else
      hi = mid;
  }
  if (m0 < 0.0) {
    sweep.add(0.0, hi, m0);
    sweep.add(hi, T, m1);
  } else {
    sweep.add(0.0, lo, m0);
    sweep.add(lo, T, m1);
  }
}

} // namespace detail

/// Explicit sufficient conditions, checked exactly on the curve representation:
///  - p > 1/2: d lambda^2 <= (sigma^2 delta / 4) dt (decreasing parts free);
///  - p < 1/2: d lambda^2 >= (sigma^2/4)(delta - b lambda^2) dt;
///  - p = 1/2: the local-time term vanishes (classical CIR).
inline CriterionReport check_corollary(const ModelParams& m, const Curve& curve, double horizon) {
  validate(m);
  detail::check_horizon(curve, horizon);
  const double s2 = m.sigma2();
  CriterionReport rep;

  if (m.skew_sign() == 0) {
    rep.verdict = Verdict::Guaranteed;
    rep.route = Route::CorollaryLinearF;
    rep.witness = "2p-1=0: local-time term vanishes (classical case)";
    rep.min_margin = 0.0;
    return rep;
  }

  detail::ViolationSweep sweep;
  if (m.skew_sign() > 0) {
    const double bound = 0.25 * s2 * m.delta;
    if (m.b > 0.0) {
      rep.route = Route::CorollaryExponentialF;
      rep.witness = "f(x)=exp(bx/2); F=f(x-lambda^2(t))-f(0); mu+(dt)=nu(dt)=(b/2){(sigma^2 delta/4)dt-dlambda^2}";
    } else {
      rep.route = Route::CorollaryLinearF;
      rep.witness = "f(x)=x; F=f(x-lambda^2(t))-f(0); mu(dt)=-(sigma^2 b/4)dt; nu(dt)=(sigma^2/4)(delta-b lambda^2)dt-dlambda^2";
    }
    if (curve.kind() == CurveKind::ExpRelaxation) {
      detail::sweep_monotone(sweep, [&](double t) { return bound - curve.derivative(t); }, horizon);
    } else {
      for (const auto& seg : curve.segments(0.0, horizon))
        sweep.add(seg.t0, seg.t1, bound - seg.slope);
    }
  } else {
    rep.route = Route::CorollaryLinearF;
    rep.witness = "f(x)=x; F=f(x-lambda^2(t))-f(0); mu(dt)=-(sigma^2 b/4)dt; nu(dt)=dlambda^2-(sigma^2/4)(delta-b lambda^2)dt";
    auto rhs = [&](double level) { return 0.25 * s2 * (m.delta - m.b * level); };
    if (curve.kind() == CurveKind::ExpRelaxation) {
      detail::sweep_monotone(
          sweep, [&](double t) { return curve.derivative(t) - rhs(curve.evaluate(t)); }, horizon);
    } else {
      // rhs is affine in lambda^2 along a segment, so its maximum sits at the
      // endpoint with the smaller value.
      for (const auto& seg : curve.segments(0.0, horizon))
        sweep.add(seg.t0, seg.t1, seg.slope - rhs(std::min(seg.v0, seg.v1)));
    }
  }
  rep.min_margin = sweep.min_margin;
  rep.violation = sweep.first;
  rep.verdict = sweep.first ? Verdict::Inconclusive : Verdict::Guaranteed;
  return rep;
}

// ---------------------------------------------------------------------------
// Residual of the parabolic criterion for F built from a time-independent f.

enum class ResidualForm {
  Shifted, ///< F(t,x) = f(x - lambda^2(t)) - f(0)
  Level    ///< F(t,x) = f(x) - f(lambda^2(t))
};

using TimeDensity = std::function<double(double)>;

/// Candidate measures mu(dt) = mu'(t) dt and nu(dt) = nu'(t) dt given by
/// densities, together with the test function that should satisfy
///   (d_t + L) F = F mu' + sgn(2p-1) nu'.
struct PdeWitness {
  ScalarFunction f;
  ResidualForm form = ResidualForm::Shifted;
  TimeDensity mu;
  TimeDensity nu;
};

struct ResidualGrid {
  double horizon = 1.0;
  double x_max = 1.0;
  std::size_t n_t = 50;
  std::size_t n_x = 50;
  /// Nodes with |x - lambda^2(t)| below this are skipped.
  double curve_band = 1e-6;

  /// 50 x 50 nodes on [0,T] x [0, 4 max lambda^2 + 4 delta / max(b,1)].
  static ResidualGrid defaults(const ModelParams& m, const Curve& curve, double horizon) {
    ResidualGrid g;
    g.horizon = horizon;
    g.x_max = 4.0 * curve.max_value() + 4.0 * m.delta / std::max(m.b, 1.0);
    return g;
  }

  double t_at(std::size_t i) const {
    return n_t < 2 ? 0.0 : (i + 1 == n_t ? horizon : horizon * static_cast<double>(i) / (n_t - 1));
  }
  double x_at(std::size_t j) const {
    return n_x < 2 ? 0.0 : (j + 1 == n_x ? x_max : x_max * static_cast<double>(j) / (n_x - 1));
  }
};

struct ResidualNode {
  double t, x;
  double generator;      ///< (d_t + L) F(t, x)
  double residual;       ///< generator - F mu' - sgn(2p-1) nu'
  double drift_residual; ///< gbar(x - lambda^2) * residual: the H-drift left over
};

struct ResidualField {
  std::vector<ResidualNode> nodes;
  std::vector<std::pair<double, double>> skipped;
  double max_abs_residual = 0.0;
  double max_abs_drift_residual = 0.0;
  /// alpha p - gamma (1-p); the local time survives in H unless this is zero.
  double local_time_coefficient = 0.0;
};

namespace detail {

struct SpaceTimeValues {
  double F, dt, dx, dxx;
};

inline SpaceTimeValues shifted_or_level(const ScalarFunction& f, ResidualForm form, double x,
                                        double level, double level_slope) {
  if (form == ResidualForm::Shifted) {
    const Jet j = f(x - level);
    return {j.value - f.value(0.0), -j.d1 * level_slope, j.d1, j.d2};
  }
  const Jet jx = f(x);
  const Jet jl = f(level);
  return {jx.value - jl.value, -jl.d1 * level_slope, jx.d1, jx.d2};
}

} // namespace detail

inline ResidualField pde_residual(const ModelParams& m, const Curve& curve, const SkewWeight& weight,
                                  const PdeWitness& w, const ResidualGrid& grid) {
  validate(m);
  detail::check_horizon(curve, grid.horizon);
  const GeneratorL L{m};
  const int sgn = m.skew_sign();
  ResidualField out;
  out.local_time_coefficient = weight.local_time_coefficient(m.p);
  for (std::size_t i = 0; i < grid.n_t; ++i) {
    const double t = grid.t_at(i);
    const double level = curve.evaluate(t);
    const double slope = curve.derivative(t);
    const double mu = w.mu ? w.mu(t) : 0.0;
    const double nu = w.nu ? w.nu(t) : 0.0;
    for (std::size_t j = 0; j < grid.n_x; ++j) {
      const double x = grid.x_at(j);
      const double y = x - level;
      if (std::abs(y) < grid.curve_band) {
        out.skipped.emplace_back(t, x);
        continue;
      }
      const auto v = detail::shifted_or_level(w.f, w.form, x, level, slope);
      const double gen = v.dt + L.apply(x, Jet{v.F, v.dx, v.dxx});
      const double res = gen - v.F * mu - sgn * nu;
      const double drift = weight(y) * res;
      out.nodes.push_back({t, x, gen, res, drift});
      out.max_abs_residual = std::max(out.max_abs_residual, std::abs(res));
      out.max_abs_drift_residual = std::max(out.max_abs_drift_residual, std::abs(drift));
    }
  }
  return out;
}

/// Witness functions behind the corollary routes.
inline PdeWitness corollary_witness(const ModelParams& m, const Curve& curve, Route route) {
  validate(m);
  const double s2 = m.sigma2();
  const int sgn = m.skew_sign();
  PdeWitness w;
  w.form = ResidualForm::Shifted;
  if (route == Route::CorollaryLinearF) {
    w.f = ScalarFunction("x", [](double x) { return Jet{x, 1.0, 0.0}; });
    w.mu = [=](double) { return -0.25 * s2 * m.b; };
    w.nu = [=, &curve](double t) {
      return sgn * (0.25 * s2 * (m.delta - m.b * curve.evaluate(t)) - curve.derivative(t));
    };
    return w;
  }
  if (route == Route::CorollaryExponentialF) {
    if (!(m.b > 0.0)) throw DomainError("exponential route requires b > 0");
    const double h = 0.5 * m.b;
    w.f = ScalarFunction("exp(bx/2)", [h](double x) {
      const double e = std::exp(h * x);
      return Jet{e, h * e, h * h * e};
    });
    auto density = [=, &curve](double t) { return h * (0.25 * s2 * m.delta - curve.derivative(t)); };
    w.mu = density;
    w.nu = density;
    return w;
  }
  throw DomainError("no corollary witness for this route");
}

inline constexpr double residual_tolerance = 1e-8;

/// General criterion for user-supplied (f, form, mu, nu): certified on the
/// grid when the residual vanishes, nu is a positive measure and f is
/// increasing. mu enters through its density, so its positive part is
/// continuous.
inline CriterionReport check_general_pde(const ModelParams& m, const Curve& curve, const PdeWitness& w,
                                         const ResidualGrid& grid, std::string witness_text = {}) {
  const SkewWeight weight = SkewWeight::canonical(m.p);
  const ResidualField field = pde_residual(m, curve, weight, w, grid);
  CriterionReport rep;
  rep.route = Route::GeneralPde;
  rep.witness = witness_text.empty() ? "f=" + w.f.name() + " (grid-certified)" : witness_text;
  rep.min_margin = INFINITY;

  auto fail = [&](double t0, double t1, double margin) {
    if (!rep.violation) rep.violation = Violation{t0, t1, margin};
    rep.min_margin = std::min(rep.min_margin, margin);
  };
  for (const auto& n : field.nodes) {
    const double margin = residual_tolerance - std::abs(n.residual);
    if (margin < 0.0) fail(n.t, n.t, margin);
    const double slope = w.form == ResidualForm::Shifted ? w.f(n.x - curve.evaluate(n.t)).d1
                                                          : w.f(n.x).d1;
    if (!(slope > 0.0)) fail(n.t, n.t, slope);
  }
  if (m.skew_sign() != 0 && w.nu) {
    for (std::size_t i = 0; i < grid.n_t; ++i) {
      const double t = grid.t_at(i);
      const double nu = w.nu(t);
      rep.min_margin = std::min(rep.min_margin, nu);
      if (nu < 0.0) fail(t, t, nu);
    }
  }
  if (field.local_time_coefficient != 0.0) fail(0.0, grid.horizon, -std::abs(field.local_time_coefficient));
  if (!std::isfinite(rep.min_margin)) rep.min_margin = 0.0;
  rep.verdict = rep.violation ? Verdict::Inconclusive : Verdict::Guaranteed;
  return rep;
}

/// Re-derives a GUARANTEED corollary verdict through the general criterion
/// with the corollary's own witness.
inline CriterionReport confirm_corollary(const ModelParams& m, const Curve& curve, double horizon,
                                         const CriterionReport& corollary) {
  if (m.skew_sign() == 0) {
    // No local-time term: there is nothing for a witness to cancel.
    CriterionReport rep = corollary;
    rep.route = Route::GeneralPde;
    rep.witness = "re-derived: " + corollary.witness;
    return rep;
  }
  const PdeWitness w = corollary_witness(m, curve, corollary.route);
  return check_general_pde(m, curve, w, ResidualGrid::defaults(m, curve, horizon),
                           "re-derived: " + corollary.witness);
}

// ---------------------------------------------------------------------------
// C^1-curve criterion with genuinely time-dependent F.

struct SpaceTimeJet {
  double value, dt, dx, dxx;
};

using SpaceTimeFunction = std::function<SpaceTimeJet(double t, double x)>;

/// Checks  calL H = beta H + gbar(x - lambda^2) v  with H = gbar(x - lambda^2) F
/// on the off-curve grid, and the sign of v (>= 0 for p > 1/2, <= 0 for p < 1/2).
inline CriterionReport check_c1_criterion(const ModelParams& m, const Curve& curve,
                                          const SpaceTimeFunction& F, const TimeDensity& beta,
                                          const TimeDensity& v, const ResidualGrid& grid) {
  validate(m);
  detail::check_horizon(curve, grid.horizon);
  if (!curve.is_c1())
    throw DomainError("c1 criterion needs a constant, linear or exponential curve");
  const SkewWeight weight = SkewWeight::canonical(m.p);
  const GeneratorL L{m};

  for (std::size_t i = 0; i < grid.n_t; ++i) {
    const double t = grid.t_at(i);
    const double on_curve = F(t, curve.evaluate(t)).value;
    if (!(std::abs(on_curve) <= 1e-10))
      throw ValidationError("F must vanish on the curve: F(t, lambda^2(t)) = " + fmt17(on_curve) +
                            " at t = " + fmt17(t));
  }

  CriterionReport rep;
  rep.route = Route::C1Residual;
  rep.witness = "H=gbar(x-lambda^2(t))F(t,x) with alpha=1-p, gamma=p; user-supplied F, beta, v";
  rep.min_margin = INFINITY;
  for (std::size_t i = 0; i < grid.n_t && !rep.violation; ++i) {
    const double t = grid.t_at(i);
    const double level = curve.evaluate(t);
    const double bt = beta(t);
    const double vt = v(t);
    const double sign_margin = m.skew_sign() > 0 ? vt : (m.skew_sign() < 0 ? -vt : INFINITY);
    rep.min_margin = std::min(rep.min_margin, sign_margin);
    if (sign_margin < 0.0) {
      rep.violation = Violation{t, t, sign_margin};
      break;
    }
    for (std::size_t j = 0; j < grid.n_x; ++j) {
      const double x = grid.x_at(j);
      const double y = x - level;
      if (std::abs(y) < grid.curve_band) continue;
      const SpaceTimeJet f = F(t, x);
      if (!(f.dx > 0.0))
        throw ValidationError("F must be strictly increasing in x; d_x F = " + fmt17(f.dx) +
                              " at (" + fmt17(t) + ", " + fmt17(x) + ")");
      // gbar(x - lambda^2(t)) is locally constant off the curve.
      const double calL = f.dt + L.apply(x, Jet{f.value, f.dx, f.dxx});
      const double res = weight(y) * (calL - bt * f.value - vt);
      const double margin = residual_tolerance - std::abs(res);
      rep.min_margin = std::min(rep.min_margin, margin);
      if (margin < 0.0) {
        rep.violation = Violation{t, t, margin};
        break;
      }
    }
  }
  if (!std::isfinite(rep.min_margin)) rep.min_margin = 0.0;
  rep.verdict = rep.violation ? Verdict::Inconclusive : Verdict::Guaranteed;
  return rep;
}

// ---------------------------------------------------------------------------

struct GronwallResult {
  std::vector<double> bound;
  bool holds = true;
};

/// Bound eps * exp(mu+([0, t_i))) on the sample grid, where masses[i] is the
/// mu+ mass of [t_i, t_{i+1}). Comparison allows 1e-12 relative slack for
/// the rounding of the cumulative mass.
inline GronwallResult gronwall_bound(std::span<const double> times, std::span<const double> g,
                                     double eps, std::span<const double> masses) {
  if (times.size() != g.size()) throw ValidationError("gronwall: times and samples differ in length");
  if (!times.empty() && masses.size() + 1 < times.size())
    throw ValidationError("gronwall: need one mass per subinterval");
  if (!(eps >= 0.0)) throw ValidationError("gronwall: epsilon must be nonnegative");
  for (double x : g)
    if (!(x >= 0.0)) throw ValidationError("gronwall: samples of g must be nonnegative");
  for (double x : masses)
    if (!(x >= 0.0)) throw ValidationError("gronwall: measure masses must be nonnegative");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw ValidationError("gronwall: times must increase");

  GronwallResult out;
  out.bound.resize(times.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0) cumulative += masses[i - 1];
    out.bound[i] = eps * std::exp(cumulative);
    if (g[i] > out.bound[i] * (1.0 + 1e-12)) out.holds = false;
  }
  return out;
}

} // namespace skewbesq
