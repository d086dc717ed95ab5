#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skewbesq/errors.hpp"
#include "skewbesq/format.hpp"

namespace skewbesq {

enum class CurveKind { Constant, Linear, PiecewiseLinear, ExpRelaxation };

inline std::string_view to_string(CurveKind k) {
  switch (k) {
  case CurveKind::Constant: return "constant";
  case CurveKind::Linear: return "linear";
  case CurveKind::PiecewiseLinear: return "piecewise";
  case CurveKind::ExpRelaxation: return "exp";
  }
  return "?";
}

struct Knot {
  double time;
  double value;
  bool operator==(const Knot&) const = default;
};

/// Increasing and decreasing parts of d(lambda^2) over [s, t).
struct SignedMeasureSummary {
  double positive_mass = 0.0;
  double negative_mass = 0.0;

  double net() const { return positive_mass - negative_mass; }
  double total_variation() const { return positive_mass + negative_mass; }
};

/// Linear piece of a curve restricted to [t0, t1].
struct LinearSegment {
  double t0, t1;
  double v0, v1;
  double slope;
};

/// Deterministic nonnegative curve lambda^2 on [0, t_max].
///
/// Only representations with an exact Jordan decomposition are admitted:
/// constant, affine, piecewise-linear through knots, and the relaxation
/// a + (c - a) exp(-k t). Immutable after construction.
class Curve {
public:
  static constexpr std::size_t max_knots = 1'000'000;

  static Curve constant(double c, double t_max) {
    check_domain_end(t_max);
    check_value(c, "constant curve value");
    Curve out(CurveKind::Constant, t_max);
    out.c_ = c;
    out.knots_ = {{0.0, c}, {t_max, c}};
    return out;
  }

  /// lambda^2(t) = c + slope * t.
  static Curve linear(double c, double slope, double t_max) {
    check_domain_end(t_max);
    if (!std::isfinite(slope)) throw ValidationError("linear curve slope must be finite");
    check_value(c, "linear curve value at t=0");
    check_value(c + slope * t_max, "linear curve value at t_max");
    Curve out(CurveKind::Linear, t_max);
    out.c_ = c;
    out.slope_ = slope;
    out.knots_ = {{0.0, c}, {t_max, c + slope * t_max}};
    return out;
  }

  /// Knots must start at t=0 and be strictly increasing in time; the domain
  /// ends at the last knot.
  static Curve piecewise(std::vector<Knot> knots) {
    if (knots.size() < 2)
      throw ValidationError("piecewise curve needs at least two knots");
    if (knots.size() > max_knots)
      throw ValidationError("piecewise curve knot count exceeds 10^6");
    if (knots.front().time != 0.0)
      throw ValidationError("piecewise curve must start at t=0");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (!std::isfinite(knots[i].time))
        throw ValidationError("knot time must be finite");
      check_value(knots[i].value, "knot value");
      if (i > 0 && !(knots[i].time > knots[i - 1].time))
        throw ValidationError("knot times must be strictly increasing");
    }
    Curve out(CurveKind::PiecewiseLinear, knots.back().time);
    out.knots_ = std::move(knots);
    return out;
  }

  /// lambda^2(t) = a + (c - a) exp(-k t), k > 0. Monotone, so nonnegativity
  /// is checked at both ends of the domain.
  static Curve exp_relaxation(double a, double c, double k, double t_max) {
    check_domain_end(t_max);
    if (!std::isfinite(a)) throw ValidationError("exp curve level a must be finite");
    if (!std::isfinite(k) || !(k > 0.0))
      throw ValidationError("exp curve rate k must be positive");
    check_value(c, "exp curve value at t=0");
    check_value(a + (c - a) * std::exp(-k * t_max), "exp curve value at t_max");
    Curve out(CurveKind::ExpRelaxation, t_max);
    out.a_ = a;
    out.c_ = c;
    out.k_ = k;
    return out;
  }

  CurveKind kind() const { return kind_; }
  double t_max() const { return t_max_; }
  bool is_c1() const { return kind_ != CurveKind::PiecewiseLinear; }

  /// Knots of the piecewise-linear representation (two for constant and
  /// linear curves, empty for the exponential form).
  const std::vector<Knot>& knots() const { return knots_; }
  double level() const { return a_; }
  double initial_value() const { return c_; }
  double rate() const { return k_; }
  double slope() const { return slope_; }

  double evaluate(double t) const {
    check_time(t);
    switch (kind_) {
    case CurveKind::Constant: return c_;
    case CurveKind::Linear: return c_ + slope_ * t;
    case CurveKind::ExpRelaxation: return a_ + (c_ - a_) * std::exp(-k_ * t);
    case CurveKind::PiecewiseLinear: {
      const std::size_t i = segment_index(t);
      const Knot& l = knots_[i];
      const Knot& r = knots_[i + 1];
      if (t == r.time) return r.value;
      return l.value + (r.value - l.value) * ((t - l.time) / (r.time - l.time));
    }
    }
    return 0.0;
  }

  double operator()(double t) const { return evaluate(t); }

  /// Right derivative of lambda^2 (left derivative at t_max). Equals the
  /// a.e. derivative away from knots.
  double derivative(double t) const {
    check_time(t);
    switch (kind_) {
    case CurveKind::Constant: return 0.0;
    case CurveKind::Linear: return slope_;
    case CurveKind::ExpRelaxation: return -k_ * (c_ - a_) * std::exp(-k_ * t);
    case CurveKind::PiecewiseLinear: {
      const std::size_t i = segment_index(t);
      return segment_slope(i);
    }
    }
    return 0.0;
  }

  /// Linear pieces intersecting [s, t], clipped to it. Empty for the
  /// exponential form.
  std::vector<LinearSegment> segments(double s, double t) const {
    check_interval(s, t);
    std::vector<LinearSegment> out;
    if (kind_ == CurveKind::ExpRelaxation) return out;
    if (kind_ != CurveKind::PiecewiseLinear) {
      out.push_back({s, t, evaluate(s), evaluate(t), slope_});
      return out;
    }
    for (std::size_t i = segment_index(s); i + 1 < knots_.size(); ++i) {
      const double a = std::max(s, knots_[i].time);
      const double b = std::min(t, knots_[i + 1].time);
      if (!(b > a)) break;
      out.push_back({a, b, evaluate(a), evaluate(b), segment_slope(i)});
      if (b >= t) break;
    }
    return out;
  }

  SignedMeasureSummary jordan_decomposition(double s, double t) const {
    check_interval(s, t);
    SignedMeasureSummary m;
    if (kind_ == CurveKind::ExpRelaxation) {
      const double d = evaluate(t) - evaluate(s);
      (d >= 0.0 ? m.positive_mass : m.negative_mass) = std::abs(d);
      return m;
    }
    for (const auto& seg : segments(s, t)) {
      const double d = seg.v1 - seg.v0;
      if (d >= 0.0)
        m.positive_mass += d;
      else
        m.negative_mass -= d;
    }
    return m;
  }

  /// Exact extrema of the a.e. derivative over [s, t].
  std::pair<double, double> slope_bounds(double s, double t) const {
    check_interval(s, t);
    if (kind_ == CurveKind::ExpRelaxation) {
      const double d0 = derivative(s), d1 = derivative(t);
      return {std::min(d0, d1), std::max(d0, d1)};
    }
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& seg : segments(s, t)) {
      lo = std::min(lo, seg.slope);
      hi = std::max(hi, seg.slope);
    }
    return {lo, hi};
  }

  /// Maximum of lambda^2 over [0, t_max].
  double max_value() const {
    if (kind_ == CurveKind::ExpRelaxation) return std::max(evaluate(0.0), evaluate(t_max_));
    double m = 0.0;
    for (const auto& k : knots_) m = std::max(m, k.value);
    return m;
  }

private:
  Curve(CurveKind kind, double t_max) : kind_(kind), t_max_(t_max) {}

  static void check_domain_end(double t_max) {
    if (!std::isfinite(t_max) || !(t_max > 0.0))
      throw ValidationError("curve domain end t_max must be positive");
  }
  static void check_value(double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError(std::string(what) + " must be finite and nonnegative");
  }
  void check_time(double t) const {
    if (!(t >= 0.0 && t <= t_max_))
      throw DomainError("time " + std::to_string(t) + " outside curve domain [0, " +
                        std::to_string(t_max_) + "]");
  }
  void check_interval(double s, double t) const {
    check_time(s);
    check_time(t);
    if (!(s < t)) throw DomainError("interval [s, t) requires s < t");
  }

  // Index i of the segment [knot i, knot i+1] containing t; t_max maps to
  // the last segment.
  std::size_t segment_index(double t) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                               [](double x, const Knot& k) { return x < k.time; });
    std::size_t i = static_cast<std::size_t>(it - knots_.begin());
    if (i == 0) return 0;
    return std::min(i - 1, knots_.size() - 2);
  }
  double segment_slope(std::size_t i) const {
    return (knots_[i + 1].value - knots_[i].value) / (knots_[i + 1].time - knots_[i].time);
  }

  CurveKind kind_;
  double t_max_;
  double a_ = 0.0, c_ = 0.0, k_ = 0.0, slope_ = 0.0;
  std::vector<Knot> knots_;
};

/// One-line description with round-trip decimals, e.g. "linear c=1 slope=1.5 t_max=1".
/// Piecewise curves list their knots as "t:v, t:v, ...".
inline std::string describe(const Curve& c) {
  std::string out(to_string(c.kind()));
  switch (c.kind()) {
  case CurveKind::Constant:
    out += " c=" + fmt_exact(c.initial_value());
    break;
  case CurveKind::Linear:
    out += " c=" + fmt_exact(c.initial_value()) + " slope=" + fmt_exact(c.slope());
    break;
  case CurveKind::ExpRelaxation:
    out += " a=" + fmt_exact(c.level()) + " c=" + fmt_exact(c.initial_value()) +
           " k=" + fmt_exact(c.rate());
    break;
  case CurveKind::PiecewiseLinear:
    out += " knots=";
    for (std::size_t i = 0; i < c.knots().size(); ++i) {
      if (i) out += ", ";
      out += fmt_exact(c.knots()[i].time) + ':' + fmt_exact(c.knots()[i].value);
    }
    return out;
  }
  return out + " t_max=" + fmt_exact(c.t_max());
}

} // namespace skewbesq
