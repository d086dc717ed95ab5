#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "skewbesq/curve.hpp"
#include "skewbesq/errors.hpp"
#include "skewbesq/format.hpp"
#include "skewbesq/model.hpp"
#include "skewbesq/parallel.hpp"

namespace skewbesq {

/// Seed used whenever none is given. Never derived from the clock.
inline constexpr std::uint64_t default_seed = 0x5EEDB355C1D0CAFEull;

struct SimConfig {
  double dt = 1e-3;
  double T = 1.0;
  std::size_t n_paths = 1000;
  std::uint64_t seed = default_seed;
  /// Half-width of the skew-decision and local-time band; 0 selects sqrt(dt).
  double band_eps = 0.0;
  double r0 = 1.0;
  double truncation_level = 1e3;
  /// Worker count for batch fan-out; 0 selects the machine parallelism.
  unsigned threads = 0;

  double band() const { return band_eps > 0.0 ? band_eps : std::sqrt(dt); }

  std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(T / dt)); }

  bool operator==(const SimConfig&) const = default;
};

inline void validate(const SimConfig& c) {
  if (!std::isfinite(c.T) || !(c.T > 0.0)) throw ValidationError("T must be positive");
  if (!std::isfinite(c.dt) || !(c.dt > 0.0) || !(c.dt < c.T))
    throw ValidationError("dt must satisfy 0 < dt < T");
  const double steps = std::llround(c.T / c.dt);
  if (std::abs(steps * c.dt - c.T) > 1e-9 * c.T)
    throw ValidationError("T must be an integer multiple of dt");
  if (!(c.band_eps >= 0.0) || !std::isfinite(c.band_eps))
    throw ValidationError("band_eps must be positive (or 0 for the sqrt(dt) default)");
  if (!std::isfinite(c.r0) || !(c.r0 >= 0.0)) throw ValidationError("r0 must be nonnegative");
  if (!(c.truncation_level > 0.0)) throw ValidationError("truncation_level must be positive");
}

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 finaliser.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Seed of path `index`'s private stream: mix64(seed ^ mix64(index)).
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index));
}

struct Draw {
  double dw; ///< Normal(0, dt) Brownian increment
  double u;  ///< Uniform[0,1) skew variate
};

/// Per-path noise: one Brownian increment and one uniform per step, always
/// drawn in that order. Boost's ziggurat normal is used for its speed and
/// because its output does not depend on the standard library vendor.
class NoiseStream {
public:
  NoiseStream(std::uint64_t seed, std::uint64_t index, double dt)
      : eng_(stream_seed(seed, index)), sqrt_dt_(std::sqrt(dt)) {}

  Draw next() {
    const double z = normal_(eng_);
    const double u = uniform_(eng_);
    return {sqrt_dt_ * z, u};
  }

private:
  boost::random::mt19937_64 eng_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
  boost::random::uniform_01<double> uniform_;
  double sqrt_dt_;
};

// ---------------------------------------------------------------------------
// One step of the scheme

struct LedgerIncrement {
  double plus = 0.0;
  double minus = 0.0;
  double symmetric() const { return 0.5 * (plus + minus); }
};

/// Running estimates of the upper, lower and symmetric local times of
/// R - lambda^2 at 0. The symmetric one is kept as (plus + minus)/2.
struct LedgerState {
  double ell0 = 0.0;
  double ell0_plus = 0.0;
  double ell0_minus = 0.0;

  void add(const LedgerIncrement& inc) {
    ell0_plus += inc.plus;
    ell0_minus += inc.minus;
    ell0 = 0.5 * (ell0_plus + ell0_minus);
  }
};

struct StepResult {
  double r_next;
  LedgerIncrement ledger;
  bool skew_branch;
};

/// Band estimator increments at Y_k = R_k - lambda^2(t_k) with the bracket
/// increment q = sigma^2 R_k dt. Y_k = 0 is split evenly between sides.
/// No mass is recorded while the curve sits at 0.
inline LedgerIncrement ledger_increment(const ModelParams& m, double lam_now, double r, double dt,
                                        double band) {
  LedgerIncrement inc;
  if (lam_now == 0.0) return inc;
  const double y = r - lam_now;
  if (!(std::abs(y) < band)) return inc;
  const double q = m.sigma2() * r * dt;
  if (y > 0.0)
    inc.plus = q / band;
  else if (y < 0.0)
    inc.minus = q / band;
  else
    inc.plus = inc.minus = q / (2.0 * band);
  return inc;
}

inline int sign_of(double y) { return y > 0.0 ? 1 : (y < 0.0 ? -1 : 0); }

/// Full-truncation Euler proposal followed by the skew decision: when the
/// proposal crosses the curve or lands within `band` of it, the distance
/// |Y*| is placed above the curve with probability p and below otherwise.
inline StepResult step(const ModelParams& m, double lam_now, double lam_next, double r, double dw,
                       double u, double dt, double band, std::size_t k = NumericalFailure::npos) {
  const double s2 = m.sigma2();
  const double rp = std::max(r, 0.0);
  const double proposal = r + m.sigma * std::sqrt(rp) * dw + 0.25 * s2 * (m.delta - m.b * r) * dt;
  if (!std::isfinite(proposal))
    throw NumericalFailure("non-finite Euler proposal at step " + std::to_string(k), k);

  StepResult out;
  out.ledger = ledger_increment(m, lam_now, r, dt, band);
  const double y_now = r - lam_now;
  const double y_next = proposal - lam_next;
  const bool same_side = sign_of(y_now) == sign_of(y_next) && sign_of(y_now) != 0;
  if (lam_next == 0.0 || (same_side && std::abs(y_next) > band)) {
    out.r_next = std::max(proposal, 0.0);
    out.skew_branch = false;
  } else {
    const double s = u < m.p ? 1.0 : -1.0;
    out.r_next = std::max(lam_next + s * std::abs(y_next), 0.0);
    out.skew_branch = true;
  }
  return out;
}

/// Convenience overload evaluating the curve at t and t + dt.
inline StepResult step(const ModelParams& m, const Curve& curve, double t, double r, double dw,
                       double u, const SimConfig& cfg) {
  return step(m, curve.evaluate(t), curve.evaluate(std::min(t + cfg.dt, curve.t_max())), r, dw, u,
              cfg.dt, cfg.band());
}

// ---------------------------------------------------------------------------
// Paths

struct PathPoint {
  std::size_t k;
  double r;
  const LedgerState& ledger;
  double dw; ///< increment that produced this point (0 at k = 0)
  double u;
};

struct PathEnd {
  std::size_t last_step = 0;
  bool aborted = false;
};

/// Local-time ledger with its full running series.
struct LocalTimeLedger {
  std::vector<double> ell0;
  std::vector<double> ell0_plus;
  std::vector<double> ell0_minus;

  double final_ell0() const { return ell0.empty() ? 0.0 : ell0.back(); }
  double final_plus() const { return ell0_plus.empty() ? 0.0 : ell0_plus.back(); }
  double final_minus() const { return ell0_minus.empty() ? 0.0 : ell0_minus.back(); }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> brownian_increments;
  LocalTimeLedger ledger;
  bool aborted = false;
  std::size_t abort_step = 0;

  static constexpr const char* csv_header = "t,R,ell0,ell0_plus,ell0_minus";

  std::string to_csv() const {
    std::ostringstream os;
    os << csv_header << '\n';
    for (std::size_t i = 0; i < values.size(); ++i)
      os << fmt17(times[i]) << ',' << fmt17(values[i]) << ',' << fmt17(ledger.ell0[i]) << ','
         << fmt17(ledger.ell0_plus[i]) << ',' << fmt17(ledger.ell0_minus[i]) << '\n';
    return os.str();
  }
};

struct PathSummary {
  double r_T = 0.0;
  double ell0 = 0.0;
  double ell0_plus = 0.0;
  double ell0_minus = 0.0;
  bool aborted = false;
};

/// Initial-value or band-width perturbation of a coupled pair.
struct Perturbation {
  std::pair<double, double> band_eps;
  std::pair<double, double> r0;

  static Perturbation none(const SimConfig& c) { return {{c.band(), c.band()}, {c.r0, c.r0}}; }
  static Perturbation bands(const SimConfig& c, double first, double second) {
    return {{first, second}, {c.r0, c.r0}};
  }
  static Perturbation initial(const SimConfig& c, double first, double second) {
    return {{c.band(), c.band()}, {first, second}};
  }
};

struct CoupledPoint {
  std::size_t k;
  double r1, r2;
  const LedgerState& ledger1;
  const LedgerState& ledger2;
  double dw; ///< shared increment that produced this point (0 at k = 0)
  double sup() const { return std::max(r1, r2); }
  double inf() const { return std::min(r1, r2); }
};

struct CoupledTrajectory {
  Trajectory first;
  Trajectory second;
  std::vector<double> sup;
  std::vector<double> inf;
  std::vector<double> gap;
  bool aborted = false;
};

/// Deterministic path generator for one (params, curve, config) triple. The
/// curve is sampled once on the time grid and shared read-only by all paths.
class Simulator {
public:
  Simulator(const ModelParams& m, const Curve& curve, const SimConfig& cfg)
      : params_(m), cfg_(cfg) {
    validate(params_);
    validate(cfg_);
    n_steps_ = cfg_.n_steps();
    if (cfg_.T > curve.t_max() * (1.0 + 1e-12))
      throw DomainError("simulation horizon exceeds curve domain");
    times_.resize(n_steps_ + 1);
    lambda_.resize(n_steps_ + 1);
    for (std::size_t k = 0; k <= n_steps_; ++k) {
      times_[k] = k == n_steps_ ? std::min(cfg_.T, curve.t_max()) : k * cfg_.dt;
      lambda_[k] = curve.evaluate(times_[k]);
    }
  }

  const ModelParams& params() const { return params_; }
  const SimConfig& config() const { return cfg_; }
  std::size_t n_steps() const { return n_steps_; }
  std::span<const double> times() const { return times_; }
  std::span<const double> curve_grid() const { return lambda_; }

  NoiseStream noise(std::uint64_t index) const { return NoiseStream(cfg_.seed, index, cfg_.dt); }

  /// Runs path `index`, calling visit(PathPoint) at k = 0 and after every
  /// step. Stops early, flagged, once R reaches the truncation level.
  template <class Visitor>
  PathEnd run(std::uint64_t index, Visitor&& visit) const {
    return run(index, cfg_.r0, cfg_.band(), visit);
  }

  template <class Visitor>
  PathEnd run(std::uint64_t index, double r0, double band, Visitor&& visit) const {
    NoiseStream noise = this->noise(index);
    LedgerState led;
    double r = r0;
    visit(PathPoint{0, r, led, 0.0, 0.0});
    PathEnd end;
    for (std::size_t k = 0; k < n_steps_; ++k) {
      const Draw d = noise.next();
      const StepResult s = step(params_, lambda_[k], lambda_[k + 1], r, d.dw, d.u, cfg_.dt, band, k);
      led.add(s.ledger);
      r = s.r_next;
      visit(PathPoint{k + 1, r, led, d.dw, d.u});
      end.last_step = k + 1;
      if (r >= cfg_.truncation_level) {
        end.aborted = true;
        break;
      }
    }
    return end;
  }

  /// Two members driven by the identical draws; aborts both when either
  /// member reaches the truncation level.
  template <class Visitor>
  PathEnd run_coupled(std::uint64_t index, const Perturbation& pert, Visitor&& visit) const {
    NoiseStream noise = this->noise(index);
    LedgerState l1, l2;
    double r1 = pert.r0.first, r2 = pert.r0.second;
    visit(CoupledPoint{0, r1, r2, l1, l2, 0.0});
    PathEnd end;
    for (std::size_t k = 0; k < n_steps_; ++k) {
      const Draw d = noise.next();
      const StepResult s1 =
          step(params_, lambda_[k], lambda_[k + 1], r1, d.dw, d.u, cfg_.dt, pert.band_eps.first, k);
      const StepResult s2 =
          step(params_, lambda_[k], lambda_[k + 1], r2, d.dw, d.u, cfg_.dt, pert.band_eps.second, k);
      l1.add(s1.ledger);
      l2.add(s2.ledger);
      r1 = s1.r_next;
      r2 = s2.r_next;
      visit(CoupledPoint{k + 1, r1, r2, l1, l2, d.dw});
      end.last_step = k + 1;
      if (r1 >= cfg_.truncation_level || r2 >= cfg_.truncation_level) {
        end.aborted = true;
        break;
      }
    }
    return end;
  }

  Trajectory trajectory(std::uint64_t index) const {
    return trajectory(index, cfg_.r0, cfg_.band());
  }

  Trajectory trajectory(std::uint64_t index, double r0, double band) const {
    Trajectory tr;
    reserve(tr);
    const PathEnd end = run(index, r0, band, [&](const PathPoint& pt) { record(tr, pt); });
    tr.aborted = end.aborted;
    tr.abort_step = end.aborted ? end.last_step : 0;
    return tr;
  }

  PathSummary summary(std::uint64_t index) const {
    PathSummary s;
    const PathEnd end = run(index, [&](const PathPoint& pt) {
      s.r_T = pt.r;
      s.ell0 = pt.ledger.ell0;
      s.ell0_plus = pt.ledger.ell0_plus;
      s.ell0_minus = pt.ledger.ell0_minus;
    });
    s.aborted = end.aborted;
    return s;
  }

  CoupledTrajectory coupled(std::uint64_t index, const Perturbation& pert) const {
    CoupledTrajectory ct;
    reserve(ct.first);
    reserve(ct.second);
    const PathEnd end = run_coupled(index, pert, [&](const CoupledPoint& pt) {
      record(ct.first, PathPoint{pt.k, pt.r1, pt.ledger1, pt.dw, 0.0});
      record(ct.second, PathPoint{pt.k, pt.r2, pt.ledger2, pt.dw, 0.0});
      ct.sup.push_back(pt.sup());
      ct.inf.push_back(pt.inf());
      ct.gap.push_back(pt.sup() - pt.inf());
    });
    ct.aborted = ct.first.aborted = ct.second.aborted = end.aborted;
    if (end.aborted) ct.first.abort_step = ct.second.abort_step = end.last_step;
    return ct;
  }

private:
  void reserve(Trajectory& tr) const {
    tr.times.reserve(n_steps_ + 1);
    tr.values.reserve(n_steps_ + 1);
    tr.brownian_increments.reserve(n_steps_);
    tr.ledger.ell0.reserve(n_steps_ + 1);
    tr.ledger.ell0_plus.reserve(n_steps_ + 1);
    tr.ledger.ell0_minus.reserve(n_steps_ + 1);
  }

  void record(Trajectory& tr, const PathPoint& pt) const {
    tr.times.push_back(times_[pt.k]);
    tr.values.push_back(pt.r);
    if (pt.k > 0) tr.brownian_increments.push_back(pt.dw);
    tr.ledger.ell0.push_back(pt.ledger.ell0);
    tr.ledger.ell0_plus.push_back(pt.ledger.ell0_plus);
    tr.ledger.ell0_minus.push_back(pt.ledger.ell0_minus);
  }

  ModelParams params_;
  SimConfig cfg_;
  std::size_t n_steps_ = 0;
  std::vector<double> times_;
  std::vector<double> lambda_;
};

// ---------------------------------------------------------------------------
// Batches

struct MeanStat {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard error, accumulated in index order.
inline MeanStat mean_stat(std::span<const double> xs) {
  MeanStat s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / (xs.size() - 1) / xs.size());
  }
  return s;
}

struct BatchSummary {
  std::vector<PathSummary> paths;
  std::size_t aborted = 0;

  template <class Proj>
  MeanStat stat(Proj proj, bool skip_aborted = true) const {
    std::vector<double> xs;
    xs.reserve(paths.size());
    for (const auto& p : paths)
      if (!(skip_aborted && p.aborted)) xs.push_back(proj(p));
    return mean_stat(xs);
  }
};

/// n_paths full trajectories, path i on stream (seed, i).
inline std::vector<Trajectory> simulate(const ModelParams& m, const Curve& curve, const SimConfig& cfg) {
  const Simulator sim(m, curve, cfg);
  return parallel_map<Trajectory>(cfg.n_paths, cfg.threads,
                                  [&](std::size_t i) { return sim.trajectory(i); });
}

/// Terminal values and ledgers only; memory independent of the step count.
inline BatchSummary simulate_summary(const ModelParams& m, const Curve& curve, const SimConfig& cfg) {
  const Simulator sim(m, curve, cfg);
  BatchSummary out;
  out.paths = parallel_map<PathSummary>(cfg.n_paths, cfg.threads,
                                        [&](std::size_t i) { return sim.summary(i); });
  for (const auto& p : out.paths) out.aborted += p.aborted ? 1 : 0;
  return out;
}

inline std::vector<CoupledTrajectory> couple(const ModelParams& m, const Curve& curve,
                                             const SimConfig& cfg, const Perturbation& pert) {
  const Simulator sim(m, curve, cfg);
  return parallel_map<CoupledTrajectory>(cfg.n_paths, cfg.threads,
                                         [&](std::size_t i) { return sim.coupled(i, pert); });
}

} // namespace skewbesq
