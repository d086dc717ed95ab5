#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skewbesq/curve.hpp"
#include "skewbesq/engine.hpp"
#include "skewbesq/errors.hpp"
#include "skewbesq/format.hpp"
#include "skewbesq/lab.hpp"
#include "skewbesq/model.hpp"

namespace skewbesq {

/// Curve as written in a config file; build() validates it.
struct CurveSpec {
  CurveKind kind = CurveKind::Constant;
  double c = 0.0;
  double slope = 0.0;
  double a = 0.0;
  double k = 0.0;
  double t_max = 1.0;
  std::vector<Knot> knots;

  Curve build() const {
    switch (kind) {
    case CurveKind::Constant: return Curve::constant(c, t_max);
    case CurveKind::Linear: return Curve::linear(c, slope, t_max);
    case CurveKind::ExpRelaxation: return Curve::exp_relaxation(a, c, k, t_max);
    case CurveKind::PiecewiseLinear: return Curve::piecewise(knots);
    }
    throw UsageError("unknown curve kind");
  }

  bool operator==(const CurveSpec&) const = default;
};

/// Everything a run needs, as parsed from `section.key = value` lines.
///
///   model.sigma, model.delta, model.b, model.p
///   curve.kind = constant|linear|piecewise|exp
///   curve.c, curve.slope, curve.a, curve.k, curve.t_max, curve.knots = t0:v0, t1:v1, ...
///   sim.dt, sim.T, sim.n_paths, sim.seed, sim.band_eps, sim.r0,
///   sim.truncation_level, sim.dump_paths
///   check.horizon
///   verify.experiments = name, name, ...   verify.dt_ladder = dt, dt, ...
///   verify.coupled_paths
///   run.threads, run.out
///
/// `#` starts a comment. Unknown keys, repeated keys and malformed values
/// are usage errors; range checks happen when the parts are validated.
struct RunConfig {
  ModelParams model;
  std::optional<CurveSpec> curve;
  SimConfig sim;
  std::size_t dump_paths = 0;
  std::optional<double> horizon;
  std::vector<std::string> experiments = experiment_names();
  std::vector<double> dt_ladder = default_dt_ladder();
  std::size_t coupled_paths = 0;
  std::string out = "skewbesq-out";

  bool operator==(const RunConfig&) const = default;

  const CurveSpec& curve_spec() const {
    if (!curve) throw UsageError("config has no curve section (curve.kind is required)");
    return *curve;
  }
  Curve build_curve() const { return curve_spec().build(); }
  double check_horizon() const { return horizon.value_or(sim.T); }

  SuiteOptions suite_options() const {
    SuiteOptions o;
    o.experiments = experiments;
    o.dt_ladder = dt_ladder;
    o.coupled_paths = coupled_paths;
    return o;
  }
};

namespace detail {

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(',');
    const auto item = trim(s.substr(0, pos));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

inline double to_double(std::string_view key, std::string_view v) {
  double d = 0.0;
  if (!parse_double(v, d)) throw UsageError(std::string(key) + ": '" + std::string(v) + "' is not a number");
  return d;
}

inline std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t u = 0;
  if (v.size() > 2 && (v.substr(0, 2) == "0x" || v.substr(0, 2) == "0X")) {
    auto r = std::from_chars(v.data() + 2, v.data() + v.size(), u, 16);
    if (r.ec == std::errc() && r.ptr == v.data() + v.size()) return u;
  } else if (parse_u64(v, u)) {
    return u;
  }
  throw UsageError(std::string(key) + ": '" + std::string(v) + "' is not a nonnegative integer");
}

inline CurveKind to_kind(std::string_view v) {
  for (CurveKind k : {CurveKind::Constant, CurveKind::Linear, CurveKind::PiecewiseLinear,
                      CurveKind::ExpRelaxation})
    if (to_string(k) == v) return k;
  throw UsageError("curve.kind: '" + std::string(v) + "' is not one of constant|linear|piecewise|exp");
}

inline std::vector<Knot> to_knots(std::string_view v) {
  std::vector<Knot> knots;
  for (auto item : split_list(v)) {
    const auto colon = item.find(':');
    if (colon == std::string_view::npos)
      throw UsageError("curve.knots: entry '" + std::string(item) + "' is not time:value");
    knots.push_back({to_double("curve.knots", trim(item.substr(0, colon))),
                     to_double("curve.knots", trim(item.substr(colon + 1)))});
  }
  return knots;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + fmt(xs[i]);
  return out;
}

} // namespace detail

inline RunConfig parse_config(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!kv.emplace(key, value).second)
      throw UsageError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
  }

  RunConfig rc;
  auto take = [&](std::string_view key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&](std::string_view key, double& dst) {
    if (auto v = take(key)) dst = detail::to_double(key, *v);
  };
  auto count = [&](std::string_view key, std::size_t& dst) {
    if (auto v = take(key)) dst = static_cast<std::size_t>(detail::to_u64(key, *v));
  };

  num("model.sigma", rc.model.sigma);
  num("model.delta", rc.model.delta);
  num("model.b", rc.model.b);
  num("model.p", rc.model.p);

  if (auto kind = take("curve.kind")) {
    CurveSpec cs;
    cs.kind = detail::to_kind(*kind);
    auto need = [&](std::string_view key, double& dst) {
      auto v = take(key);
      if (!v) throw UsageError(std::string(key) + " is required for curve.kind=" + *kind);
      dst = detail::to_double(key, *v);
    };
    switch (cs.kind) {
    case CurveKind::Constant: need("curve.c", cs.c); break;
    case CurveKind::Linear:
      need("curve.c", cs.c);
      need("curve.slope", cs.slope);
      break;
    case CurveKind::ExpRelaxation:
      need("curve.a", cs.a);
      need("curve.c", cs.c);
      need("curve.k", cs.k);
      break;
    case CurveKind::PiecewiseLinear: {
      auto v = take("curve.knots");
      if (!v) throw UsageError("curve.knots is required for curve.kind=piecewise");
      cs.knots = detail::to_knots(*v);
      if (!cs.knots.empty()) cs.t_max = cs.knots.back().time;
      break;
    }
    }
    if (cs.kind != CurveKind::PiecewiseLinear) {
      cs.t_max = std::numeric_limits<double>::quiet_NaN();
      num("curve.t_max", cs.t_max);
    }
    rc.curve = cs;
  }

  num("sim.dt", rc.sim.dt);
  num("sim.T", rc.sim.T);
  count("sim.n_paths", rc.sim.n_paths);
  if (auto v = take("sim.seed")) rc.sim.seed = detail::to_u64("sim.seed", *v);
  num("sim.band_eps", rc.sim.band_eps);
  num("sim.r0", rc.sim.r0);
  num("sim.truncation_level", rc.sim.truncation_level);
  count("sim.dump_paths", rc.dump_paths);
  if (auto v = take("check.horizon")) rc.horizon = detail::to_double("check.horizon", *v);
  if (auto v = take("verify.experiments")) {
    rc.experiments.clear();
    for (auto item : detail::split_list(*v)) rc.experiments.emplace_back(item);
  }
  if (auto v = take("verify.dt_ladder")) {
    rc.dt_ladder.clear();
    for (auto item : detail::split_list(*v)) rc.dt_ladder.push_back(detail::to_double("verify.dt_ladder", item));
  }
  count("verify.coupled_paths", rc.coupled_paths);
  if (auto v = take("run.threads")) rc.sim.threads = static_cast<unsigned>(detail::to_u64("run.threads", *v));
  if (auto v = take("run.out")) rc.out = *v;

  if (!kv.empty()) {
    const auto& key = kv.begin()->first;
    if (key.rfind("curve.", 0) == 0 && rc.curve)
      throw UsageError("key '" + key + "' does not apply to curve.kind=" +
                       std::string(to_string(rc.curve->kind)));
    throw UsageError("unknown config key '" + key + "'");
  }
  // A closed-form curve without t_max covers the simulation horizon.
  if (rc.curve && std::isnan(rc.curve->t_max)) rc.curve->t_max = rc.sim.T;
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Canonical text form; parse_config(serialize(rc)) == rc.
inline std::string serialize(const RunConfig& rc) {
  std::ostringstream os;
  os << "model.sigma = " << fmt_exact(rc.model.sigma) << '\n'
     << "model.delta = " << fmt_exact(rc.model.delta) << '\n'
     << "model.b = " << fmt_exact(rc.model.b) << '\n'
     << "model.p = " << fmt_exact(rc.model.p) << '\n';
  if (rc.curve) {
    const CurveSpec& c = *rc.curve;
    os << "curve.kind = " << to_string(c.kind) << '\n';
    switch (c.kind) {
    case CurveKind::Constant: os << "curve.c = " << fmt_exact(c.c) << '\n'; break;
    case CurveKind::Linear:
      os << "curve.c = " << fmt_exact(c.c) << '\n' << "curve.slope = " << fmt_exact(c.slope) << '\n';
      break;
    case CurveKind::ExpRelaxation:
      os << "curve.a = " << fmt_exact(c.a) << '\n'
         << "curve.c = " << fmt_exact(c.c) << '\n'
         << "curve.k = " << fmt_exact(c.k) << '\n';
      break;
    case CurveKind::PiecewiseLinear:
      os << "curve.knots = "
         << detail::join(c.knots, [](const Knot& k) { return fmt_exact(k.time) + ":" + fmt_exact(k.value); })
         << '\n';
      break;
    }
    if (c.kind != CurveKind::PiecewiseLinear) os << "curve.t_max = " << fmt_exact(c.t_max) << '\n';
  }
  os << "sim.dt = " << fmt_exact(rc.sim.dt) << '\n'
     << "sim.T = " << fmt_exact(rc.sim.T) << '\n'
     << "sim.n_paths = " << rc.sim.n_paths << '\n'
     << "sim.seed = " << rc.sim.seed << '\n'
     << "sim.band_eps = " << fmt_exact(rc.sim.band_eps) << '\n'
     << "sim.r0 = " << fmt_exact(rc.sim.r0) << '\n'
     << "sim.truncation_level = " << fmt_exact(rc.sim.truncation_level) << '\n'
     << "sim.dump_paths = " << rc.dump_paths << '\n';
  if (rc.horizon) os << "check.horizon = " << fmt_exact(*rc.horizon) << '\n';
  os << "verify.experiments = " << detail::join(rc.experiments, [](const std::string& s) { return s; }) << '\n'
     << "verify.dt_ladder = " << detail::join(rc.dt_ladder, [](double d) { return fmt_exact(d); }) << '\n'
     << "verify.coupled_paths = " << rc.coupled_paths << '\n'
     << "run.threads = " << rc.sim.threads << '\n'
     << "run.out = " << rc.out << '\n';
  return os.str();
}

} // namespace skewbesq
