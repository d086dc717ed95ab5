#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skewbesq/config.hpp"
#include "skewbesq/criterion.hpp"
#include "skewbesq/engine.hpp"
#include "skewbesq/errors.hpp"
#include "skewbesq/lab.hpp"

namespace skewbesq {

/// Process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_validation = 2,
  exit_numerical = 3,
  exit_experiment_failed = 4,
};

struct CliOverrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

namespace detail {

inline RunConfig resolve(const CliOverrides& o) {
  RunConfig rc = load_config(o.config);
  if (o.out) rc.out = *o.out;
  if (o.seed) rc.sim.seed = *o.seed;
  if (o.threads) rc.sim.threads = *o.threads;
  return rc;
}

inline std::filesystem::path prepare_out(const RunConfig& rc, const std::string& command) {
  const std::filesystem::path dir(rc.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory '" + rc.out + "': " + ec.message());
  std::ofstream meta(dir / "run.meta", std::ios::binary);
  meta << "command = " << command << '\n' << serialize(rc);
  if (!meta) throw UsageError("cannot write run.meta in '" + rc.out + "'");
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw UsageError("cannot write '" + p.string() + "'");
}

inline int cmd_check(const RunConfig& rc, std::ostream& out) {
  validate(rc.model);
  const Curve curve = rc.build_curve();
  const double horizon = rc.check_horizon();
  const CriterionReport rep = check_corollary(rc.model, curve, horizon);
  out << rep.headline() << '\n' << rep.to_kv();
  std::string csv = CriterionReport::csv_header() + "\n" + rep.to_csv_row() + "\n";
  if (rep.guaranteed()) {
    const CriterionReport conf = confirm_corollary(rc.model, curve, horizon, rep);
    out << "confirmation=" << conf.headline() << '\n';
    csv += conf.to_csv_row() + "\n";
  }
  write_file(prepare_out(rc, "check") / "check.csv", csv);
  return exit_ok;
}

inline int cmd_simulate(const RunConfig& rc, std::ostream& out) {
  validate(rc.model);
  const Curve curve = rc.build_curve();
  const Simulator sim(rc.model, curve, rc.sim);
  const auto dir = prepare_out(rc, "simulate");

  BatchSummary batch;
  batch.paths = parallel_map<PathSummary>(rc.sim.n_paths, rc.sim.threads,
                                          [&](std::size_t i) { return sim.summary(i); });
  std::ostringstream csv;
  csv << "path_index,R_T,ell0,ell0_plus,ell0_minus,aborted\n";
  for (std::size_t i = 0; i < batch.paths.size(); ++i) {
    const auto& p = batch.paths[i];
    batch.aborted += p.aborted ? 1 : 0;
    csv << i << ',' << fmt17(p.r_T) << ',' << fmt17(p.ell0) << ',' << fmt17(p.ell0_plus) << ','
        << fmt17(p.ell0_minus) << ',' << (p.aborted ? 1 : 0) << '\n';
  }
  write_file(dir / "summary.csv", csv.str());

  const std::size_t dumps = std::min(rc.dump_paths, rc.sim.n_paths);
  if (dumps > 0) {
    std::filesystem::create_directories(dir / "paths");
    for (std::size_t i = 0; i < dumps; ++i)
      write_file(dir / "paths" / ("path_" + std::to_string(i) + ".csv"), sim.trajectory(i).to_csv());
  }

  const auto rt = batch.stat([](const PathSummary& s) { return s.r_T; });
  const auto l0 = batch.stat([](const PathSummary& s) { return s.ell0; });
  const auto lp = batch.stat([](const PathSummary& s) { return s.ell0_plus; });
  const auto lm = batch.stat([](const PathSummary& s) { return s.ell0_minus; });
  out << "paths=" << batch.paths.size() << '\n'
      << "aborted=" << batch.aborted << '\n'
      << "mean_R_T=" << fmt17(rt.mean) << " stderr=" << fmt17(rt.stderr_) << '\n'
      << "mean_ell0=" << fmt17(l0.mean) << " stderr=" << fmt17(l0.stderr_) << '\n'
      << "mean_ell0_plus=" << fmt17(lp.mean) << " stderr=" << fmt17(lp.stderr_) << '\n'
      << "mean_ell0_minus=" << fmt17(lm.mean) << " stderr=" << fmt17(lm.stderr_) << '\n';
  return exit_ok;
}

inline int cmd_verify(const RunConfig& rc, std::ostream& out) {
  if (rc.experiments.empty()) throw UsageError("verify.experiments is empty");
  validate(rc.model);
  const Curve curve = rc.build_curve();
  const SuiteResult suite = run_suite(rc.model, curve, rc.sim, rc.suite_options());
  const auto dir = prepare_out(rc, "verify");
  write_file(dir / "suite.csv", suite.to_csv());
  write_file(dir / "suite.txt", suite.to_kv());
  for (const auto& r : suite.reports) {
    out << r.name << ' ' << to_string(r.outcome()) << (r.negative_control ? " (negative control)" : "")
        << (r.ok() ? "" : " NOT-OK");
    if (!r.reason.empty()) out << " : " << r.reason;
    out << '\n';
  }
  out << "suite " << (suite.ok() ? "passed" : "failed") << '\n';
  return suite.ok() ? exit_ok : exit_experiment_failed;
}

} // namespace detail

/// Runs the command line `args` (without the program name). Every path
/// returns one of the ExitCode values.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulator and verifier for squared Bessel / CIR processes with skew reflection on a curve",
               "skewbesq"};
  app.require_subcommand(1);
  CliOverrides o;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string outdir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "config file (section.key = value lines)")->required();
    sub->add_option("--out", outdir, "output directory (overrides run.out)");
    sub->add_option("--seed", seed, "base seed (overrides sim.seed)");
    sub->add_option("--threads", threads, "worker threads, 0 = machine parallelism");
  };
  auto* check = app.add_subcommand("check", "classify the configuration with the uniqueness criterion");
  auto* simulate = app.add_subcommand("simulate", "simulate paths and write summary.csv");
  auto* verify = app.add_subcommand("verify", "run the property experiments and write suite.csv");
  for (auto* sub : {check, simulate, verify}) add_common(sub);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--out")) o.out = outdir;
  if (sub->count("--seed")) o.seed = seed;
  if (sub->count("--threads")) o.threads = threads;

  try {
    const RunConfig rc = detail::resolve(o);
    if (sub == check) return detail::cmd_check(rc, out);
    if (sub == simulate) return detail::cmd_simulate(rc, out);
    return detail::cmd_verify(rc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return exit_validation;
  } catch (const DomainError& e) {
    err << "validation error: " << e.what() << '\n';
    return exit_validation;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what();
    if (e.step() != NumericalFailure::npos) err << " (step " << e.step() << ")";
    err << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_numerical;
  }
}

} // namespace skewbesq
