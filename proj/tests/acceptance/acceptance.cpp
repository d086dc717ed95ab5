// Acceptance report: one PASS/FAIL line per criterion. Exits 0 once every
// check has run; pass --strict to exit 1 when any line fails.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "../criterion_golden.hpp"
#include "skewbesq/cli.hpp"

using namespace skewbesq;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail, double seconds) {
  std::printf("AC%d %s %s: %s (%.1fs)\n", id, pass ? "PASS" : "FAIL", title, detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class F>
void run(int id, const char* title, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail += std::string(" exception: ") + e.what();
  }
  report(id, title, pass, detail,
         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

SimConfig sim_config(double dt, double T, std::size_t n_paths, double r0) {
  SimConfig c;
  c.dt = dt;
  c.T = T;
  c.n_paths = n_paths;
  c.r0 = r0;
  return c;
}

bool mean_within_3se(const ModelParams& m, const SimConfig& c, double target, std::string& detail) {
  const auto batch = simulate_summary(m, Curve::constant(1, c.T), c);
  const auto s = batch.stat([](const PathSummary& p) { return p.r_T; });
  const double z = std::abs(s.mean - target) / s.stderr_;
  detail = "mean R_T=" + num(s.mean) + " stderr=" + num(s.stderr_) + " target=" + num(target) +
           " |z|=" + num(z) + " aborted=" + std::to_string(batch.aborted);
  return z <= 3.0 && batch.aborted == 0;
}

const Statistic* find(const ExperimentReport& r, const std::string& name) {
  for (const auto& s : r.stats)
    if (s.name == name) return &s;
  return nullptr;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  const std::string default_conf = SKEWBESQ_SOURCE_DIR "/configs/default.conf";

  run(1, "squared Bessel mean", [](std::string& d) {
    return mean_within_3se(make_params(2, 2, 0, 0.5), sim_config(1e-3, 1, 100000, 1), 3.0, d);
  });

  run(2, "CIR mean", [](std::string& d) {
    return mean_within_3se(make_params(2, 2, 1, 0.5), sim_config(1e-3, 2, 100000, 5),
                           2.0 + 3.0 * std::exp(-2.0), d);
  });

  run(3, "skew local-time ratio", [](std::string& d) {
    const auto m = make_params(2, 2, 0, 0.75);
    SimConfig c = sim_config(1e-4, 1, 10000, 1);
    c.band_eps = std::sqrt(c.dt);
    const auto rep = test_local_time_relations(m, Curve::constant(1, 1), c);
    const Statistic* ratio = find(rep, "ratio_plus_minus");
    const Statistic* rd = find(rep, "ratio_rel_dev");
    const Statistic* pd = find(rep, "plus_vs_2p_ell0_rel_dev");
    if (!ratio || !rd || !pd) {
      d = "local time never visited: " + rep.reason;
      return false;
    }
    d = "ratio=" + num(ratio->value) + " (target 3, rel dev " + num(rd->value) + "), |plus-2p*ell0|/ell0=" +
        num(pd->value) + ", tolerance 0.15";
    return rd->pass() && pd->pass();
  });

  run(4, "exact invariants", [](std::string& d) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int nonzero = 0;
    for (int i = 0; i < 100; ++i) {
      double p = u(rng);
      while (p == 0.0) p = u(rng);
      nonzero += skew_weight_cancellation(p) != 0.0;
    }
    std::size_t identity = 0, negative = 0, points = 0;
    auto scan = [&](const ModelParams& m, const Curve& curve) {
      SimConfig c = sim_config(1e-3, 1, 500, 1);
      for (const auto& tr : simulate(m, curve, c))
        for (std::size_t k = 0; k < tr.values.size(); ++k, ++points) {
          negative += tr.values[k] < 0.0;
          identity += tr.ledger.ell0[k] != 0.5 * (tr.ledger.ell0_plus[k] + tr.ledger.ell0_minus[k]);
        }
    };
    scan(make_params(2, 2, 0, 0.75), Curve::linear(1, 1.5, 1));
    scan(make_params(2, 0.5, 1, 0.3), Curve::piecewise({{0, 0.2}, {0.5, 1.5}, {1, 0}}));
    scan(make_params(1, 1, 2, 0.9), Curve::constant(0, 1));
    d = "nonzero cancellations=" + std::to_string(nonzero) + "/100, ledger identity breaks=" +
        std::to_string(identity) + ", negative values=" + std::to_string(negative) + " over " +
        std::to_string(points) + " stored points";
    return nonzero == 0 && identity == 0 && negative == 0;
  });

  run(5, "Kummer eigen-residual", [](std::string& d) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> sig(0.5, 3), del(0.5, 6), bb(0.1, 3), al(-2, 2);
    double worst = 0.0, worst_exp = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto m = make_params(sig(rng), del(rng), bb(rng), 0.5);
      const double alpha = al(rng);
      const auto f = eigenfunction(m, alpha);
      const double c = eigenvalue(m, alpha);
      for (int i = 1; i <= 20; ++i) {
        const double x = 0.5 * i;
        const Jet j = f(x);
        worst = std::max(worst, std::abs(GeneratorL{m}.apply(x, j) - c * j.value) / (1.0 + std::abs(j.value)));
      }
      const auto g = eigenfunction(m, 0.5 * m.delta);
      for (int i = 0; i <= 1000; ++i) {
        const double x = 0.01 * i, e = std::exp(0.5 * m.b * x);
        worst_exp = std::max(worst_exp, std::abs(g.value(x) - e) / e);
      }
    }
    d = "max scaled residual=" + num(worst) + " (tol 1e-7), max relative error of alpha=delta/2 vs exp(bx/2)=" +
        num(worst_exp) + " (tol 1e-12)";
    return worst <= 1e-7 && worst_exp <= 1e-12;
  });

  run(6, "criterion golden table", [](std::string& d) {
    int rows = 0, mismatches = 0, confirmed = 0, guaranteed = 0;
    double worst = 0.0;
    auto expect = [&](const CriterionReport& r, Verdict v, double margin) {
      ++rows;
      if (r.verdict != v || std::abs(r.min_margin - margin) > 1e-12) ++mismatches;
    };
    expect(check_corollary(make_params(2, 2, 0, 0.75), Curve::linear(1, 1.5, 2), 2), Verdict::Guaranteed, 0.5);
    expect(check_corollary(make_params(2, 2, 1, 0.25), Curve::constant(3, 5), 5), Verdict::Guaranteed, 1.0);
    expect(check_corollary(make_params(2, 2, 0, 0.25), Curve::constant(1, 1), 1), Verdict::Inconclusive, -2.0);
    for (const auto& row : golden::table()) {
      const auto rep = check_corollary(row.m, row.curve, row.horizon);
      expect(rep, row.verdict, row.margin);
      if (rep.route != row.route) ++mismatches;
      if (!rep.guaranteed()) continue;
      ++guaranteed;
      const bool ok = confirm_corollary(row.m, row.curve, row.horizon, rep).guaranteed();
      if (row.m.skew_sign() != 0) {
        const auto grid = ResidualGrid::defaults(row.m, row.curve, row.horizon);
        const auto w = corollary_witness(row.m, row.curve, rep.route);
        const auto field = pde_residual(row.m, row.curve, SkewWeight::canonical(row.m.p), w, grid);
        worst = std::max(worst, field.max_abs_residual);
        for (const auto& n : field.nodes) {
          const double hand = rep.route == Route::CorollaryLinearF
                                  ? golden::linear_generator(row.m, row.curve, n.t, n.x)
                                  : golden::exp_generator(row.m, row.curve, n.t, n.x);
          if (std::abs(n.generator - hand) > 1e-9 * (1 + std::abs(hand))) ++mismatches;
        }
      }
      confirmed += ok;
    }
    d = std::to_string(rows) + " rows, " + std::to_string(mismatches) + " mismatches, " +
        std::to_string(confirmed) + "/" + std::to_string(guaranteed) +
        " guaranteed rows confirmed on 50x50 grids, max residual=" + num(worst);
    return mismatches == 0 && confirmed == guaranteed && worst <= 1e-8;
  });

  run(7, "martingale problem", [&](std::string& d) {
    const RunConfig rc = load_config(default_conf);
    SimConfig c = rc.sim;
    c.n_paths = 100000;
    const auto tf = TestFunctionFlux::compliant(rc.model.p, c.T);
    auto broken = tf;
    broken.p = control_skew(rc.model.p);
    const auto pair = detail::martingale_reports(rc.model, rc.build_curve(), c, tf, broken);
    const Statistic* a = find(pair.main, "abs_m");
    const Statistic* b = find(pair.control, "abs_m");
    d = "default config, 1e5 paths: |m|=" + num(a->value) + " stderr=" + num(a->stderr_) + " band=" +
        num(a->tolerance) + "; broken flux |m|=" + num(b->value) + " band=" + num(b->tolerance);
    return a->pass() && !b->pass();
  });

  run(8, "uniqueness decay ladder", [&](std::string& d) {
    const RunConfig rc = load_config(default_conf);
    SimConfig c = rc.sim;
    c.n_paths = rc.coupled_paths;
    const auto rep = test_uniqueness_decay(rc.model, rc.build_curve(), c, rc.dt_ladder);
    for (const auto& s : rep.stats)
      if (s.name.rfind("gap_dt=", 0) == 0 || s.name == "final_gap_over_sup")
        d += s.name + "=" + num(s.value) + " ";
    d += "outcome=" + std::string(to_string(rep.outcome()));
    if (!rep.reason.empty()) d += " (" + rep.reason + ")";
    return rep.outcome() == Outcome::Passed;
  });

  run(9, "verify determinism", [&](std::string& d) {
    const fs::path tmp = fs::temp_directory_path() / "skewbesq-acceptance";
    fs::remove_all(tmp);
    std::ostringstream sink;
    const int a = run_cli({"verify", "--config", default_conf, "--out", (tmp / "a").string(), "--threads", "1"},
                          sink, sink);
    const int b = run_cli({"verify", "--config", default_conf, "--out", (tmp / "b").string(), "--threads", "2"},
                          sink, sink);
    const std::string ca = slurp(tmp / "a" / "suite.csv"), cb = slurp(tmp / "b" / "suite.csv");
    const bool same = !ca.empty() && ca == cb && slurp(tmp / "a" / "suite.txt") == slurp(tmp / "b" / "suite.txt");
    d = "exit codes " + std::to_string(a) + "/" + std::to_string(b) + ", suite.csv " + std::to_string(ca.size()) +
        " bytes, " + (same ? "byte-identical" : "DIFFERENT") + " across thread counts 1 and 2";
    fs::remove_all(tmp);
    return same && a == b && (a == exit_ok || a == exit_experiment_failed);
  });

  std::printf("%d of 9 criteria failed\n", failures);
  return strict && failures > 0 ? 1 : 0;
}
