#include <gtest/gtest.h>

#include <cmath>

#include "skewbesq/engine.hpp"

using namespace skewbesq;

namespace {

SimConfig small(std::size_t n_paths, double dt = 1e-2, double T = 1.0) {
  SimConfig c;
  c.n_paths = n_paths;
  c.dt = dt;
  c.T = T;
  c.threads = 1;
  return c;
}

} // namespace

TEST(Step, HandEulerFromZero) {
  const auto m = make_params(2, 2, 0, 0.75);
  const StepResult s = step(m, 1.0, 1.0, 0.0, 0.0, 0.9, 1e-3, std::sqrt(1e-3));
  EXPECT_DOUBLE_EQ(s.r_next, 2e-3);
  EXPECT_FALSE(s.skew_branch);
  EXPECT_EQ(s.ledger.plus, 0.0);
  EXPECT_EQ(s.ledger.minus, 0.0);
}

TEST(Step, CrossingUsesSkewDraw) {
  const auto m = make_params(2, 2, 0, 0.75);
  // From 0.95 below a curve at 1 the proposal 0.95 + 2*sqrt(0.95)*0.1 lands above.
  const double dw = 0.1, dt = 1e-3;
  const double proposal = 0.95 + 2 * std::sqrt(0.95) * dw + 2 * dt;
  const double dist = proposal - 1.0;
  const StepResult up = step(m, 1.0, 1.0, 0.95, dw, 0.5, dt, 0.01);
  const StepResult down = step(m, 1.0, 1.0, 0.95, dw, 0.8, dt, 0.01);
  EXPECT_TRUE(up.skew_branch);
  EXPECT_DOUBLE_EQ(up.r_next, 1.0 + dist);
  EXPECT_DOUBLE_EQ(down.r_next, 1.0 - dist);
}

TEST(Step, LedgerBandRules) {
  const auto m = make_params(2, 2, 0, 0.5);
  const double dt = 1e-3, band = 0.1;
  const double q = 4.0 * 1.05 * dt;
  const auto above = ledger_increment(m, 1.0, 1.05, dt, band);
  EXPECT_DOUBLE_EQ(above.plus, q / band);
  EXPECT_EQ(above.minus, 0.0);
  const auto below = ledger_increment(m, 1.0, 0.95, dt, band);
  EXPECT_DOUBLE_EQ(below.minus, 4.0 * 0.95 * dt / band);
  EXPECT_EQ(below.plus, 0.0);
  const auto on = ledger_increment(m, 1.0, 1.0, dt, band);
  EXPECT_DOUBLE_EQ(on.plus, 4.0 * dt / (2 * band));
  EXPECT_EQ(on.plus, on.minus);
  EXPECT_DOUBLE_EQ(on.symmetric(), 4.0 * dt / (2 * band));
  const auto outside = ledger_increment(m, 1.0, 1.2, dt, band);
  EXPECT_EQ(outside.plus + outside.minus, 0.0);
  EXPECT_EQ(ledger_increment(m, 0.0, 0.01, dt, band).plus, 0.0);
}

TEST(Simulate, CurveAtZeroLeavesLedgerEmpty) {
  const auto m = make_params(2, 0.5, 1, 0.8);
  const auto paths = simulate(m, Curve::constant(0, 1), small(50));
  for (const auto& tr : paths) {
    EXPECT_EQ(tr.ledger.final_plus(), 0.0);
    EXPECT_EQ(tr.ledger.final_minus(), 0.0);
  }
}

TEST(Simulate, PositivityAndLedgerIdentity) {
  const auto m = make_params(2, 1.0, 0.5, 0.3);
  const auto paths = simulate(m, Curve::piecewise({{0, 0.5}, {0.5, 2}, {1, 0.2}}), small(100));
  for (const auto& tr : paths) {
    ASSERT_EQ(tr.values.size(), 101u);
    ASSERT_EQ(tr.brownian_increments.size(), 100u);
    for (std::size_t k = 0; k < tr.values.size(); ++k) {
      ASSERT_GE(tr.values[k], 0.0);
      ASSERT_EQ(tr.ledger.ell0[k], 0.5 * (tr.ledger.ell0_plus[k] + tr.ledger.ell0_minus[k]));
      if (k > 0) ASSERT_GE(tr.ledger.ell0_plus[k], tr.ledger.ell0_plus[k - 1]);
    }
  }
}

TEST(Simulate, DeterministicAcrossThreadCounts) {
  const auto m = make_params(2, 2, 0, 0.75);
  const auto curve = Curve::linear(1, 1.5, 1);
  auto cfg = small(64);
  const auto a = simulate(m, curve, cfg);
  cfg.threads = 4;
  const auto b = simulate(m, curve, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].to_csv(), b[i].to_csv());
  cfg.seed ^= 1;
  EXPECT_NE(simulate(m, curve, cfg)[0].values, a[0].values);
}

TEST(Simulate, PathDependsOnlyOnItsIndex) {
  const auto m = make_params(2, 2, 0, 0.75);
  const auto curve = Curve::constant(1, 1);
  const auto few = simulate(m, curve, small(3));
  const auto many = simulate(m, curve, small(30));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(few[i].values, many[i].values);
}

TEST(Simulate, NoPaths) {
  EXPECT_TRUE(simulate(make_params(2, 2, 0, 0.5), Curve::constant(1, 1), small(0)).empty());
  EXPECT_TRUE(simulate_summary(make_params(2, 2, 0, 0.5), Curve::constant(1, 1), small(0)).paths.empty());
}

TEST(Simulate, ConfigErrors) {
  const auto m = make_params(2, 2, 0, 0.5);
  const auto curve = Curve::constant(1, 1);
  EXPECT_THROW(simulate(m, curve, small(1, 0.3)), ValidationError);
  EXPECT_THROW(simulate(m, curve, small(1, 1e-2, 2.0)), DomainError);
  auto c = small(1);
  c.r0 = -1;
  EXPECT_THROW(simulate(m, curve, c), ValidationError);
}

TEST(Simulate, TruncationAbortsPath) {
  auto c = small(20);
  c.truncation_level = 1.05;
  const auto batch = simulate_summary(make_params(2, 2, 0, 0.5), Curve::constant(0.5, 1), c);
  EXPECT_GT(batch.aborted, 0u);
  const auto tr = simulate(make_params(2, 2, 0, 0.5), Curve::constant(0.5, 1), c);
  for (const auto& t : tr)
    if (t.aborted) EXPECT_GE(t.values.back(), 1.05);
}

TEST(Simulate, SummaryMatchesTrajectory) {
  const auto m = make_params(1.5, 2.5, 0.3, 0.6);
  const auto curve = Curve::linear(1, 0.5, 1);
  const Simulator sim(m, curve, small(5));
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto tr = sim.trajectory(i);
    const auto s = sim.summary(i);
    EXPECT_EQ(s.r_T, tr.values.back());
    EXPECT_EQ(s.ell0_plus, tr.ledger.final_plus());
    EXPECT_EQ(s.ell0_minus, tr.ledger.final_minus());
  }
}

TEST(Simulate, ClassicalMeanMatchesOde) {
  auto c = small(20000, 1e-2, 1.0);
  c.r0 = 1.0;
  const auto batch = simulate_summary(make_params(2, 2, 0, 0.5), Curve::constant(1, 1), c);
  const auto rt = batch.stat([](const PathSummary& s) { return s.r_T; });
  EXPECT_NEAR(rt.mean, 3.0, 3 * rt.stderr_);
}

TEST(Simulate, MeanRevertingMeanMatchesOde) {
  auto c = small(20000, 1e-3, 2.0);
  c.r0 = 5.0;
  const auto batch = simulate_summary(make_params(2, 2, 1, 0.5), Curve::constant(1, 2), c);
  const auto rt = batch.stat([](const PathSummary& s) { return s.r_T; });
  EXPECT_NEAR(rt.mean, 2.0 + 3.0 * std::exp(-2.0), 3 * rt.stderr_);
}

TEST(Couple, IdenticalInputsGiveZeroGap) {
  const auto m = make_params(2, 2, 0, 0.75);
  auto c = small(10);
  const auto pairs = couple(m, Curve::linear(1, 1.5, 1), c, Perturbation::none(c));
  for (const auto& ct : pairs)
    for (double g : ct.gap) ASSERT_EQ(g, 0.0);
}

TEST(Couple, InitialGapAndOrdering) {
  const auto m = make_params(2, 2, 0, 0.75);
  auto c = small(10);
  const auto pairs = couple(m, Curve::linear(1, 1.5, 1), c, Perturbation::initial(c, 1.0, 1.25));
  for (const auto& ct : pairs) {
    EXPECT_DOUBLE_EQ(ct.gap[0], 0.25);
    for (std::size_t k = 0; k < ct.gap.size(); ++k) {
      ASSERT_EQ(ct.sup[k], std::max(ct.first.values[k], ct.second.values[k]));
      ASSERT_EQ(ct.inf[k], std::min(ct.first.values[k], ct.second.values[k]));
      ASSERT_EQ(ct.gap[k], ct.sup[k] - ct.inf[k]);
    }
    EXPECT_EQ(ct.first.brownian_increments, ct.second.brownian_increments);
  }
}

TEST(Couple, FirstMemberMatchesSinglePath) {
  const auto m = make_params(2, 2, 0, 0.75);
  auto c = small(4);
  const Simulator sim(m, Curve::constant(1, 1), c);
  for (std::uint64_t i = 0; i < 4; ++i)
    EXPECT_EQ(sim.coupled(i, Perturbation::bands(c, c.band(), 2 * c.band())).first.values,
              sim.trajectory(i).values);
}

TEST(Trajectory, CsvLayout) {
  const auto tr = simulate(make_params(2, 2, 0, 0.5), Curve::constant(1, 1), small(1, 0.25))[0];
  const std::string csv = tr.to_csv();
  EXPECT_EQ(csv.rfind("t,R,ell0,ell0_plus,ell0_minus\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_NE(csv.find("\n0,1,0,0,0\n"), std::string::npos);
}

TEST(Streams, SeedMixing) {
  EXPECT_NE(stream_seed(1, 0), stream_seed(1, 1));
  EXPECT_NE(stream_seed(1, 0), stream_seed(2, 0));
  EXPECT_EQ(stream_seed(42, 7), mix64(42 ^ mix64(7)));
}

TEST(Stats, MeanAndStderr) {
  const std::vector<double> xs{1, 2, 3, 4};
  const auto s = mean_stat(xs);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stderr_, std::sqrt(5.0 / 3.0 / 4.0));
  EXPECT_EQ(mean_stat(std::vector<double>{}).n, 0u);
}
