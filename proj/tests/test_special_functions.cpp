#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "skewbesq/special_functions.hpp"

using namespace skewbesq;

namespace {

// Richardson-extrapolated central differences, O(h^4).
double rich1(const std::function<double(double)>& f, double x, double h) {
  return (4.0 * oracle::fd1(f, x, h / 2) - oracle::fd1(f, x, h)) / 3.0;
}
double rich2(const std::function<double(double)>& f, double x, double h) {
  return (4.0 * oracle::fd2(f, x, h / 2) - oracle::fd2(f, x, h)) / 3.0;
}

} // namespace

TEST(Kummer, ValueAtZeroIsOne) {
  for (double a : {-1.5, 0.0, 0.3, 2.0})
    for (double b : {0.5, 1.0, 3.5}) EXPECT_EQ(kummer_m(a, b, 0.0), 1.0);
}

TEST(Kummer, EqualParametersGiveExponential) {
  EXPECT_NEAR(kummer_m(1, 1, 1), 2.718281828459045, 1e-15);
}

TEST(Kummer, MatchesLongDoubleSeries) {
  EXPECT_NEAR(kummer_m(1, 2, 1), 1.718281828459045, 1e-15);
  EXPECT_NEAR(kummer_m(1, 2, 1), static_cast<double>(oracle::kummer(1, 2, 1)), 1e-15);
  for (double a : {-1.7, -0.5, 0.25, 1.0, 3.0})
    for (double b : {0.25, 1.5, 3.0})
      for (double z : {0.1, 1.0, 5.0, 12.0}) {
        const double ref = static_cast<double>(oracle::kummer(a, b, z));
        EXPECT_NEAR(kummer_m(a, b, z), ref, 1e-13 * std::max(1.0, std::abs(ref))) << a << ' ' << b << ' ' << z;
      }
}

TEST(Kummer, SumFollowsTermRatioRecurrence) {
  const double a = 0.7, b = 1.3, z = 2.5;
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 200; ++n) {
    term *= (a + n) * z / ((b + n) * (n + 1));
    sum += term;
  }
  EXPECT_DOUBLE_EQ(kummer_m(a, b, z), sum);
}

TEST(Kummer, NegativeIntegerFirstParameterTerminates) {
  // M(-2, b, z) = 1 - 2z/b + z^2/(b(b+1))
  const double b = 1.5, z = 3.0;
  EXPECT_NEAR(kummer_m(-2, b, z), 1 - 2 * z / b + z * z / (b * (b + 1)), 1e-14);
}

TEST(Kummer, Errors) {
  EXPECT_THROW(kummer_m(1, 0, 1), DomainError);
  EXPECT_THROW(kummer_m(1, -2, 1), DomainError);
  EXPECT_THROW(kummer_m(1, 1, -0.5), DomainError);
  EXPECT_THROW(kummer_m(1, 1, 2e4), NumericalFailure);
}

TEST(Eigenfunction, ExponentialCase) {
  const auto m = make_params(2, 2, 1, 0.5);
  const auto f = eigenfunction(m, 1.0); // alpha = delta/2
  EXPECT_NEAR(f.value(2.0), std::exp(1.0), 1e-14);
  const auto fv = [&](double x) { return f.value(x); };
  const double Lf = oracle::generator(2, 2, 1, 2.0, rich1(fv, 2.0, 1e-3), rich2(fv, 2.0, 1e-3));
  EXPECT_NEAR(Lf, std::exp(1.0), 1e-8);
  EXPECT_NEAR(eigenvalue(m, 1.0) * f.value(2.0), std::exp(1.0), 1e-14);
}

TEST(Eigenfunction, AlphaZeroIsConstant) {
  const auto m = make_params(1.3, 2.5, 0.7, 0.5);
  const auto f = eigenfunction(m, 0.0);
  for (double x : {0.0, 0.5, 4.0}) {
    const Jet j = f(x);
    EXPECT_EQ(j.value, 1.0);
    EXPECT_EQ(GeneratorL{m}.apply(x, j), 0.0);
  }
}

TEST(Eigenfunction, FiniteDifferenceResidual) {
  const auto m = make_params(2, 3, 1, 0.5);
  const auto f = eigenfunction(m, 1.0);
  const auto fv = [&](double x) { return f.value(x); };
  const double Lf = oracle::generator(2, 3, 1, 1.0, rich1(fv, 1.0, 1e-3), rich2(fv, 1.0, 1e-3));
  EXPECT_NEAR(Lf - 1.0 * f.value(1.0), 0.0, 1e-8);
}

TEST(Eigenfunction, DomainChecks) {
  EXPECT_THROW(eigenfunction(make_params(2, 2, 0, 0.5), 1.0), DomainError);
  const auto f = eigenfunction(make_params(2, 2, 1, 0.5), 0.5);
  EXPECT_THROW(f(-0.1), DomainError);
}

TEST(Eigenfunction, DerivativesAgreeWithFiniteDifferences) {
  const auto f = eigenfunction(make_params(1.5, 2.5, 0.8, 0.5), -0.6);
  const auto fv = [&](double x) { return f.value(x); };
  const auto d1 = [&](double x) { return f(x).d1; };
  for (double x : {0.5, 1.0, 3.0, 7.0}) {
    EXPECT_NEAR(oracle::fd1(fv, x, 1e-5), f(x).d1, 1e-6 * std::max(1.0, std::abs(f(x).d1)));
    EXPECT_NEAR(oracle::fd1(d1, x, 1e-5), f(x).d2, 1e-6 * std::max(1.0, std::abs(f(x).d2)));
  }
}

// 100 random parameter sets, 20 points each.
TEST(Eigenfunction, RandomizedResidualSweep) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> sig(0.5, 3), del(0.5, 6), bb(0.1, 3), al(-2, 2);
  double worst_series = 0, worst_fd = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = make_params(sig(rng), del(rng), bb(rng), 0.5);
    const double alpha = al(rng);
    const auto f = eigenfunction(m, alpha);
    const double c = eigenvalue(m, alpha);
    const auto fv = [&](double x) { return f.value(x); };
    for (int i = 1; i <= 20; ++i) {
      const double x = 0.5 * i;
      const Jet j = f(x);
      const double s = 1.0 + std::abs(j.value);
      worst_series = std::max(worst_series, std::abs(GeneratorL{m}.apply(x, j) - c * j.value) / s);
      const double h = std::min(1e-3, 0.4 * x);
      const double Lfd = oracle::generator(m.sigma, m.delta, m.b, x, rich1(fv, x, h), rich2(fv, x, h));
      worst_fd = std::max(worst_fd, std::abs(Lfd - c * j.value) / s);
    }
  }
  EXPECT_LE(worst_series, 1e-7);
  EXPECT_LE(worst_fd, 1e-4);
}

TEST(HarmonicH, VanishesOnNonnegativeAxis) {
  const auto h = harmonic_h(make_params(2, 2, 1, 0.3));
  for (double x : {0.0, 1e-12, 0.5, 10.0, 1e6}) EXPECT_EQ(h.value(x), 0.0);
}

TEST(HarmonicH, QuadratureValue) {
  const auto h = harmonic_h(make_params(2, 2, 0, 0.5));
  EXPECT_NEAR(h.value(-1.0), -0.5, 1e-12);
  const auto m = make_params(1.5, 3.0, 0.8, 0.5);
  const auto hb = harmonic_h(m);
  const double ref = -oracle::simpson([&](double y) { return std::pow(y, 1.5) * std::exp(0.4 * y); }, 0, 2.3);
  EXPECT_NEAR(hb.value(-2.3), ref, 1e-10);
}

TEST(HarmonicH, GeneratorResidualAtNegativeArgument) {
  const auto h = harmonic_h(make_params(2, 2, 1, 0.5));
  const auto hv = [&](double x) { return h.value(x); };
  const double x = -0.7;
  EXPECT_LE(std::abs(oracle::generator(2, 2, 1, x, oracle::fd1(hv, x, 1e-3), oracle::fd2(hv, x, 1e-3))), 1e-6);
}

TEST(HarmonicH, NondecreasingOnNegativeAxis) {
  const auto h = harmonic_h(make_params(1, 2.5, 0.5, 0.5));
  double prev = h.value(-5.0);
  for (double x = -4.9; x <= 0.0; x += 0.1) {
    const double v = h.value(x);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(HarmonicH, DerivativeIsC1AtOrigin) {
  const auto h = harmonic_h(make_params(2, 2, 1, 0.5));
  EXPECT_NEAR(h(-1e-9).d1, 0.0, 1e-8);
  EXPECT_EQ(h(0.0).d1, 0.0);
}

TEST(Gate, SignPatternAndContinuity) {
  const Gate g{2.0, 3.0};
  for (double x = 0.01; x < 2.0; x += 0.01) EXPECT_GT(g(x).d1, 0.0) << x;
  EXPECT_NEAR(g(2.0).d1, 0.0, 1e-14);
  for (double x = 2.01; x < 20; x += 0.1) EXPECT_LT(g(x).d1, 0.0) << x;
  for (double knot : {1.0, 2.0}) {
    EXPECT_NEAR(g(knot - 1e-12).value, g(knot + 1e-12).value, 1e-9);
    EXPECT_NEAR(g(knot - 1e-12).d1, g(knot + 1e-12).d1, 1e-9);
  }
  EXPECT_EQ(g(0.7).value, std::pow(0.7, 3.0));
}

TEST(FG, ZeroAtOrigin) { EXPECT_EQ(f_g(make_params(2, 2, 1, 0.5), 1.0).f.value(0.0), 0.0); }

TEST(FG, GeneratorNegativePastGate) {
  const double c = 1.5;
  const auto fg = f_g(make_params(2, 2.5, 0.5, 0.5), c);
  EXPECT_LT(fg.generator(2 * c), 0.0);
  EXPECT_GT(fg.generator(0.5 * c), 0.0);
}

TEST(FG, GeneratorClosedFormMatchesOperator) {
  const auto m = make_params(1.7, 2.5, 0.6, 0.5);
  const auto fg = f_g(m, 1.2);
  for (double x : {0.2, 0.6, 0.9, 1.2, 2.0, 5.0})
    EXPECT_NEAR(GeneratorL{m}.apply(fg.f, x), fg.generator(x), 1e-10 * (1 + std::abs(fg.generator(x))));
}

TEST(FG, StrictlyIncreasingAndMatchesQuadrature) {
  const auto m = make_params(2, 2, 1, 0.5);
  const double c = 1.0;
  const auto fg = f_g(m, c);
  double prev = fg.f.value(-2.0);
  for (double x = -1.95; x <= 2 * c; x += 0.05) {
    const double v = fg.f.value(x);
    EXPECT_GT(v, prev) << x;
    prev = v;
  }
  const Gate g{c, 0.5 * m.delta + 2};
  auto integrand = [&](double y) { return y == 0 ? 0.0 : g(y).value / y * std::exp(0.5 * y); };
  const double ref = oracle::simpson(integrand, 0.0, 0.5) + oracle::simpson(integrand, 0.5, 1.0) +
                     oracle::simpson(integrand, 1.0, 1.7);
  EXPECT_NEAR(fg.f.value(1.7), ref, 1e-10);
}

TEST(FG, DerivativeConsistency) {
  const auto fg = f_g(make_params(2, 3, 0.5, 0.5), 1.0);
  const auto fv = [&](double x) { return fg.f.value(x); };
  for (double x : {-1.5, -0.3, 0.2, 0.75, 1.5, 3.0}) {
    const double d1 = fg.f(x).d1;
    EXPECT_NEAR(oracle::fd1(fv, x, 1e-5), d1, 1e-6 * std::max(1.0, std::abs(d1))) << x;
  }
}

TEST(FG, RejectsNonpositiveGate) {
  EXPECT_THROW(f_g(make_params(2, 2, 1, 0.5), 0.0), ValidationError);
}
