#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "weakkam/aubry_mather.hpp"
#include "weakkam/regularizer.hpp"

using namespace weakkam;

namespace {

struct Pendulum {
  GridTorus g;
  ActionKernel k;
  double c;
  WeakKamSolution u;
};

Pendulum pendulum(int n) {
  auto g = build_grid(1, n);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  const double c = critical_value(k).c;
  auto u = weak_kam_solution(k, c, ValueFunction::constant(g, 0.0));
  return {g, k, c, u};
}

ValueFunction tent(const GridTorus& g) {
  return ValueFunction::sample(g, [&](const Vec2& x) { return torus_distance(g, x, {0, 0}); });
}

}  // namespace

TEST(Schedule, Default) {
  auto s = default_schedule(4, 0.125);
  EXPECT_EQ(s.t_plus, (std::vector<double>{0.5, 0.25, 0.125, 0.125}));
  EXPECT_EQ(s.t_minus, (std::vector<double>{0.25, 0.125, 0.125, 0.125}));
  EXPECT_EQ(s.count(s.t_plus[0]), 4);
  EXPECT_EQ(s.count(0.01), 1);
  EXPECT_THROW(default_schedule(0, 0.1), DomainError);
  SmoothingSchedule bad{2, {0.1}, {0.1, 0.1}, 0.1};
  EXPECT_THROW(bad.validate(), DomainError);
  SmoothingSchedule neg{1, {-0.1}, {0.1}, 0.1};
  EXPECT_THROW(neg.validate(), DomainError);
}

TEST(Smooth, ConstantIsFixed) {
  auto g = build_grid(1, 64);
  // Translation-invariant kernels only: every row has the same minimum -c tau.
  for (const auto& f : {zero_field(), constant_field({1, 0})}) {
    auto k = build_kernel(mane_lagrangian(f), g);
    const double c = critical_value(k).c;
    auto u = ValueFunction::constant(g, 2.5);
    auto v = alternating_smooth(u, k, c, default_schedule(3, k.tau));
    for (double x : v.values) EXPECT_NEAR(x, 2.5, 1e-12) << f.label;
  }
}

TEST(Smooth, PendulumStaysCloseAndFixesAubry) {
  auto p = pendulum(128);
  const double tol = 1e-9;
  auto sched = default_schedule(3, p.k.tau);
  auto v = alternating_smooth(p.u.u, p.k, p.c, sched, {tol, {}});
  const double bound = schedule_drift_bound(sched, p.k, p.c);
  EXPECT_LE(sup_distance(v.values, p.u.u.values), bound + 1e-12);
  PeierlsBarrier h(p.k, p.c);
  auto a = aubry_set(h, kDefaultAubryEta, p.k);
  for (int x : a.indices) EXPECT_LE(std::abs(v.values[x] - p.u.u.values[x]), 2 * tol);
  EXPECT_LE(check_dominated(v, p.k, p.c).max_violation, tol);
}

TEST(Smooth, DominationCheckedEveryStep) {
  auto p = pendulum(64);
  int calls = 0;
  SmoothingOptions opt;
  opt.observer = [&](int, bool, const std::vector<double>& v) {
    ++calls;
    EXPECT_LE(check_dominated(v, p.k, p.c).max_violation, 1e-9);
  };
  auto sched = default_schedule(4, p.k.tau);
  alternating_smooth(p.u.u, p.k, p.c, sched, opt);
  int expected = 0;
  for (int n = 0; n < 4; ++n) expected += sched.count(sched.t_plus[n]) + sched.count(sched.t_minus[n]);
  EXPECT_EQ(calls, expected);
}

TEST(Smooth, StepDriftBound) {
  auto p = pendulum(64);
  const double b = step_drift_bound(p.k, p.c);
  EXPECT_GE(b, 0.0);
  // One shifted step moves any dominated function by at most B tau.
  auto zero = std::vector<double>(64, 0.0);
  for (const auto& u : {p.u.u.values, zero}) {
    EXPECT_LE(sup_distance(shifted_minus(p.k, u, p.c), u), b * p.k.tau + 1e-12);
    EXPECT_LE(sup_distance(shifted_plus(p.k, u, p.c), u), b * p.k.tau + 1e-12);
  }
}

TEST(Smooth, RejectsNonDominatedInput) {
  auto g = build_grid(1, 64);
  auto k = build_kernel(kinetic_lagrangian(), g);
  auto saw = ValueFunction::sample(g, [](const Vec2& x) { return 10 * x[0]; });
  try {
    alternating_smooth(saw, k, 0.0, default_schedule(2, k.tau));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("on edge"), std::string::npos);
  }
}

TEST(Smooth, SolutionOutputIsSubsolution) {
  auto p = pendulum(128);
  auto v = alternating_smooth(p.u.u, p.k, p.c, default_schedule(4, p.k.tau));
  EXPECT_LE(check_dominated(v, p.k, p.c).max_violation, 2e-9);
}

TEST(Smooth, RegularizesPendulumKink) {
  auto p = pendulum(128);
  const double before = semiconvexity_constant(p.u.u);
  auto v = alternating_smooth(p.u.u, p.k, p.c, default_schedule(4, p.k.tau));
  auto base = ValueFunction::sample(p.g, [](const Vec2& x) { return -std::cos(2 * std::numbers::pi * x[0]); });
  EXPECT_GT(before, 10 * semiconvexity_constant(base));
  EXPECT_LE(semiconvexity_constant(v), 2 * semiconvexity_constant(base));
  EXPECT_LE(semiconcavity_constant(v), 2 * semiconcavity_constant(base));
}

TEST(Smooth, TPlusSmoothsTentKink) {
  auto g = build_grid(1, 128);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  const double c = critical_value(k).c;
  std::vector<double> v = tent(g).values;
  const double before = semiconvexity_constant(ValueFunction(g, v));
  for (int r = 0; r < 4; ++r) v = shifted_plus(k, v, c);
  const double after = semiconvexity_constant(ValueFunction(g, v));
  EXPECT_LE(after, before / 10);
}

TEST(Constants, Examples) {
  auto g = build_grid(1, 64);
  EXPECT_EQ(semiconvexity_constant(ValueFunction::constant(g, 0.0)), 0.0);
  EXPECT_EQ(semiconcavity_constant(ValueFunction::constant(g, 0.0)), 0.0);
  // Tent: second difference 2h at the minimum (and -2h at the peak).
  auto t = tent(g);
  EXPECT_NEAR(semiconcavity_constant(t), 1.0 / g.spacing(), 1e-9);
  EXPECT_NEAR(semiconvexity_constant(t), 1.0 / g.spacing(), 1e-9);
  double prev = 0;
  for (int n : {32, 64, 128, 256}) {
    auto gn = build_grid(1, n);
    auto u = ValueFunction::sample(gn, [](const Vec2& x) { return -std::cos(2 * std::numbers::pi * x[0]); });
    const double k = semiconvexity_constant(u);
    const double h = gn.spacing();
    EXPECT_NEAR(k, (1 - std::cos(2 * std::numbers::pi * h)) / (h * h), 1e-9);
    EXPECT_GT(k, prev);
    prev = k;
  }
}

TEST(Constants, TwoDimensionalAxes) {
  auto g = build_grid(2, 32);
  auto u = ValueFunction::sample(g, [](const Vec2& x) { return std::cos(2 * std::numbers::pi * x[1]); });
  EXPECT_NEAR(semiconvexity_constant(u), 2 * std::numbers::pi * std::numbers::pi, 0.1);
}

TEST(Residual, ManeZeroFunction) {
  auto g = build_grid(1, 64);
  for (const auto& f : {zero_field(), sin_gradient_field(1), constant_field({1, 0})})
    EXPECT_EQ(subsolution_residual(ValueFunction::constant(g, 0.0), mane_lagrangian(f), 0.0), 0.0);
}

TEST(Residual, PendulumRefines) {
  double prev = kUnreachable;
  for (int n : {64, 128, 256}) {
    auto p = pendulum(n);
    auto v = alternating_smooth(p.u.u, p.k, p.c, default_schedule(4, p.k.tau));
    const double r = subsolution_residual(v, mechanical_lagrangian(cos_potential()), p.c);
    EXPECT_LE(r, 0.5);
    EXPECT_LE(r, prev + 1e-12);
    prev = r;
  }
}

TEST(Residual, SteepTentLarge) {
  auto g = build_grid(1, 64);
  auto u = ValueFunction::sample(g, [&](const Vec2& x) { return 10 * torus_distance(g, x, {0, 0}); });
  EXPECT_GT(subsolution_residual(u, mechanical_lagrangian(cos_potential()), 1.0), 40.0);
}
