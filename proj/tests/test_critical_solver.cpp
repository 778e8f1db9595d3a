#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "weakkam/critical.hpp"

using namespace weakkam;

namespace {

// Minimum mean over all simple cycles, by DFS from each cycle's smallest node.
double brute_min_mean(const CostGraph& g) {
  const int n = g.nodes();
  double best = kUnreachable;
  std::vector<char> on(n, 0);
  std::function<void(int, int, double, int)> dfs = [&](int start, int at, double sum, int len) {
    auto t = g.out_targets(at);
    auto c = g.out_costs(at);
    for (std::size_t e = 0; e < t.size(); ++e) {
      const int y = t[e];
      if (y == start) best = std::min(best, (sum + c[e]) / (len + 1));
      else if (y > start && !on[y]) {
        on[y] = 1;
        dfs(start, y, sum + c[e], len + 1);
        on[y] = 0;
      }
    }
  };
  for (int s = 0; s < n; ++s) {
    on[s] = 1;
    dfs(s, s, 0.0, 0);
    on[s] = 0;
  }
  return best;
}

ActionKernel random_kernel(std::mt19937_64& rng, int n, double density, double tau) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> w(-20, 20), pick(0, n - 1);
  std::vector<double> m(n * n, kUnreachable);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (u(rng) < density) m[i * n + j] = w(rng);
    bool any = false;
    for (int j = 0; j < n; ++j) any = any || is_reachable(m[i * n + j]);
    if (!any) m[i * n + pick(rng)] = w(rng);
  }
  return ActionKernel::from_dense(n, m, tau);
}

}  // namespace

TEST(CriticalValue, TwoPointToy) {
  auto k = ActionKernel::from_dense(2, std::vector<double>{4, 1, 2, 3});
  auto cv = critical_value(k);
  EXPECT_EQ(cv.c, -1.5);
  EXPECT_EQ(cv.mean_cycle_weight, 1.5);
  ASSERT_EQ(cv.witness_cycle.size(), 2u);
  std::vector<int> w = cv.witness_cycle;
  std::sort(w.begin(), w.end());
  EXPECT_EQ(w, (std::vector<int>{0, 1}));
}

TEST(CriticalValue, MatchesExhaustiveCycles) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 10;
    const double tau = trial % 3 == 0 ? 0.25 : 1.0;
    auto k = random_kernel(rng, n, 0.35, tau);
    const double mean = brute_min_mean(k.graph);
    auto cv = critical_value(k);
    EXPECT_EQ(cv.mean_cycle_weight, mean) << "trial " << trial;
    EXPECT_EQ(cv.c, -mean / tau);
    // The witness is a closed walk through distinct nodes with that mean.
    std::vector<int> w = cv.witness_cycle;
    ASSERT_FALSE(w.empty());
    double sum = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double c = k.cost(w[i], w[(i + 1) % w.size()]);
      ASSERT_TRUE(is_reachable(c));
      sum += c;
    }
    EXPECT_EQ(sum / w.size(), mean);
    std::sort(w.begin(), w.end());
    EXPECT_EQ(std::adjacent_find(w.begin(), w.end()), w.end());
  }
}

TEST(CriticalValue, ShiftInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto k = random_kernel(rng, 8, 0.4, 0.5);
    auto shifted = k;
    shifted.graph = k.graph.shifted(1.25);
    EXPECT_NEAR(critical_value(shifted).c, critical_value(k).c - 1.25 / 0.5, 1e-12);
  }
}

TEST(CriticalValue, StrandedRowsReported) {
  const double inf = kUnreachable;
  auto k = ActionKernel::from_dense(3, std::vector<double>{0, 1, inf, inf, inf, inf, 1, 1, 1});
  try {
    critical_value(k);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("stranded indices 1"), std::string::npos) << e.what();
  }
}

TEST(CriticalValue, ManeKernelsAreZero) {
  for (auto field : {zero_field(), constant_field({1, 0}), sin_gradient_field(1)}) {
    auto g = build_grid(1, 64);
    auto k = build_kernel(mane_lagrangian(field), g);
    EXPECT_LE(std::abs(critical_value(k).c), 5 * g.spacing()) << field.label;
  }
}

TEST(CriticalValue, PendulumSmallGridAgainstClosedWalks) {
  auto g = build_grid(1, 16);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  auto cv = critical_value(k);
  // Closed walks of length <= n: min over k and x of (cost^k)(x,x) / k.
  double best = kUnreachable;
  for (int len = 1; len <= 16; ++len) {
    auto m = minplus_power_min(k, 0.0, len, len);
    for (int x = 0; x < 16; ++x) best = std::min(best, m.at(x, x) / len);
  }
  EXPECT_NEAR(cv.mean_cycle_weight, best, 1e-15);
  EXPECT_NEAR(cv.c, 1.0, 1e-12);
}

TEST(LaxOleinik, ConstantInput) {
  auto g = build_grid(1, 32);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  std::vector<double> u(32, 3.0);
  auto out = lax_oleinik_minus(k, u);
  for (int x = 0; x < 32; ++x) {
    double best = kUnreachable;
    for (int y = 0; y < 32; ++y) best = std::min(best, k.cost(y, x));
    EXPECT_DOUBLE_EQ(out[x], 3.0 + best);
  }
}

TEST(LaxOleinik, IdentityAndZero) {
  const double inf = kUnreachable;
  auto id = ActionKernel::from_dense(2, std::vector<double>{0, inf, inf, 0});
  std::vector<double> u{4, -1};
  EXPECT_EQ(lax_oleinik_plus(id, u), u);
  auto g = build_grid(1, 16);
  auto k = build_kernel(kinetic_lagrangian(), g);
  std::vector<double> z(16, 0.0);
  EXPECT_EQ(lax_oleinik_plus(k, z), z);
}

TEST(LaxOleinik, DualityOnSymmetricKernel) {
  auto g = build_grid(1, 32);
  auto k = build_kernel(kinetic_lagrangian(), g);
  std::vector<double> u(32), neg(32);
  for (int i = 0; i < 32; ++i) {
    u[i] = std::cos(0.9 * i) + 0.01 * i;
    neg[i] = -u[i];
  }
  auto plus = lax_oleinik_plus(k, neg);
  auto minus = lax_oleinik_minus(k, u);
  for (int i = 0; i < 32; ++i) EXPECT_EQ(plus[i], -minus[i]);
}

TEST(LaxOleinik, Monotone) {
  auto g = build_grid(1, 32);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  std::vector<double> u(32), w(32);
  for (int i = 0; i < 32; ++i) {
    u[i] = std::sin(i);
    w[i] = u[i] + 0.1 * (i % 3);
  }
  auto a = lax_oleinik_minus(k, u), b = lax_oleinik_minus(k, w);
  auto ap = lax_oleinik_plus(k, u), bp = lax_oleinik_plus(k, w);
  for (int i = 0; i < 32; ++i) {
    EXPECT_LE(a[i], b[i]);
    EXPECT_LE(ap[i], bp[i]);
  }
}

TEST(WeakKam, KineticZeroIsImmediate) {
  auto g = build_grid(1, 64);
  auto k = build_kernel(kinetic_lagrangian(), g);
  auto s = weak_kam_solution(k, 0.0, ValueFunction::constant(g, 0.0));
  EXPECT_EQ(s.iterations, 1);
  EXPECT_EQ(s.residual, 0.0);
  for (double v : s.u.values) EXPECT_EQ(v, 0.0);
}

TEST(WeakKam, PendulumFixedPointAndDomination) {
  auto g = build_grid(1, 256);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  const double c = critical_value(k).c;
  auto s = weak_kam_solution(k, c, ValueFunction::constant(g, 0.0));
  EXPECT_LE(s.residual, 1e-9);
  EXPECT_EQ(s.u.values[0], 0.0);
  EXPECT_GT(*std::max_element(s.u.values.begin(), s.u.values.end()), 0.5);
  EXPECT_LE(sup_distance(shifted_minus(k, s.u.values, c), s.u.values), 1e-9);
  EXPECT_LE(check_dominated(s.u, k, c).max_violation, 1e-9);
}

TEST(WeakKam, NoiseGivesSameSolutionUpToConstant) {
  auto g = build_grid(1, 128);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  const double c = critical_value(k).c;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> noise(128);
  for (double& v : noise) v = d(rng);
  auto a = weak_kam_solution(k, c, ValueFunction::constant(g, 0.0));
  auto b = weak_kam_solution(k, c, ValueFunction(g, noise));
  double lo = kUnreachable, hi = -kUnreachable;
  for (int i = 0; i < 128; ++i) {
    lo = std::min(lo, a.u.values[i] - b.u.values[i]);
    hi = std::max(hi, a.u.values[i] - b.u.values[i]);
  }
  EXPECT_LE(hi - lo, 1e-8);
}

TEST(WeakKam, PeriodicCyclingIsDamped) {
  // Zero-cost rotation 0->1->2->3->0: plain iteration rotates the bump forever.
  const double inf = kUnreachable;
  std::vector<double> m(16, inf);
  for (int i = 0; i < 4; ++i) m[i * 4 + (i + 1) % 4] = 0.0;
  auto k = ActionKernel::from_dense(4, m);
  EXPECT_EQ(critical_value(k).c, 0.0);
  auto g = build_grid(1, 4);
  auto s = weak_kam_solution(k, 0.0, ValueFunction(g, {1, 0, 0, 0}));
  EXPECT_EQ(s.residual, 0.0);
  for (double v : s.u.values) EXPECT_EQ(v, 0.0);
}

TEST(WeakKam, ConvergenceFailureCarriesResidual) {
  auto g = build_grid(1, 64);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  std::vector<double> tent(64);
  for (int i = 0; i < 64; ++i) tent[i] = 5.0 * grid_distance(g, 0, i);
  try {
    weak_kam_solution(k, 1.0, ValueFunction(g, tent), {1e-9, 2});
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.best_residual(), 1e-9);
  }
  EXPECT_THROW(weak_kam_solution(k, 1.0, ValueFunction::constant(build_grid(1, 32), 0.0)), DomainError);
}

TEST(Domination, ZeroOnManeKernel) {
  auto g = build_grid(1, 64);
  auto k = build_kernel(mane_lagrangian(sin_gradient_field(1)), g);
  EXPECT_LE(check_dominated(ValueFunction::constant(g, 0.0), k, 0.0).max_violation, 0.0);
}

TEST(Domination, SawtoothViolatesAtWrap) {
  auto g = build_grid(1, 32);
  auto k = build_kernel(kinetic_lagrangian(), g);
  auto u = ValueFunction::sample(g, [](const Vec2& x) { return 10.0 * x[0]; });
  auto r = check_dominated(u, k, 0.0);
  EXPECT_GT(r.max_violation, 0.0);
  // The worst edge crosses the jump from 10*(1-h) down to 0, taken backwards.
  EXPECT_GT(g.coords(r.to)[0], 0.5);
  EXPECT_LT(g.coords(r.from)[0], 0.5);
}

TEST(Domination, ShiftedOperatorsPreserveIt) {
  auto g = build_grid(1, 64);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  const double c = critical_value(k).c;
  std::vector<double> u(64, 0.0);
  ASSERT_LE(check_dominated(u, k, c).max_violation, 0.0);
  auto v = u;
  for (int r = 0; r < 5; ++r) {
    v = shifted_minus(k, v, c);
    EXPECT_LE(check_dominated(v, k, c).max_violation, 1e-12);
  }
  auto w = u;
  for (int r = 0; r < 5; ++r) {
    w = shifted_plus(k, w, c);
    EXPECT_LE(check_dominated(w, k, c).max_violation, 1e-12);
  }
}

TEST(Domination, LipschitzOnAdjacentCells) {
  auto g = build_grid(1, 128);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  const double c = critical_value(k).c;
  auto s = weak_kam_solution(k, c, ValueFunction::constant(g, 0.0));
  // u(y) - u(x) <= A(x,y) + c tau on every edge, both directions.
  for (int x = 0; x < 128; ++x) {
    const int y = g.shift(x, 1);
    const double bound = std::max(k.cost(x, y), k.cost(y, x)) + c * k.tau;
    EXPECT_LE(std::abs(s.u.values[y] - s.u.values[x]), bound + 1e-9);
  }
}
