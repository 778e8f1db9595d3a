#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <span>

#include "weakkam/kernel.hpp"
#include "weakkam/kernel_io.hpp"

using namespace weakkam;

TEST(GridTorus, OneDimensionalPoints) {
  auto g = build_grid(1, 8);
  EXPECT_EQ(g.point_count(), 8);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.125);
  for (int k = 0; k < 8; ++k) {
    EXPECT_DOUBLE_EQ(g.coords(k)[0], k / 8.0);
    EXPECT_EQ(g.coords(k)[1], 0.0);
  }
}

TEST(GridTorus, TwoDimensionalCount) {
  auto g = build_grid(2, 16);
  EXPECT_EQ(g.point_count(), 256);
  EXPECT_EQ(g.index(3, 5), 3 + 16 * 5);
  auto m = g.multi_index(g.index(3, 5));
  EXPECT_EQ(m[0], 3);
  EXPECT_EQ(m[1], 5);
}

TEST(GridTorus, RejectsUnsupportedDimension) {
  EXPECT_THROW(build_grid(3, 8), DomainError);
  EXPECT_THROW(build_grid(0, 8), DomainError);
  EXPECT_THROW(build_grid(1, 2), DomainError);
  try {
    build_grid(3, 8);
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported_dim"), std::string::npos);
  }
}

TEST(GridTorus, ShiftWraps) {
  auto g = build_grid(2, 8);
  EXPECT_EQ(g.shift(g.index(7, 0), 1, 0), g.index(0, 0));
  EXPECT_EQ(g.shift(g.index(0, 0), 0, -1), g.index(0, 7));
  EXPECT_EQ(g.shift(g.index(2, 3), 17, -9), g.index(3, 2));
}

TEST(GridTorus, NearestSnapsAndWraps) {
  auto g = build_grid(1, 8);
  EXPECT_EQ(g.nearest({0.99, 0.0}), 0);
  EXPECT_EQ(g.nearest({0.26, 0.0}), 2);
  EXPECT_EQ(g.nearest({-0.124, 0.0}), 7);
}

TEST(WrapDisplacement, Examples) {
  auto g = build_grid(1, 8);
  EXPECT_NEAR(wrap_displacement(g, {0.9, 0}, {0.1, 0})[0], 0.2, 1e-15);
  EXPECT_EQ(wrap_displacement(g, {0.3, 0}, {0.3, 0})[0], 0.0);
  EXPECT_DOUBLE_EQ(wrap_displacement(g, {0.1, 0}, {0.6, 0})[0], -0.5);
  EXPECT_DOUBLE_EQ(wrap_displacement(g, {0.6, 0}, {0.1, 0})[0], -0.5);
}

TEST(WrapDisplacement, ComponentsInHalfOpenRange) {
  auto g = build_grid(2, 8);
  for (double a = -1.3; a < 1.3; a += 0.07) {
    for (double b = -0.9; b < 1.7; b += 0.11) {
      auto d = wrap_displacement(g, {a, b}, {b, a});
      for (double c : d) {
        EXPECT_GE(c, -0.5);
        EXPECT_LT(c, 0.5);
      }
    }
  }
}

TEST(GridDistance, MatchesTorusDistance) {
  auto g = build_grid(2, 16);
  for (int a = 0; a < g.point_count(); a += 7)
    for (int b = 0; b < g.point_count(); b += 5)
      EXPECT_NEAR(grid_distance(g, a, b), torus_distance(g, g.coords(a), g.coords(b)), 1e-14);
}

TEST(GridDistance, CellDisplacementTieGoesNegative) {
  auto g = build_grid(1, 8);
  EXPECT_EQ(g.cell_displacement(0, 4)[0], -4);
  EXPECT_EQ(g.wrap_cells(4), -4);
  EXPECT_EQ(g.wrap_cells(-3), -3);
  EXPECT_EQ(g.wrap_cells(11), 3);
}

TEST(Kernel, KineticOneCellCost) {
  auto g = build_grid(1, 8);
  auto k = build_kernel(kinetic_lagrangian(), g, 0.125, 0.25);
  for (int x = 0; x < 8; ++x) {
    EXPECT_DOUBLE_EQ(k.cost(x, x), 0.0);
    EXPECT_DOUBLE_EQ(k.cost(x, g.shift(x, 1)), 0.0625);
    EXPECT_DOUBLE_EQ(k.cost(x, g.shift(x, -1)), 0.0625);
    EXPECT_DOUBLE_EQ(k.cost(x, g.shift(x, 2)), 0.25);
    EXPECT_FALSE(is_reachable(k.cost(x, g.shift(x, 3))));
  }
}

TEST(Kernel, MechanicalSelfLoop) {
  auto g = build_grid(1, 32);
  const double tau = 3.0 / 32;
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g, tau, 4.0 / 32);
  EXPECT_NEAR(k.cost(0, 0), -tau, 1e-15);
}

TEST(Kernel, RowsHaveNeighbours) {
  auto g = build_grid(1, 16);
  auto k = build_kernel(kinetic_lagrangian(), g, g.spacing(), 2 * g.spacing());
  for (int x = 0; x < g.point_count(); ++x) {
    EXPECT_GE(k.graph.out_targets(x).size(), 3u);
    for (int y : k.graph.out_targets(x)) EXPECT_LE(grid_distance(g, x, y), 2 * g.spacing() + 1e-15);
  }
}

TEST(Kernel, RadiusOfOneCell) {
  auto g = build_grid(2, 8);
  EXPECT_THROW(build_kernel(kinetic_lagrangian(), g, 0.125, 0.01), DomainError);
  auto k = build_kernel(kinetic_lagrangian(), g, 0.125, 0.125);
  for (int x = 0; x < g.point_count(); ++x) {
    ASSERT_EQ(k.graph.out_targets(x).size(), 5u);
    EXPECT_EQ(k.cost(x, x), 0.0);
  }
}

TEST(Kernel, SymmetricForEvenHomogeneousLagrangian) {
  auto g = build_grid(2, 12);
  auto k = build_kernel(kinetic_lagrangian(), g);
  for (int x = 0; x < g.point_count(); ++x)
    for (int y : k.graph.out_targets(x)) EXPECT_EQ(k.cost(x, y), k.cost(y, x));
}

TEST(Kernel, DefaultsScaleWithGrid) {
  for (int n : {16, 32, 64, 128, 256}) {
    auto g = build_grid(1, n);
    const double tau = default_tau(g);
    const int cells = static_cast<int>(std::lround(tau * n));
    EXPECT_EQ(cells % 2, 1) << n;
    EXPECT_NEAR(tau, 1.0 / 16, 1.0 / 16);
    EXPECT_GE(default_stencil_radius(g, tau), 4 * g.spacing());
  }
}

TEST(Kernel, BadArgumentsRejected) {
  auto g = build_grid(1, 8);
  EXPECT_THROW(build_kernel(kinetic_lagrangian(), g, 0.0, 0.25), DomainError);
  EXPECT_THROW(build_kernel(kinetic_lagrangian(), g, 0.1, -1.0), DomainError);
  Lagrangian bad{[](const Vec2&, const Vec2& v) { return v[0] > 0.1 ? NAN : 0.0; }, std::nullopt, "bad"};
  EXPECT_THROW(build_kernel(bad, g, 0.125, 0.25), NumericalError);
}

namespace {
ActionKernel toy(std::initializer_list<double> m) {
  std::vector<double> v(m);
  const int n = static_cast<int>(std::lround(std::sqrt(v.size())));
  return ActionKernel::from_dense(n, v);
}
}  // namespace

TEST(MinPlus, TwoPointToyApply) {
  auto k = toy({0, 5, 1, 3});
  auto out = minplus_apply(k, std::vector<double>{0, 0});
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 3.0);
}

TEST(MinPlus, IdentityKernel) {
  const double inf = kUnreachable;
  auto k = toy({0, inf, inf, inf, 0, inf, inf, inf, 0});
  std::vector<double> u{1.5, -2, 7};
  EXPECT_EQ(minplus_apply(k, u), u);
  EXPECT_EQ(maxminus_apply(k, u), u);
}

TEST(MinPlus, ZeroOnKineticKernel) {
  auto g = build_grid(1, 32);
  auto k = build_kernel(kinetic_lagrangian(), g);
  std::vector<double> z(32, 0.0);
  EXPECT_EQ(minplus_apply(k, z), z);
  EXPECT_EQ(maxminus_apply(k, z), z);
}

TEST(MinPlus, MonotoneAndConstantCommuting) {
  auto g = build_grid(1, 64);
  auto k = build_kernel(mechanical_lagrangian(cos_potential()), g);
  std::vector<double> u(64), w(64), ua(64);
  for (int i = 0; i < 64; ++i) {
    u[i] = std::sin(0.37 * i * i);
    w[i] = u[i] + std::abs(std::cos(1.3 * i));
    ua[i] = u[i] + 2.75;
  }
  auto au = minplus_apply(k, u), aw = minplus_apply(k, w), aua = minplus_apply(k, ua);
  for (int i = 0; i < 64; ++i) {
    EXPECT_LE(au[i], aw[i]);
    EXPECT_NEAR(aua[i], au[i] + 2.75, 1e-13);
  }
}

TEST(MinPlus, PowerMinSingleStepIsCost) {
  auto k = toy({0, 5, 1, 3});
  auto m = minplus_power_min(k, 0.0, 1, 1);
  EXPECT_EQ(m.at(0, 0), 0.0);
  EXPECT_EQ(m.at(0, 1), 5.0);
  EXPECT_EQ(m.at(1, 0), 1.0);
  EXPECT_EQ(m.at(1, 1), 3.0);
}

namespace {
// Min over all walks with between lo and hi edges, by explicit enumeration.
double brute_walk(const ActionKernel& k, int from, int to, int lo, int hi) {
  double best = kUnreachable;
  std::function<void(int, int, double)> go = [&](int at, int len, double acc) {
    if (len >= lo && at == to) best = std::min(best, acc);
    if (len == hi) return;
    for (int y = 0; y < k.point_count(); ++y) {
      const double c = k.cost(at, y);
      if (is_reachable(c)) go(y, len + 1, acc + c);
    }
  };
  go(from, 0, 0.0);
  return best;
}
}  // namespace

TEST(MinPlus, PowerMinMatchesPathEnumeration) {
  auto k = toy({0, 5, 1, 3});
  auto m = minplus_power_min(k, 0.0, 1, 4);
  EXPECT_EQ(m.at(0, 1), 5.0);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) EXPECT_EQ(m.at(x, y), brute_walk(k, x, y, 1, 4));

  const double inf = kUnreachable;
  auto k3 = toy({inf, 2, 7, inf, 1, 1, 4, inf, 3});
  auto m3 = minplus_power_min(k3, 0.5, 2, 5);
  auto shifted = ActionKernel::from_dense(3, std::vector<double>{inf, 2.5, 7.5, inf, 1.5, 1.5, 4.5, inf, 3.5});
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) EXPECT_DOUBLE_EQ(m3.at(x, y), brute_walk(shifted, x, y, 2, 5));
}

TEST(MinPlus, KleeneClosureSatisfiesTriangle) {
  auto g = build_grid(1, 24);
  auto k = build_kernel(kinetic_lagrangian(), g);
  auto m = minplus_kleene_plus(k, 0.0);
  EXPECT_EQ(m.unreachable_count(), 0u);
  EXPECT_LE(m.triangle_violation(), 1e-12);
}

TEST(MinPlus, PowerMinRejectsBadRange) {
  auto k = toy({0, 5, 1, 3});
  EXPECT_THROW(minplus_power_min(k, 0.0, 0, 3), DomainError);
  EXPECT_THROW(minplus_power_min(k, 0.0, 3, 2), DomainError);
}

TEST(KernelIo, RoundTripIsExact) {
  auto g = build_grid(2, 8);
  auto k = build_kernel(mechanical_lagrangian(cos_potential(1.0, 1, 0)), g);
  auto dir = std::filesystem::temp_directory_path() / "weakkam_kernel_io";
  std::filesystem::create_directories(dir);
  save_kernel(k, (dir / "k.csv").string(), (dir / "k.json").string());
  auto r = load_kernel((dir / "k.csv").string(), (dir / "k.json").string());
  ASSERT_TRUE(r.grid.has_value());
  EXPECT_EQ(*r.grid, g);
  EXPECT_EQ(r.tau, k.tau);
  auto a = k.graph.edges(), b = r.graph.edges();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t e = 0; e < a.size(); ++e) {
    EXPECT_EQ(a[e].from, b[e].from);
    EXPECT_EQ(a[e].to, b[e].to);
    EXPECT_EQ(a[e].cost, b[e].cost);
  }
  std::filesystem::remove_all(dir);
}

TEST(KernelIo, MissingFileIsIoError) {
  EXPECT_THROW(load_kernel("/nonexistent/k.csv", "/nonexistent/k.json"), IoError);
}
