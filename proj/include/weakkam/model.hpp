#pragma once

// Lagrangians, Hamiltonians and vector fields on the flat torus T^d (d <= 2),
// the Mañé and mechanical constructions, a sampled Legendre transform and a
// sampled Tonelli sanity check.

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "weakkam/core.hpp"
#include "weakkam/torus.hpp"

namespace weakkam {

using PointFn = std::function<double(const Vec2&)>;
using PhaseFn = std::function<double(const Vec2&, const Vec2&)>;
using FieldFn = std::function<Vec2(const Vec2&)>;

/// L(x, v). Evaluation must be a pure function of its arguments.
struct Lagrangian {
  PhaseFn eval;
  /// H(x, p) in closed form, when the construction provides one.
  std::optional<PhaseFn> analytic_hamiltonian;
  std::string label;

  double operator()(const Vec2& x, const Vec2& v) const { return eval(x, v); }
};

struct VectorField {
  FieldFn eval;
  std::string label;

  Vec2 operator()(const Vec2& x) const { return eval(x); }
};

/// Scalar potential with an optional closed-form gradient.
struct Potential {
  PointFn eval;
  std::optional<FieldFn> gradient;
  std::string label;

  double operator()(const Vec2& x) const { return eval(x); }
};

/// Numerical Fenchel dual of a Lagrangian: H(x,p) = max_v p.v - L(x,v) over a
/// uniform velocity box.
struct HamiltonianProbe {
  Lagrangian source;
  int dim = 1;
  double v_search_radius = 4.0;
  int v_search_samples = 129;

  void validate() const {
    if (dim != 1 && dim != 2) throw DomainError("HamiltonianProbe: dim must be 1 or 2");
    if (v_search_samples < 3) throw DomainError("HamiltonianProbe: v_search_samples must be >= 3");
    if (!(v_search_radius > 0.0)) throw DomainError("HamiltonianProbe: v_search_radius must be > 0");
  }
};

namespace detail {

inline std::string describe(const Vec2& a, int dim) {
  std::ostringstream os;
  os.precision(12);
  os << '(' << a[0];
  if (dim == 2) os << ", " << a[1];
  os << ')';
  return os.str();
}

}  // namespace detail

inline double legendre_hamiltonian(const HamiltonianProbe& probe, const Vec2& x, const Vec2& p) {
  probe.validate();
  const int m = probe.v_search_samples;
  const double r = probe.v_search_radius;
  const double dv = 2.0 * r / (m - 1);
  double best = -kUnreachable;
  const int m2 = probe.dim == 2 ? m : 1;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m2; ++j) {
      Vec2 v{-r + i * dv, probe.dim == 2 ? -r + j * dv : 0.0};
      const double l = probe.source(x, v);
      if (!std::isfinite(l)) {
        throw NumericalError("non-finite Lagrangian value at x=" + detail::describe(x, probe.dim) +
                             ", v=" + detail::describe(v, probe.dim));
      }
      best = std::max(best, dot(p, v) - l);
    }
  }
  return best;
}

inline Lagrangian kinetic_lagrangian() {
  Lagrangian l;
  l.eval = [](const Vec2&, const Vec2& v) { return 0.5 * norm2(v); };
  l.analytic_hamiltonian = PhaseFn([](const Vec2&, const Vec2& p) { return 0.5 * norm2(p); });
  l.label = "kinetic";
  return l;
}

/// L_X(x,v) = 1/2 |v - X(x)|^2, whose Hamiltonian is 1/2 |p|^2 + p.X(x).
inline Lagrangian mane_lagrangian(const VectorField& field) {
  Lagrangian l;
  l.eval = [field](const Vec2& x, const Vec2& v) { return 0.5 * norm2(v - field(x)); };
  l.analytic_hamiltonian =
      PhaseFn([field](const Vec2& x, const Vec2& p) { return 0.5 * norm2(p) + dot(p, field(x)); });
  l.label = "mane[" + field.label + "]";
  return l;
}

/// L(x,v) = 1/2 |v|^2 - V(x).
inline Lagrangian mechanical_lagrangian(const Potential& potential) {
  Lagrangian l;
  l.eval = [potential](const Vec2& x, const Vec2& v) { return 0.5 * norm2(v) - potential(x); };
  l.analytic_hamiltonian =
      PhaseFn([potential](const Vec2& x, const Vec2& p) { return 0.5 * norm2(p) + potential(x); });
  l.label = "mechanical[" + potential.label + "]";
  return l;
}

/// -L(x, 0): the energy of the rest point at x.
inline double tilde_h(const Lagrangian& l, const Vec2& x) { return -l(x, Vec2{0.0, 0.0}); }

/// H(x,p) using the closed form when present, the probe otherwise.
inline double hamiltonian(const Lagrangian& l, int dim, const Vec2& x, const Vec2& p) {
  if (l.analytic_hamiltonian) return (*l.analytic_hamiltonian)(x, p);
  HamiltonianProbe probe{l, dim};
  return legendre_hamiltonian(probe, x, p);
}

// ---------------------------------------------------------------------------
// Named potentials and vector fields.

/// V(x) = amplitude * cos(2 pi k x_axis).
inline Potential cos_potential(double amplitude = 1.0, int k = 1, int axis = 0) {
  if (axis != 0 && axis != 1) throw DomainError("cos_potential: axis must be 0 or 1");
  const double w = 2.0 * std::numbers::pi * k;
  Potential v;
  v.eval = [=](const Vec2& x) { return amplitude * std::cos(w * x[axis]); };
  v.gradient = FieldFn([=](const Vec2& x) {
    Vec2 g{0.0, 0.0};
    g[axis] = -amplitude * w * std::sin(w * x[axis]);
    return g;
  });
  std::ostringstream os;
  os << "cos(A=" << amplitude << ",k=" << k << ",axis=" << axis << ")";
  v.label = os.str();
  return v;
}

inline VectorField zero_field() {
  return {[](const Vec2&) { return Vec2{0.0, 0.0}; }, "zero"};
}

inline VectorField constant_field(const Vec2& c) {
  std::ostringstream os;
  os << "constant(" << c[0] << "," << c[1] << ")";
  return {[c](const Vec2&) { return c; }, os.str()};
}

/// X_i(x) = sin(2 pi k x_i) on each of the first `dim` axes.
inline VectorField sin_gradient_field(int dim, int k = 1) {
  const double w = 2.0 * std::numbers::pi * k;
  std::ostringstream os;
  os << "sin_gradient(k=" << k << ")";
  return {[=](const Vec2& x) {
            return Vec2{std::sin(w * x[0]), dim == 2 ? std::sin(w * x[1]) : 0.0};
          },
          os.str()};
}

/// X = -grad V; requires the potential's closed-form gradient.
inline VectorField neg_grad_field(const Potential& potential) {
  if (!potential.gradient) throw DomainError("neg_grad: potential " + potential.label + " has no gradient");
  auto g = *potential.gradient;
  return {[g](const Vec2& x) { return -1.0 * g(x); }, "neg_grad[" + potential.label + "]"};
}

/// Field sampled on an n^dim grid, evaluated by periodic multilinear
/// interpolation. Row-major: index = i0 + n * i1.
inline VectorField table_field(int dim, int n, std::vector<Vec2> samples, std::string label = "table") {
  const std::size_t expected = dim == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
  if (samples.size() != expected) throw DomainError("table_field: sample count does not match n^dim");
  auto data = std::make_shared<std::vector<Vec2>>(std::move(samples));
  return {[=](const Vec2& x) {
            auto locate = [n](double c, int& i0, int& i1, double& t) {
              double s = c * n;
              double f = std::floor(s);
              t = s - f;
              i0 = static_cast<int>(f) % n;
              if (i0 < 0) i0 += n;
              i1 = (i0 + 1) % n;
            };
            int a0, a1, b0 = 0, b1 = 0;
            double ta, tb = 0.0;
            locate(x[0], a0, a1, ta);
            if (dim == 1) return (1.0 - ta) * (*data)[a0] + ta * (*data)[a1];
            locate(x[1], b0, b1, tb);
            auto at = [&](int i, int j) { return (*data)[i + n * j]; };
            return (1.0 - tb) * ((1.0 - ta) * at(a0, b0) + ta * at(a1, b0)) +
                   tb * ((1.0 - ta) * at(a0, b1) + ta * at(a1, b1));
          },
          std::move(label)};
}

/// Reads "i[,j],X1[,X2]" rows; a non-numeric first line is treated as a header.
inline VectorField load_table_field(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vector field table " + path);
  std::vector<std::pair<std::array<int, 2>, Vec2>> rows;
  std::string line;
  int line_no = 0;
  int max_index = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> cells;
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (line_no == 1) continue;
      throw IoError(path + ":" + std::to_string(line_no) + ": non-numeric cell");
    }
    if (cells.size() != static_cast<std::size_t>(2 * dim)) {
      throw IoError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(2 * dim) + " columns");
    }
    std::array<int, 2> idx{static_cast<int>(cells[0]), dim == 2 ? static_cast<int>(cells[1]) : 0};
    Vec2 v{cells[dim], dim == 2 ? cells[dim + 1] : 0.0};
    max_index = std::max({max_index, idx[0], idx[1]});
    rows.emplace_back(idx, v);
  }
  const int n = max_index + 1;
  const std::size_t count = dim == 1 ? n : static_cast<std::size_t>(n) * n;
  if (n < 1 || rows.size() != count) throw IoError(path + ": table must cover the full n^dim grid");
  std::vector<Vec2> samples(count, Vec2{0.0, 0.0});
  std::vector<bool> seen(count, false);
  for (const auto& [idx, v] : rows) {
    if (idx[0] < 0 || idx[1] < 0) throw IoError(path + ": negative grid index");
    std::size_t k = idx[0] + static_cast<std::size_t>(n) * idx[1];
    if (seen[k]) throw IoError(path + ": duplicate grid index");
    seen[k] = true;
    samples[k] = v;
  }
  return table_field(dim, n, std::move(samples), "table[" + path + "]");
}

// ---------------------------------------------------------------------------
// Sampled Tonelli conditions. Nothing here certifies convexity; it only
// surfaces violations on a finite stencil.

struct TonelliReport {
  /// min over (x, v, axis) of L(x,v+e) + L(x,v-e) - 2 L(x,v), |e| = dv.
  double min_second_difference = kUnreachable;
  double velocity_step = 0.0;
  /// min over sampled x and directions of L(x,v) - K|v| at |v| = v_radius.
  double superlinear_margin_k1 = kUnreachable;
  double superlinear_margin_k2 = kUnreachable;
  /// max over sampled x and directions of |L(x,v)| at |v| = v_radius.
  double max_abs_at_radius = 0.0;
  bool convexity_violation = false;
};

inline TonelliReport check_tonelli(const Lagrangian& l, const GridTorus& grid, double v_radius) {
  if (!(v_radius > 0.0)) throw DomainError("check_tonelli: v_radius must be > 0");
  TonelliReport r;
  constexpr int kVelocitySteps = 8;
  const double dv = v_radius / kVelocitySteps;
  r.velocity_step = dv;

  // At most 64 sample points, spread evenly over the grid.
  const int stride = std::max(1, grid.point_count() / 64);
  const int vy_steps = grid.dim() == 2 ? kVelocitySteps : 0;
  std::vector<Vec2> directions;
  const int n_dir = grid.dim() == 2 ? 16 : 2;
  for (int k = 0; k < n_dir; ++k) {
    if (grid.dim() == 1) {
      directions.push_back({k == 0 ? 1.0 : -1.0, 0.0});
    } else {
      const double a = 2.0 * std::numbers::pi * k / n_dir;
      directions.push_back({std::cos(a), std::sin(a)});
    }
  }
  double scale = 0.0;
  for (int idx = 0; idx < grid.point_count(); idx += stride) {
    const Vec2 x = grid.coords(idx);
    for (int i = -kVelocitySteps; i <= kVelocitySteps; ++i) {
      for (int j = -vy_steps; j <= vy_steps; ++j) {
        const Vec2 v{i * dv, j * dv};
        const double center = l(x, v);
        scale = std::max(scale, std::abs(center));
        for (int axis = 0; axis < grid.dim(); ++axis) {
          Vec2 e{0.0, 0.0};
          e[axis] = dv;
          const double second = l(x, v + e) + l(x, v - e) - 2.0 * center;
          r.min_second_difference = std::min(r.min_second_difference, second);
        }
      }
    }
    for (const auto& dir : directions) {
      const Vec2 v = v_radius * dir;
      const double value = l(x, v);
      r.superlinear_margin_k1 = std::min(r.superlinear_margin_k1, value - 1.0 * v_radius);
      r.superlinear_margin_k2 = std::min(r.superlinear_margin_k2, value - 2.0 * v_radius);
      r.max_abs_at_radius = std::max(r.max_abs_at_radius, std::abs(value));
    }
  }
  // Strict convexity: a second difference that is zero up to rounding means L
  // is affine along some segment.
  r.convexity_violation = r.min_second_difference <= 1e-12 * std::max(1.0, scale);
  return r;
}

}  // namespace weakkam
