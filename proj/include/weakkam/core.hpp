#pragma once

// Shared vocabulary: small fixed-size vectors for points on T^1/T^2, the error
// hierarchy used by every module, the unreachable sentinel and a row-parallel
// loop helper.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace weakkam {

/// Point or velocity in R^d with d <= 2. Unused components stay zero.
using Vec2 = std::array<double, 2>;

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

inline bool is_reachable(double v) { return v < kUnreachable; }

/// Min-plus product that saturates at the unreachable sentinel.
inline double sat_add(double a, double b) {
  if (!is_reachable(a) || !is_reachable(b)) return kUnreachable;
  return a + b;
}

inline double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm2(const Vec2& a) { return dot(a, a); }
inline double norm(const Vec2& a) { return std::sqrt(norm2(a)); }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2 operator*(double s, const Vec2& a) { return {s * a[0], s * a[1]}; }

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments to a library call (unsupported dimension, bad grid size...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-convergence, unreachable graph components, non-finite evaluations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Threading. Process-wide worker count; 1 runs inline.

inline unsigned& thread_count_ref() {
  static unsigned n = 1;
  return n;
}

inline void set_thread_count(unsigned n) { thread_count_ref() = std::max(1u, n); }
inline unsigned thread_count() { return thread_count_ref(); }

/// Calls body(i) for i in [0, n). Rows are split into contiguous blocks, one
/// per worker; body must only write state owned by row i.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace weakkam
