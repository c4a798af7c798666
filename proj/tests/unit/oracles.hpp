#pragma once

// Test-side oracles and generators. Nothing here calls into the library's
// numeric helpers, so a bug there cannot hide behind a matching bug here.

#include <cmath>
#include <functional>
#include <random>

#include "core/linalg.hpp"

namespace oracle {

using siamlab::Matrix;
using siamlab::Vector;

struct Gen {
  explicit Gen(std::uint64_t seed) : engine(seed) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  int between(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }

  Matrix gaussian(int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  Vector vec(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  /// Rows scaled to unit length by hand.
  Matrix unit_rows(int rows, int cols) {
    Matrix m = gaussian(rows, cols);
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols; ++j) s += m(i, j) * m(i, j);
      s = std::sqrt(s);
      for (int j = 0; j < cols; ++j) m(i, j) /= s;
    }
    return m;
  }

  std::mt19937_64 engine;
};

/// Central differences with step h, entry by entry.
inline Matrix central_diff(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      const double keep = probe(i, j);
      probe(i, j) = keep + h;
      const double up = f(probe);
      probe(i, j) = keep - h;
      const double down = f(probe);
      probe(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-5});
  return (a - b).norm() / scale;
}

inline double dot_rows(const Matrix& a, const Matrix& b, int i) {
  double s = 0.0;
  for (int j = 0; j < a.cols(); ++j) s += a(i, j) * b(i, j);
  return s;
}

inline Vector column_mean(const Matrix& m) {
  Vector c = Vector::Zero(m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) c(j) += m(i, j);
  return c / static_cast<double>(m.rows());
}

inline double cos(const Vector& a, const Vector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    ab += a(i) * b(i);
    aa += a(i) * a(i);
    bb += b(i) * b(i);
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace oracle
