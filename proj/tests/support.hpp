#pragma once

// Small helpers shared by the unit tests. Oracles live in the test files
// themselves and deliberately avoid the library's own code paths.

#include "msbdl/model.hpp"

#include <random>

namespace msbdl::testing {

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}

inline Vector positive(Index n, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index k = 0; k < n; ++k) v(k) = u(rng);
  return v;
}

inline double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

// Dense inverse through a full-pivoting LU, independent of the Cholesky and
// Woodbury paths used by the library.
inline Matrix dense_inverse(const Matrix& a) { return a.fullPivLu().inverse(); }

// log N(y; 0, C) by explicit determinant and LU solve.
inline double dense_log_gauss(const Vector& y, const Matrix& c) {
  const auto lu = c.fullPivLu();
  const double quad = y.dot(lu.solve(y));
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * 3.14159265358979323846) + std::log(lu.determinant()) + quad);
}

}  // namespace msbdl::testing
