#pragma once

// Shared generators for the property tests. All randomness goes through the
// library's seeded generator so failures replay exactly.

#include <cmath>

#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/matrix_core.hpp"
#include "proxflow/sde_sim.hpp"

namespace testing_support {

using proxflow::Index;
using proxflow::Matrix;
using proxflow::Vector;

inline double uniform(proxflow::Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform();
}

/// Log-uniform on [lo, hi].
inline double log_uniform(proxflow::Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

inline Matrix random_matrix(proxflow::Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

/// G − (α(G) + margin)·I, so the spectral abscissa is exactly −margin.
inline proxflow::SquareMatrix random_hurwitz(proxflow::Rng& rng, Index n, double margin = 0.5) {
  Matrix g = random_matrix(rng, n, n);
  const double shift = proxflow::spectral_abscissa(proxflow::SquareMatrix(g)) + margin;
  g.diagonal().array() -= shift;
  return proxflow::SquareMatrix(g);
}

inline proxflow::Gaussian random_gaussian(proxflow::Rng& rng, Index n) {
  return proxflow::Gaussian(proxflow::standard_normal(rng, n), proxflow::random_spd(rng, n));
}

inline double max_diff(const Matrix& a, const Matrix& b) { return proxflow::max_abs(a - b); }

}  // namespace testing_support
