#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <utility>

#include "proxflow/errors.hpp"

namespace proxflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Tolerances shared by every matrix type in the library.
namespace tolerance {
/// Inputs with ‖A − Aᵀ‖_max ≤ kSymmetry·(1 + ‖A‖_max) are accepted as symmetric.
inline constexpr double kSymmetry = 1e-9;
/// SPD requires λ_min > kPositivityFloor·(1 + λ_max).
inline constexpr double kPositivityFloor = 1e-12;
}  // namespace tolerance

double max_abs(const Matrix& m);

/// Dense square matrix with finite entries.
class SquareMatrix {
 public:
  explicit SquareMatrix(Matrix m);

  static SquareMatrix identity(Index n);
  static SquareMatrix zero(Index n);

  const Matrix& mat() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 protected:
  struct Trusted {};
  SquareMatrix(Matrix m, Trusted) : m_(std::move(m)) {}

  Matrix m_;
};

/// Symmetric matrix. Accepts inputs within the symmetry tolerance and
/// stores (A + Aᵀ)/2.
class SymMatrix : public SquareMatrix {
 public:
  explicit SymMatrix(const Matrix& m);

  static SymMatrix zero(Index n);

 protected:
  SymMatrix(Matrix m, Trusted t) : SquareMatrix(std::move(m), t) {}
};

/// Symmetric positive-definite matrix. The symmetric eigendecomposition is
/// computed once at construction and reused by every matrix function.
class SpdMatrix : public SymMatrix {
 public:
  explicit SpdMatrix(const Matrix& m);

  static SpdMatrix identity(Index n);
  static SpdMatrix scalar(double value, Index n = 1);

  /// Ascending eigenvalues.
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  /// Orthonormal eigenvectors, one per column, matching eigenvalues().
  const Matrix& eigenvectors() const noexcept { return eigenvectors_; }

  double min_eigenvalue() const { return eigenvalues_(0); }
  double max_eigenvalue() const { return eigenvalues_(eigenvalues_.size() - 1); }
  double log_det() const;

  /// V·diag(f(λ))·Vᵀ. The result is re-validated as SPD.
  SpdMatrix map_eigenvalues(const std::function<double(double)>& f) const;

 private:
  SpdMatrix(Matrix m, Vector eigenvalues, Matrix eigenvectors);

  Vector eigenvalues_;
  Matrix eigenvectors_;
};

SpdMatrix sqrt_spd(const SpdMatrix& p);
SpdMatrix inv_spd(const SpdMatrix& p);
SpdMatrix inv_sqrt_spd(const SpdMatrix& p);

/// Principal square root of a symmetric positive-semidefinite matrix.
/// Eigenvalues in [−floor, 0) are clamped to zero; anything more negative
/// is rejected. Used where a product such as P2^{1/2}·P1·P2^{1/2} may be
/// numerically singular.
SymMatrix sqrt_psd(const SymMatrix& s);

/// e^{A·t} by scaling and squaring.
SquareMatrix expm(const SquareMatrix& a, double t);

/// Largest real part among the eigenvalues of A.
double spectral_abscissa(const SquareMatrix& a);
bool is_hurwitz(const SquareMatrix& a);

/// Solves A·X + X·Aᵀ + Q = 0 for Hurwitz A and positive-semidefinite Q.
///
/// Uses the Kronecker form (I⊗A + A⊗I)·vec(X) = −vec(Q), which is O(n⁶)
/// and intended for n ≲ 16. The result is only semidefinite in general
/// (Q = 0 gives X = 0); it is definite whenever (A, Q^{1/2}) is controllable.
SymMatrix lyapunov_solve(const SquareMatrix& a, const SymMatrix& q);

/// Unique SPD root of Z² + c·Z − c·Rhs = 0,
/// Z = (c/2)(−I + (I + (4/c)·Rhs)^{1/2}), for c > 0.
SpdMatrix quadratic_matrix_solve(double c, const SpdMatrix& rhs);

struct SymSkew {
  SymMatrix sym;
  SquareMatrix skew;
};

/// A = (A + Aᵀ)/2 + (A − Aᵀ)/2.
SymSkew sym_skew_split(const SquareMatrix& a);

}  // namespace proxflow
