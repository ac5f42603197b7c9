#include "proxflow/matrix_core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <string>

namespace proxflow {
namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

Matrix checked_symmetrize(const Matrix& m) {
  require_square(m, "SymMatrix");
  require_finite(m, "SymMatrix");
  const double asym = m.size() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > tolerance::kSymmetry * (1.0 + max_abs(m))) {
    std::ostringstream os;
    os << "SymMatrix: asymmetry " << asym << " exceeds tolerance";
    throw ValidationError(os.str());
  }
  return 0.5 * (m + m.transpose());
}

void check_positive(const Vector& eigenvalues) {
  if (!eigenvalues.allFinite()) {
    throw NumericError("SpdMatrix: non-finite eigenvalue");
  }
  const double lo = eigenvalues(0);
  const double hi = eigenvalues(eigenvalues.size() - 1);
  if (!(lo > tolerance::kPositivityFloor * (1.0 + hi))) {
    std::ostringstream os;
    os << "SpdMatrix: smallest eigenvalue " << lo << " is below the positivity floor"
       << " (largest " << hi << ")";
    throw SingularityError(os.str());
  }
}

}  // namespace

double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

SquareMatrix::SquareMatrix(Matrix m) : m_(std::move(m)) {
  require_square(m_, "SquareMatrix");
  require_finite(m_, "SquareMatrix");
  if (m_.rows() == 0) {
    throw DimensionError("SquareMatrix: empty matrix");
  }
}

SquareMatrix SquareMatrix::identity(Index n) { return SquareMatrix(Matrix::Identity(n, n)); }

SquareMatrix SquareMatrix::zero(Index n) { return SquareMatrix(Matrix::Zero(n, n)); }

SymMatrix::SymMatrix(const Matrix& m) : SquareMatrix(checked_symmetrize(m), Trusted{}) {
  if (m_.rows() == 0) {
    throw DimensionError("SymMatrix: empty matrix");
  }
}

SymMatrix SymMatrix::zero(Index n) { return SymMatrix(Matrix::Zero(n, n)); }

SpdMatrix::SpdMatrix(const Matrix& m) : SymMatrix(m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m_);
  if (es.info() != Eigen::Success) {
    throw NumericError("SpdMatrix: eigendecomposition failed");
  }
  eigenvalues_ = es.eigenvalues();
  eigenvectors_ = es.eigenvectors();
  check_positive(eigenvalues_);
}

SpdMatrix::SpdMatrix(Matrix m, Vector eigenvalues, Matrix eigenvectors)
    : SymMatrix(std::move(m), Trusted{}),
      eigenvalues_(std::move(eigenvalues)),
      eigenvectors_(std::move(eigenvectors)) {
  check_positive(eigenvalues_);
}

SpdMatrix SpdMatrix::identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

SpdMatrix SpdMatrix::scalar(double value, Index n) {
  return SpdMatrix(value * Matrix::Identity(n, n));
}

double SpdMatrix::log_det() const { return eigenvalues_.array().log().sum(); }

SpdMatrix SpdMatrix::map_eigenvalues(const std::function<double(double)>& f) const {
  Vector mapped = eigenvalues_.unaryExpr(f);
  if (!mapped.allFinite()) {
    throw NumericError("SpdMatrix: matrix function produced a non-finite eigenvalue");
  }
  Matrix out = eigenvectors_ * mapped.asDiagonal() * eigenvectors_.transpose();
  out = 0.5 * (out + out.transpose());
  // f need not be monotone, so the cached eigenpairs are re-sorted.
  Eigen::SelfAdjointEigenSolver<Matrix> es(out);
  if (es.info() != Eigen::Success) {
    throw NumericError("SpdMatrix: eigendecomposition failed");
  }
  return SpdMatrix(std::move(out), es.eigenvalues(), es.eigenvectors());
}

SpdMatrix sqrt_spd(const SpdMatrix& p) {
  return p.map_eigenvalues([](double x) { return std::sqrt(x); });
}

SpdMatrix inv_spd(const SpdMatrix& p) {
  return p.map_eigenvalues([](double x) { return 1.0 / x; });
}

SpdMatrix inv_sqrt_spd(const SpdMatrix& p) {
  return p.map_eigenvalues([](double x) { return 1.0 / std::sqrt(x); });
}

SymMatrix sqrt_psd(const SymMatrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.mat());
  if (es.info() != Eigen::Success) {
    throw NumericError("sqrt_psd: eigendecomposition failed");
  }
  Vector lambda = es.eigenvalues();
  const double floor = tolerance::kPositivityFloor * (1.0 + std::abs(lambda.maxCoeff())) * 1e3;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -floor) {
      throw ValidationError("sqrt_psd: matrix is not positive semidefinite");
    }
    lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  }
  return SymMatrix(es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose());
}

SquareMatrix expm(const SquareMatrix& a, double t) {
  if (!std::isfinite(t)) {
    throw NumericError("expm: non-finite time");
  }
  Matrix scaled = a.mat() * t;
  Matrix e = scaled.exp();
  if (!e.allFinite()) {
    throw NumericError("expm: overflow");
  }
  return SquareMatrix(std::move(e));
}

double spectral_abscissa(const SquareMatrix& a) {
  Eigen::EigenSolver<Matrix> es(a.mat(), false);
  if (es.info() != Eigen::Success) {
    throw NumericError("spectral_abscissa: eigenvalue computation failed");
  }
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const SquareMatrix& a) { return spectral_abscissa(a) < 0.0; }

SymMatrix lyapunov_solve(const SquareMatrix& a, const SymMatrix& q) {
  const Index n = a.dim();
  if (q.dim() != n) {
    throw DimensionError("lyapunov_solve: A and Q have different dimensions");
  }
  const double abscissa = spectral_abscissa(a);
  if (!(abscissa < 0.0)) {
    std::ostringstream os;
    os << "lyapunov_solve: drift matrix is not Hurwitz (max eigenvalue real part "
       << abscissa << ")";
    throw StabilityError(os.str());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> qes(q.mat(), Eigen::EigenvaluesOnly);
  if (qes.eigenvalues()(0) < -tolerance::kPositivityFloor * (1.0 + std::abs(qes.eigenvalues()(n - 1))) * 1e3) {
    throw ValidationError("lyapunov_solve: forcing term is not positive semidefinite");
  }

  // Column-major vec: vec(A X) = (I ⊗ A) vec X, vec(X Aᵀ) = (A ⊗ I) vec X.
  const Matrix& am = a.mat();
  Matrix kron = Matrix::Zero(n * n, n * n);
  for (Index i = 0; i < n; ++i) {
    kron.block(i * n, i * n, n, n) = am;
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n).diagonal().array() += am(i, j);
    }
  }
  Eigen::FullPivLU<Matrix> lu(kron);
  if (!lu.isInvertible()) {
    throw NumericError("lyapunov_solve: singular Kronecker system");
  }
  const Matrix& qm = q.mat();
  Vector rhs = -Eigen::Map<const Vector>(qm.data(), n * n);
  Vector x = lu.solve(rhs);
  if (!x.allFinite()) {
    throw NumericError("lyapunov_solve: non-finite solution");
  }
  Matrix xm = Eigen::Map<Matrix>(x.data(), n, n);
  return SymMatrix(0.5 * (xm + xm.transpose()));
}

SpdMatrix quadratic_matrix_solve(double c, const SpdMatrix& rhs) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ValidationError("quadratic_matrix_solve: c must be positive and finite");
  }
  // (c/2)(√(1 + 4r/c) − 1) rewritten as 2r / (1 + √(1 + 4r/c)) to avoid
  // cancellation when c is large (small step h).
  return rhs.map_eigenvalues(
      [c](double r) { return 2.0 * r / (1.0 + std::sqrt(1.0 + 4.0 * r / c)); });
}

SymSkew sym_skew_split(const SquareMatrix& a) {
  const Matrix& m = a.mat();
  Matrix sym = 0.5 * (m + m.transpose());
  Matrix skew = 0.5 * (m - m.transpose());
  return SymSkew{SymMatrix(sym), SquareMatrix(std::move(skew))};
}

}  // namespace proxflow
