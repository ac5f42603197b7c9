#include "proxflow/gaussian_geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace proxflow {
namespace {

void require_same_dim(const Gaussian& a, const Gaussian& b, const char* what) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
    throw DimensionError(os.str());
  }
}

}  // namespace

Gaussian::Gaussian(Vector mean, SpdMatrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (mean_.size() != cov_.dim()) {
    std::ostringstream os;
    os << "Gaussian: mean has " << mean_.size() << " entries but covariance is "
       << cov_.dim() << "x" << cov_.dim();
    throw DimensionError(os.str());
  }
  if (!mean_.allFinite()) {
    throw NumericError("Gaussian: non-finite mean");
  }
}

double w2_cross_term(const SpdMatrix& p, const SpdMatrix& p0) {
  if (p.dim() != p0.dim()) {
    throw DimensionError("w2_cross_term: dimension mismatch");
  }
  const SpdMatrix root0 = sqrt_spd(p0);
  const Matrix inner = root0.mat() * p.mat() * root0.mat();
  return sqrt_psd(SymMatrix(0.5 * (inner + inner.transpose()))).mat().trace();
}

double w2_squared(const Gaussian& g1, const Gaussian& g2) {
  require_same_dim(g1, g2, "w2_gaussian");
  const double shift = (g1.mean() - g2.mean()).squaredNorm();
  // tr(P1 + P2 − 2S) with S = (P2^{1/2} P1 P2^{1/2})^{1/2} equals
  // E‖x − Mx‖² for x ~ N(0, P2) and M = P2^{-1/2} S P2^{-1/2}, i.e.
  // ‖P2^{1/2} − P2^{-1/2} S‖_F². The sum of squares keeps full relative
  // accuracy when P1 ≈ P2, where the trace difference cancels.
  const SpdMatrix root2 = sqrt_spd(g2.cov());
  const Matrix inner = root2.mat() * g1.cov().mat() * root2.mat();
  const Matrix s = sqrt_psd(SymMatrix(0.5 * (inner + inner.transpose()))).mat();
  const double shape = (root2.mat() - inv_sqrt_spd(g2.cov()).mat() * s).squaredNorm();
  return shift + shape;
}

double w2_gaussian(const Gaussian& g1, const Gaussian& g2) { return std::sqrt(w2_squared(g1, g2)); }

AffineMap transport_map(const Gaussian& g_from, const Gaussian& g_to) {
  require_same_dim(g_from, g_to, "transport_map");
  const SpdMatrix root = sqrt_spd(g_to.cov());
  const SpdMatrix middle(root.mat() * g_from.cov().mat() * root.mat());
  Matrix m = root.mat() * inv_sqrt_spd(middle).mat() * root.mat();
  m = 0.5 * (m + m.transpose());
  Vector offset = g_to.mean() - m * g_from.mean();
  return AffineMap{SquareMatrix(std::move(m)), std::move(offset)};
}

double kl_gaussian(const Gaussian& g1, const Gaussian& g2) {
  require_same_dim(g1, g2, "kl_gaussian");
  const auto n = static_cast<double>(g1.dim());
  const SpdMatrix p2_inv = inv_spd(g2.cov());
  const Vector diff = g2.mean() - g1.mean();
  const double trace_term = (p2_inv.mat() * g1.cov().mat()).trace();
  const double mahalanobis = diff.dot(p2_inv.mat() * diff);
  const double log_det_ratio = g1.cov().log_det() - g2.cov().log_det();
  return std::max(0.0, 0.5 * (trace_term + mahalanobis - n - log_det_ratio));
}

double neg_entropy(const Gaussian& g) {
  const auto n = static_cast<double>(g.dim());
  return -0.5 * (n + n * std::log(2.0 * std::numbers::pi) + g.cov().log_det());
}

double energy_quadratic(const Gaussian& g, const SpdMatrix& gamma) {
  if (gamma.dim() != g.dim()) {
    throw DimensionError("energy_quadratic: Gamma dimension mismatch");
  }
  const Matrix& gm = gamma.mat();
  return 0.5 * (g.mean().dot(gm * g.mean()) + (gm * g.cov().mat()).trace());
}

double free_energy(const Gaussian& g, const SpdMatrix& gamma, double beta) {
  if (!(beta > 0.0)) {
    throw ValidationError("free_energy: beta must be positive");
  }
  return energy_quadratic(g, gamma) + neg_entropy(g) / beta;
}

double phi_expectation(const Gaussian& g, const Matrix& c, const SpdMatrix& r_inv,
                       const Vector& y) {
  if (c.cols() != g.dim() || c.rows() != r_inv.dim() || y.size() != c.rows()) {
    std::ostringstream os;
    os << "phi_expectation: shape mismatch (C " << c.rows() << "x" << c.cols() << ", R "
       << r_inv.dim() << "x" << r_inv.dim() << ", y " << y.size() << ", state " << g.dim()
       << ")";
    throw DimensionError(os.str());
  }
  const Vector residual = y - c * g.mean();
  const Matrix info = c.transpose() * r_inv.mat() * c;
  return 0.5 * (residual.dot(r_inv.mat() * residual) + (info * g.cov().mat()).trace());
}

SymMatrix grad_w2_cross(const SpdMatrix& p, const SpdMatrix& p0) {
  if (p.dim() != p0.dim()) {
    throw DimensionError("grad_w2_cross: dimension mismatch");
  }
  const SpdMatrix root0 = sqrt_spd(p0);
  const SpdMatrix inv_root0 = inv_sqrt_spd(p0);
  const SpdMatrix inner(inv_root0.mat() * inv_spd(p).mat() * inv_root0.mat());
  return SymMatrix(0.5 * root0.mat() * sqrt_spd(inner).mat() * root0.mat());
}

TraceProjection trace_projection(const Gaussian& g0, const Vector& mu, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError("trace_projection: tau must be positive");
  }
  if (mu.size() != g0.dim()) {
    throw DimensionError("trace_projection: mean dimension mismatch");
  }
  const double tau0 = g0.cov().mat().trace();
  const double root_gap = std::sqrt(tau) - std::sqrt(tau0);
  const double w2 = std::sqrt(root_gap * root_gap + (mu - g0.mean()).squaredNorm());
  return TraceProjection{w2, Gaussian(mu, SpdMatrix((tau / tau0) * g0.cov().mat()))};
}

}  // namespace proxflow
