#pragma once

#include "proxflow/matrix_core.hpp"

namespace proxflow {

/// Gaussian density N(mean, cov). Every recursion in the library closes on
/// this type; a mean/covariance class of densities is represented by its
/// Gaussian (maximum-entropy) member.
class Gaussian {
 public:
  Gaussian(Vector mean, SpdMatrix cov);

  const Vector& mean() const noexcept { return mean_; }
  const SpdMatrix& cov() const noexcept { return cov_; }
  Index dim() const noexcept { return mean_.size(); }

 private:
  Vector mean_;
  SpdMatrix cov_;
};

/// x ↦ linear·x + offset.
struct AffineMap {
  SquareMatrix linear;
  Vector offset;

  Vector apply(const Vector& x) const { return linear.mat() * x + offset; }
};

/// Squared Wasserstein-2 distance between Gaussians:
/// ‖μ1 − μ2‖² + tr(P1 + P2 − 2(P2^{1/2} P1 P2^{1/2})^{1/2}), clamped at zero.
double w2_squared(const Gaussian& g1, const Gaussian& g2);
double w2_gaussian(const Gaussian& g1, const Gaussian& g2);

/// tr((P0^{1/2} P P0^{1/2})^{1/2}), the cross term of the W2 formula.
double w2_cross_term(const SpdMatrix& p, const SpdMatrix& p0);

/// Optimal transport map pushing g_from onto g_to. The linear part is
/// M = P^{1/2}(P^{1/2} P0 P^{1/2})^{-1/2} P^{1/2}; the offset is μ − M·μ0 so
/// that M·μ0 + m = μ holds for any pair of means.
AffineMap transport_map(const Gaussian& g_from, const Gaussian& g_to);

/// KL(g1 ‖ g2) in closed form.
double kl_gaussian(const Gaussian& g1, const Gaussian& g2);

/// ∫ρ log ρ = −½(n + n·log 2π + log det P).
double neg_entropy(const Gaussian& g);

/// E_g[½ xᵀΓx] = ½(μᵀΓμ + tr(ΓP)).
double energy_quadratic(const Gaussian& g, const SpdMatrix& gamma);

/// Energy plus β⁻¹ times negative entropy.
double free_energy(const Gaussian& g, const SpdMatrix& gamma, double beta);

/// ½ E_g[(y − Cx)ᵀ R⁻¹ (y − Cx)] = ½[(y − Cμ)ᵀR⁻¹(y − Cμ) + tr(CᵀR⁻¹CP)].
double phi_expectation(const Gaussian& g, const Matrix& c, const SpdMatrix& r_inv,
                       const Vector& y);

/// ∂/∂P tr((P0^{1/2} P P0^{1/2})^{1/2}) = ½ P0^{1/2}(P0^{-1/2} P⁻¹ P0^{-1/2})^{1/2} P0^{1/2}.
SymMatrix grad_w2_cross(const SpdMatrix& p, const SpdMatrix& p0);

struct TraceProjection {
  double w2;
  Gaussian gaussian;
};

/// Closest density to g0 (in W2) with mean mu and covariance trace tau: the
/// dilation P = (τ/τ0)·P0, at distance √((√τ − √τ0)² + ‖μ − μ0‖²).
TraceProjection trace_projection(const Gaussian& g0, const Vector& mu, double tau);

}  // namespace proxflow
