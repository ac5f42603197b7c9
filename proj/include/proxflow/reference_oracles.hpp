#pragma once

#include <optional>
#include <span>
#include <vector>

#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/measurement_model.hpp"
#include "proxflow/propagation.hpp"

namespace proxflow {

/// Fixed-substep RK4 settings for the reference integrators.
struct OdeConfig {
  double substep;
  /// exact_cov integrates twice (substep and substep/2) and requires the two
  /// results to agree to this accuracy.
  double tolerance = 1e-9;

  /// Default: h/20.
  static OdeConfig for_step(double h);
  /// Enforces substep ≤ h/10 for a scheme running at step h.
  void validate_for(double h) const;
};

/// e^{At}μ0.
Vector exact_mean(const LinearSystem& sys, const Vector& mu0, double t);

/// β⁻¹Γ⁻¹(I − e^{−2Γt}) + e^{−Γt} P0 e^{−Γt}.
SpdMatrix exact_cov_closed_form(const SpdMatrix& gamma, double beta, const SpdMatrix& p0,
                                double t);

/// RK4 integration of Ṗ = AP + PAᵀ + 2BBᵀ.
SymMatrix lyapunov_rk4(const LinearSystem& sys, const SymMatrix& p0, double t, double substep);

/// Covariance at time t: the integrating-factor closed form when the system
/// is a gradient system with isotropic noise, RK4 otherwise.
SpdMatrix exact_cov(const LinearSystem& sys, const SpdMatrix& p0, double t,
                    const OdeConfig& cfg);

/// Kalman-Bucy filter driven by measurement increments dz over steps of
/// length h. The Riccati equation is integrated by RK4 at cfg.substep; the
/// mean SDE by Euler at the same substep with each dz spread uniformly over
/// its interval. Returns len(dz)+1 posteriors.
std::vector<Gaussian> kalman_bucy_run(const LinearSystem& sys, const MeasurementModel& meas,
                                      const Gaussian& g0, std::span<const Vector> dz, double h,
                                      const OdeConfig& cfg);

/// Observer with static gain L = CᵀR⁻¹ and covariance
/// Ṗ = (A − LC)P + P(A − LC)ᵀ + 2BBᵀ. Same integration scheme as
/// kalman_bucy_run.
std::vector<Gaussian> luenberger_run(const LinearSystem& sys, const MeasurementModel& meas,
                                     const Gaussian& g0, std::span<const Vector> dz, double h,
                                     const OdeConfig& cfg);

enum class ProxKind { kJkoFreeEnergy, kLmmrKl, kWassersteinFilter };

/// Closed-form value of a proximal objective over Gaussian candidates:
///   jko:          ½W2²(ρ, anchor) + h·F(ρ)
///   lmmr:         KL(ρ ‖ anchor)  + h·Φ(ρ)
///   wasserstein:  ½W2²(ρ, anchor) + h·Φ(ρ)
class ProxObjective {
 public:
  static ProxObjective jko(Gaussian anchor, SpdMatrix gamma, double beta);
  static ProxObjective lmmr(Gaussian anchor, const MeasurementModel& meas, Vector y);
  static ProxObjective wasserstein(Gaussian anchor, const MeasurementModel& meas, Vector y);

  ProxKind kind() const noexcept { return kind_; }
  const Gaussian& anchor() const noexcept { return anchor_; }

  double evaluate(const Gaussian& candidate, double h) const;
  /// Scalar-state evaluation without matrix machinery; used by the grid search.
  double evaluate_scalar(double mu, double p, double h) const;

  /// Scalar points the minimizer lies between, used to size the search box:
  /// the anchor plus the Gibbs point (jko) or the data point y/c (filters).
  struct SearchHints {
    Vector means;
    double variance;
  };
  SearchHints search_hints() const;

 private:
  ProxObjective(ProxKind kind, Gaussian anchor);

  ProxKind kind_;
  Gaussian anchor_;
  std::optional<SpdMatrix> gamma_;
  double beta_ = 1.0;
  Matrix c_;
  std::optional<SpdMatrix> r_inv_;
  Vector y_;
};

struct SearchConfig {
  int grid = 200;
  int refinements = 3;
  int max_iterations = 200000;
  double gradient_tol = 1e-9;
};

struct ProxResult {
  Gaussian g;
  double value;
};

/// Numerical minimizer of a proximal objective over (μ, P), for n ≤ 2.
/// n = 1: coarse grid over (μ, log P) refined `refinements` times.
/// n = 2: descent with central-difference derivatives (Newton direction when
/// the numeric Hessian is SPD, steepest descent otherwise) and backtracking,
/// P parametrized by its Cholesky factor.
/// Throws OracleFailure when the search does not converge.
ProxResult brute_force_prox(const ProxObjective& obj, double h, const SearchConfig& search = {});

}  // namespace proxflow
