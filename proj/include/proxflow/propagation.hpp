#pragma once

#include <optional>
#include <vector>

#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/matrix_core.hpp"

namespace proxflow {

/// dx = A x dt + √2 B dw. B is already scaled so the Fokker-Planck diffusion
/// term is 2BBᵀ; A must be Hurwitz and (A, B) controllable.
class LinearSystem {
 public:
  LinearSystem(SquareMatrix a, Matrix b);

  const SquareMatrix& a() const noexcept { return a_; }
  const Matrix& b() const noexcept { return b_; }
  Index dim() const noexcept { return a_.dim(); }

  /// 2BBᵀ.
  SymMatrix diffusion() const;

  /// β with BBᵀ = β⁻¹I when A is symmetric and the noise isotropic, i.e. the
  /// drift is −∇U for U(x) = ½xᵀΓx with Γ = −A.
  std::optional<double> gradient_beta() const;

 private:
  SquareMatrix a_;
  Matrix b_;
};

/// Smallest singular value of [B, AB, …, A^{n−1}B] relative to the largest.
double controllability_margin(const SquareMatrix& a, const Matrix& b);

struct StepConfig {
  double h;
  int steps;
  /// Inverse temperature; 1/θ in the general case.
  double beta = 1.0;

  void validate() const;
};

/// Equipartition-of-energy coordinates: stationary covariance Pinf, temperature
/// θ = tr(Pinf)/n, A_ep = Pinf^{-1/2} A Pinf^{1/2}, B_ep = Pinf^{-1/2} B, and the
/// symmetric/skew split of A_ep.
struct EquipartitionFrame {
  SpdMatrix pinf;
  SpdMatrix pinf_sqrt;
  SpdMatrix pinf_inv_sqrt;
  double theta;
  SquareMatrix aep;
  Matrix bep;
  SymMatrix aep_sym;
  SquareMatrix aep_skew;
};

EquipartitionFrame make_equipartition(const LinearSystem& sys);

struct FrameResiduals {
  double lyapunov;   ///< ‖A·Pinf + Pinf·Aᵀ + 2BBᵀ‖_max
  double theta;      ///< |θ − tr(Pinf)/n|
  double equipartition;  ///< ‖θ·A_ep + θ·A_epᵀ + 2θ·B_ep·B_epᵀ‖_max
  double split;      ///< ‖A_ep^sym + A_ep^skew − A_ep‖_max
};

FrameResiduals frame_residuals(const LinearSystem& sys, const EquipartitionFrame& frame);

/// Drift and diffusion in the time-varying symmetrizing coordinates:
/// F(t) = e^{−S t} A_ep^sym e^{S t}, G(t) = e^{−S t} B_ep with S = A_ep^skew.
struct SymmetrizedPair {
  SymMatrix f;
  Matrix g;
};

SymmetrizedPair symmetrized_pair(const EquipartitionFrame& frame, double t);

struct PairResiduals {
  double noise_balance;  ///< ‖G·Gᵀ + F‖_max
  double lyapunov;       ///< ‖θF + Fθ + 2θ·G·Gᵀ‖_max
  double max_eigenvalue; ///< largest eigenvalue of F (≤ 0 up to rounding)
};

PairResiduals pair_residuals(const EquipartitionFrame& frame, const SymmetrizedPair& pair);

/// One exact Wasserstein-proximal step of the free energy for the gradient
/// system with potential ½xᵀΓx and inverse temperature β.
///
/// Mean: (I + hΓ)⁻¹μ0. Covariance: with Z the SPD root of
/// Z² + (β/h)Z − (β/h)·P0^{-1/2}(I + hΓ)P0^{-1/2} = 0, P = P0^{-1/2} Z⁻² P0^{-1/2}.
/// h = 0 returns g_prev.
Gaussian jko_step_symmetric(const Gaussian& g_prev, const SpdMatrix& gamma, double beta,
                            double h);

/// Mean step for a general Hurwitz drift, taken in symmetrized coordinates
/// and mapped back:
/// μ_k = Pinf^{1/2} e^{S kh} (I − hF(kh))⁻¹ e^{S h} e^{−S kh} Pinf^{-1/2} μ_{k−1}.
Vector jko_step_general_mean(const Vector& mu_prev, const EquipartitionFrame& frame, int k,
                             double h);

/// First-order covariance step P + h(AP + PAᵀ + 2BBᵀ). Throws StepSizeError
/// if the result is not SPD.
SpdMatrix jko_step_general_cov(const SpdMatrix& p_prev, const LinearSystem& sys, double h);

enum class PropagationMode { kSymmetricExact, kGeneralFirstOrder };

struct TimedGaussian {
  double t;
  Gaussian g;
};

/// K+1 states starting at g0. kSymmetricExact requires a symmetric drift and
/// BBᵀ = β⁻¹I for cfg.beta.
std::vector<TimedGaussian> propagate(const LinearSystem& sys, const Gaussian& g0,
                                     const StepConfig& cfg, PropagationMode mode);

}  // namespace proxflow
