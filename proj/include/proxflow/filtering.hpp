#pragma once

#include <span>
#include <vector>

#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/measurement_model.hpp"
#include "proxflow/propagation.hpp"

namespace proxflow {

/// KL-proximal measurement update (minimizer of KL(ρ‖prior) + hΦ(ρ)):
///   (I + h P⁻CᵀR⁻¹C) μ⁺ = μ⁻ + h P⁻CᵀR⁻¹ y
///   (P⁺)⁻¹ = (P⁻)⁻¹ + h CᵀR⁻¹C
Gaussian lmmr_update(const Gaussian& prior, const MeasurementModel& meas, const Vector& y,
                     double h);

/// Wasserstein-proximal measurement update (minimizer of ½W2²(ρ, prior) + hΦ(ρ)):
///   (I + h CᵀR⁻¹C) μ⁺ = μ⁻ + h CᵀR⁻¹ y
///   (P⁺)⁻¹ = (I + h CᵀR⁻¹C)(P⁻)⁻¹(I + h CᵀR⁻¹C)
Gaussian wasserstein_update(const Gaussian& prior, const MeasurementModel& meas,
                            const Vector& y, double h);

enum class UpdateKind { kLmmr, kWasserstein };

/// kJko: the exact proximal step for gradient systems with isotropic noise,
/// the first-order general recursion otherwise. kExact: closed-form
/// mean/covariance transition over one step.
enum class PredictKind { kJko, kExact };

struct FilterRun {
  std::vector<Gaussian> posterior;  ///< steps + 1 entries, starting at g0
  std::vector<Vector> innovations;  ///< y_k − C μ_k⁻, one per step
  StepConfig config;
};

/// Predict/update filter over cfg.steps measurement increments. The
/// measurement for step k is y_k = dz_k / h.
FilterRun run_filter(const LinearSystem& sys, const MeasurementModel& meas, const Gaussian& g0,
                     std::span<const Vector> dz, const StepConfig& cfg, UpdateKind update,
                     PredictKind predict);

struct ErrorSummary {
  std::vector<double> squared_error;  ///< ‖μ_k − x_k‖² per time
  double terminal_squared_error;
  double path_rmse;  ///< root of the time-averaged squared error
};

ErrorSummary error_metrics(const FilterRun& run, std::span<const Vector> truth);

/// Root of the seed-averaged terminal squared error.
double terminal_rmse(std::span<const ErrorSummary> runs);

}  // namespace proxflow
