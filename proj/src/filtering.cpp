#include "proxflow/filtering.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "proxflow/reference_oracles.hpp"

namespace proxflow {

namespace {

void check_update_inputs(const Gaussian& prior, const MeasurementModel& meas, const Vector& y,
                         double h, const char* what) {
  if (meas.state_dim() != prior.dim() || y.size() != meas.meas_dim()) {
    std::ostringstream os;
    os << what << ": shape mismatch (state " << prior.dim() << ", C " << meas.meas_dim() << "x"
       << meas.state_dim() << ", y " << y.size() << ")";
    throw DimensionError(os.str());
  }
  if (!(h >= 0.0) || !std::isfinite(h)) {
    throw ValidationError(std::string(what) + ": step size must be non-negative");
  }
}

}  // namespace

Gaussian lmmr_update(const Gaussian& prior, const MeasurementModel& meas, const Vector& y,
                     double h) {
  check_update_inputs(prior, meas, y, h, "lmmr_update");
  if (h == 0.0) {
    return prior;
  }
  const Index n = prior.dim();
  const Matrix& p = prior.cov().mat();
  const Matrix& c = meas.c();
  const Matrix gain = meas.observer_gain();

  const Matrix system = Matrix::Identity(n, n) + h * p * meas.information();
  Vector mean = system.partialPivLu().solve(prior.mean() + h * p * gain * y);

  // Information update written in covariance form:
  // ((P⁻)⁻¹ + hCᵀR⁻¹C)⁻¹ = P⁻ − h P⁻Cᵀ(R + h C P⁻ Cᵀ)⁻¹ C P⁻.
  const Matrix innovation_cov = meas.r().mat() + h * c * p * c.transpose();
  const Matrix pct = p * c.transpose();
  const Matrix correction = h * pct * innovation_cov.llt().solve(pct.transpose());
  return Gaussian(std::move(mean), SpdMatrix(p - correction));
}

Gaussian wasserstein_update(const Gaussian& prior, const MeasurementModel& meas,
                            const Vector& y, double h) {
  check_update_inputs(prior, meas, y, h, "wasserstein_update");
  if (h == 0.0) {
    return prior;
  }
  const Index n = prior.dim();
  const Matrix shrink = Matrix::Identity(n, n) + h * meas.information();
  const Eigen::LLT<Matrix> llt(shrink);
  Vector mean = llt.solve(prior.mean() + h * meas.observer_gain() * y);
  const Matrix half = llt.solve(prior.cov().mat());
  const Matrix cov = llt.solve(half.transpose());
  return Gaussian(std::move(mean), SpdMatrix(cov));
}

FilterRun run_filter(const LinearSystem& sys, const MeasurementModel& meas, const Gaussian& g0,
                     std::span<const Vector> dz, const StepConfig& cfg, UpdateKind update,
                     PredictKind predict) {
  cfg.validate();
  if (dz.size() != static_cast<std::size_t>(cfg.steps)) {
    std::ostringstream os;
    os << "run_filter: " << dz.size() << " increments for " << cfg.steps << " steps";
    throw DimensionError(os.str());
  }
  if (meas.state_dim() != sys.dim() || g0.dim() != sys.dim()) {
    throw DimensionError("run_filter: state dimensions disagree");
  }

  const double h = cfg.h;
  const std::optional<double> beta = sys.gradient_beta();
  std::optional<SpdMatrix> gamma;
  std::optional<EquipartitionFrame> frame;
  if (predict == PredictKind::kJko) {
    if (beta) {
      gamma.emplace(-sys.a().mat());
    } else {
      frame.emplace(make_equipartition(sys));
    }
  }
  const OdeConfig ode = OdeConfig::for_step(h);

  FilterRun run{{g0}, {}, cfg};
  run.posterior.reserve(dz.size() + 1);
  run.innovations.reserve(dz.size());
  for (int k = 1; k <= cfg.steps; ++k) {
    const Gaussian& post = run.posterior.back();
    std::optional<Gaussian> prior;
    if (predict == PredictKind::kExact) {
      prior.emplace(exact_mean(sys, post.mean(), h), exact_cov(sys, post.cov(), h, ode));
    } else if (gamma) {
      prior.emplace(jko_step_symmetric(post, *gamma, *beta, h));
    } else {
      prior.emplace(jko_step_general_mean(post.mean(), *frame, k, h),
                    jko_step_general_cov(post.cov(), sys, h));
    }
    const Vector y = dz[static_cast<std::size_t>(k - 1)] / h;
    run.innovations.push_back(y - meas.c() * prior->mean());
    run.posterior.push_back(update == UpdateKind::kLmmr ? lmmr_update(*prior, meas, y, h)
                                                        : wasserstein_update(*prior, meas, y, h));
  }
  return run;
}

ErrorSummary error_metrics(const FilterRun& run, std::span<const Vector> truth) {
  if (truth.size() != run.posterior.size()) {
    std::ostringstream os;
    os << "error_metrics: " << truth.size() << " truth states for " << run.posterior.size()
       << " estimates";
    throw DimensionError(os.str());
  }
  ErrorSummary out{{}, 0.0, 0.0};
  out.squared_error.reserve(truth.size());
  double total = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k].size() != run.posterior[k].dim()) {
      throw DimensionError("error_metrics: truth state has the wrong dimension");
    }
    const double e = (run.posterior[k].mean() - truth[k]).squaredNorm();
    out.squared_error.push_back(e);
    total += e;
  }
  out.terminal_squared_error = out.squared_error.back();
  out.path_rmse = std::sqrt(total / static_cast<double>(truth.size()));
  return out;
}

double terminal_rmse(std::span<const ErrorSummary> runs) {
  if (runs.empty()) {
    throw ValidationError("terminal_rmse: no runs");
  }
  double total = 0.0;
  for (const ErrorSummary& r : runs) {
    total += r.terminal_squared_error;
  }
  return std::sqrt(total / static_cast<double>(runs.size()));
}

}  // namespace proxflow
