#include "proxflow/reference_oracles.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

namespace proxflow {
namespace {

using MatrixField = std::function<Matrix(const Matrix&)>;

Matrix rk4_step(const Matrix& p, const MatrixField& f, double s) {
  const Matrix k1 = f(p);
  const Matrix k2 = f(p + 0.5 * s * k1);
  const Matrix k3 = f(p + 0.5 * s * k2);
  const Matrix k4 = f(p + s * k3);
  Matrix next = p + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return 0.5 * (next + next.transpose());
}

Matrix rk4_integrate(Matrix p, const MatrixField& f, double t, double substep) {
  if (t <= 0.0) {
    return p;
  }
  const auto n = static_cast<long>(std::ceil(t / substep - 1e-9));
  const double s = t / static_cast<double>(std::max(1L, n));
  for (long i = 0; i < std::max(1L, n); ++i) {
    p = rk4_step(p, f, s);
  }
  return p;
}

int substeps_per_interval(double h, const OdeConfig& cfg) {
  return std::max(1, static_cast<int>(std::lround(h / cfg.substep)));
}

void check_filter_shapes(const LinearSystem& sys, const MeasurementModel& meas,
                         const Gaussian& g0, std::span<const Vector> dz, const char* what) {
  if (meas.state_dim() != sys.dim() || g0.dim() != sys.dim()) {
    throw DimensionError(std::string(what) + ": state dimensions disagree");
  }
  for (const Vector& d : dz) {
    if (d.size() != meas.meas_dim()) {
      throw DimensionError(std::string(what) + ": increment has wrong measurement dimension");
    }
  }
}

// Shared driver for the two continuous-time estimators: the covariance
// field and the gain (as a function of the current covariance) differ.
std::vector<Gaussian> run_continuous_filter(
    const LinearSystem& sys, const MeasurementModel& meas, const Gaussian& g0,
    std::span<const Vector> dz, double h, const OdeConfig& cfg, const MatrixField& cov_field,
    const std::function<Matrix(const Matrix&)>& gain) {
  cfg.validate_for(h);
  const int sub = substeps_per_interval(h, cfg);
  const double s = h / sub;
  const Matrix& a = sys.a().mat();
  const Matrix& c = meas.c();

  std::vector<Gaussian> out;
  out.reserve(dz.size() + 1);
  out.push_back(g0);
  Vector mu = g0.mean();
  Matrix p = g0.cov().mat();
  for (const Vector& d : dz) {
    const Vector d_sub = d / static_cast<double>(sub);
    for (int j = 0; j < sub; ++j) {
      const Matrix k = gain(p);
      mu += s * (a * mu) + k * (d_sub - s * (c * mu));
      p = rk4_step(p, cov_field, s);
    }
    out.emplace_back(mu, SpdMatrix(p));
  }
  return out;
}

}  // namespace

OdeConfig OdeConfig::for_step(double h) { return OdeConfig{h / 20.0}; }

void OdeConfig::validate_for(double h) const {
  if (!(substep > 0.0)) {
    throw ValidationError("OdeConfig: substep must be positive");
  }
  if (substep > h / 10.0 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "OdeConfig: substep " << substep << " exceeds h/10 for h = " << h;
    throw ValidationError(os.str());
  }
}

Vector exact_mean(const LinearSystem& sys, const Vector& mu0, double t) {
  if (mu0.size() != sys.dim()) {
    throw DimensionError("exact_mean: mean dimension mismatch");
  }
  return expm(sys.a(), t).mat() * mu0;
}

SpdMatrix exact_cov_closed_form(const SpdMatrix& gamma, double beta, const SpdMatrix& p0,
                                double t) {
  if (gamma.dim() != p0.dim()) {
    throw DimensionError("exact_cov_closed_form: dimension mismatch");
  }
  const Index n = gamma.dim();
  const SquareMatrix neg_gamma(-gamma.mat());
  const Matrix decay = expm(neg_gamma, t).mat();
  const Matrix decay2 = expm(neg_gamma, 2.0 * t).mat();
  const Matrix stationary = inv_spd(gamma).mat() / beta;
  return SpdMatrix(stationary * (Matrix::Identity(n, n) - decay2) + decay * p0.mat() * decay);
}

SymMatrix lyapunov_rk4(const LinearSystem& sys, const SymMatrix& p0, double t, double substep) {
  const Matrix a = sys.a().mat();
  const Matrix q = sys.diffusion().mat();
  const MatrixField field = [&](const Matrix& p) -> Matrix {
    return a * p + p * a.transpose() + q;
  };
  return SymMatrix(rk4_integrate(p0.mat(), field, t, substep));
}

SpdMatrix exact_cov(const LinearSystem& sys, const SpdMatrix& p0, double t,
                    const OdeConfig& cfg) {
  if (p0.dim() != sys.dim()) {
    throw DimensionError("exact_cov: covariance dimension mismatch");
  }
  if (t == 0.0) {
    return p0;
  }
  if (const auto beta = sys.gradient_beta()) {
    return exact_cov_closed_form(SpdMatrix(-sys.a().mat()), *beta, p0, t);
  }
  const SymMatrix coarse = lyapunov_rk4(sys, p0, t, cfg.substep);
  const SymMatrix fine = lyapunov_rk4(sys, p0, t, 0.5 * cfg.substep);
  if (max_abs(coarse.mat() - fine.mat()) > cfg.tolerance * (1.0 + max_abs(fine.mat()))) {
    throw NumericError("exact_cov: RK4 substep too coarse for the requested tolerance");
  }
  return SpdMatrix(fine.mat());
}

std::vector<Gaussian> kalman_bucy_run(const LinearSystem& sys, const MeasurementModel& meas,
                                      const Gaussian& g0, std::span<const Vector> dz, double h,
                                      const OdeConfig& cfg) {
  check_filter_shapes(sys, meas, g0, dz, "kalman_bucy_run");
  const Matrix a = sys.a().mat();
  const Matrix q = sys.diffusion().mat();
  const Matrix info = meas.information();
  const Matrix ct_rinv = meas.observer_gain();
  const MatrixField riccati = [&](const Matrix& p) -> Matrix {
    return a * p + p * a.transpose() + q - p * info * p;
  };
  return run_continuous_filter(sys, meas, g0, dz, h, cfg, riccati,
                               [&](const Matrix& p) -> Matrix { return p * ct_rinv; });
}

std::vector<Gaussian> luenberger_run(const LinearSystem& sys, const MeasurementModel& meas,
                                     const Gaussian& g0, std::span<const Vector> dz, double h,
                                     const OdeConfig& cfg) {
  check_filter_shapes(sys, meas, g0, dz, "luenberger_run");
  const Matrix gain = meas.observer_gain();
  const Matrix closed = sys.a().mat() - gain * meas.c();
  const Matrix q = sys.diffusion().mat();
  const MatrixField lyapunov = [&](const Matrix& p) -> Matrix {
    return closed * p + p * closed.transpose() + q;
  };
  return run_continuous_filter(sys, meas, g0, dz, h, cfg, lyapunov,
                               [&](const Matrix&) -> Matrix { return gain; });
}

// ---------------------------------------------------------------------------
// Proximal objectives

ProxObjective::ProxObjective(ProxKind kind, Gaussian anchor)
    : kind_(kind), anchor_(std::move(anchor)) {}

ProxObjective ProxObjective::jko(Gaussian anchor, SpdMatrix gamma, double beta) {
  if (gamma.dim() != anchor.dim()) {
    throw DimensionError("ProxObjective: Gamma dimension mismatch");
  }
  if (!(beta > 0.0)) {
    throw ValidationError("ProxObjective: beta must be positive");
  }
  ProxObjective obj(ProxKind::kJkoFreeEnergy, std::move(anchor));
  obj.gamma_ = std::move(gamma);
  obj.beta_ = beta;
  return obj;
}

namespace {

ProxObjective with_measurement(ProxObjective obj, const MeasurementModel& meas, const Vector& y,
                               Index state_dim) {
  if (meas.state_dim() != state_dim || y.size() != meas.meas_dim()) {
    throw DimensionError("ProxObjective: measurement shape mismatch");
  }
  return obj;
}

}  // namespace

ProxObjective ProxObjective::lmmr(Gaussian anchor, const MeasurementModel& meas, Vector y) {
  const Index n = anchor.dim();
  ProxObjective obj = with_measurement(ProxObjective(ProxKind::kLmmrKl, std::move(anchor)),
                                       meas, y, n);
  obj.c_ = meas.c();
  obj.r_inv_ = meas.r_inv();
  obj.y_ = std::move(y);
  return obj;
}

ProxObjective ProxObjective::wasserstein(Gaussian anchor, const MeasurementModel& meas,
                                         Vector y) {
  const Index n = anchor.dim();
  ProxObjective obj = with_measurement(
      ProxObjective(ProxKind::kWassersteinFilter, std::move(anchor)), meas, y, n);
  obj.c_ = meas.c();
  obj.r_inv_ = meas.r_inv();
  obj.y_ = std::move(y);
  return obj;
}

double ProxObjective::evaluate(const Gaussian& candidate, double h) const {
  switch (kind_) {
    case ProxKind::kJkoFreeEnergy:
      return 0.5 * w2_squared(candidate, anchor_) + h * free_energy(candidate, *gamma_, beta_);
    case ProxKind::kLmmrKl:
      return kl_gaussian(candidate, anchor_) + h * phi_expectation(candidate, c_, *r_inv_, y_);
    case ProxKind::kWassersteinFilter:
      return 0.5 * w2_squared(candidate, anchor_) +
             h * phi_expectation(candidate, c_, *r_inv_, y_);
  }
  throw std::logic_error("ProxObjective: unknown kind");
}

double ProxObjective::evaluate_scalar(double mu, double p, double h) const {
  if (anchor_.dim() != 1) {
    throw DimensionError("ProxObjective::evaluate_scalar: state is not scalar");
  }
  const double mu0 = anchor_.mean()(0);
  const double p0 = anchor_.cov().mat()(0, 0);
  const double half_w2 =
      0.5 * ((mu - mu0) * (mu - mu0) + (std::sqrt(p) - std::sqrt(p0)) * (std::sqrt(p) - std::sqrt(p0)));
  if (kind_ == ProxKind::kJkoFreeEnergy) {
    const double g = gamma_->mat()(0, 0);
    const double energy = 0.5 * g * (mu * mu + p);
    const double entropy = -0.5 * (1.0 + std::log(2.0 * std::numbers::pi) + std::log(p));
    return half_w2 + h * (energy + entropy / beta_);
  }
  // Φ summed over measurement channels: ½[(y − cμ)ᵀR⁻¹(y − cμ) + p·cᵀR⁻¹c].
  const Vector residual = y_ - c_.col(0) * mu;
  const Matrix& rinv = r_inv_->mat();
  const double phi =
      0.5 * (residual.dot(rinv * residual) + p * c_.col(0).dot(rinv * c_.col(0)));
  if (kind_ == ProxKind::kLmmrKl) {
    const double kl = 0.5 * (p / p0 + (mu0 - mu) * (mu0 - mu) / p0 - 1.0 - std::log(p / p0));
    return kl + h * phi;
  }
  return half_w2 + h * phi;
}

ProxObjective::SearchHints ProxObjective::search_hints() const {
  const double p_anchor = anchor_.cov().mat()(0, 0);
  if (kind_ == ProxKind::kJkoFreeEnergy) {
    const double g = gamma_->mat()(0, 0);
    return SearchHints{Vector::Zero(1), std::max(p_anchor, 1.0 / (beta_ * g))};
  }
  std::vector<double> points;
  for (Index i = 0; i < c_.rows(); ++i) {
    if (c_(i, 0) != 0.0) {
      points.push_back(y_(i) / c_(i, 0));
    }
  }
  return SearchHints{Eigen::Map<const Vector>(points.data(), static_cast<Index>(points.size())),
                     p_anchor};
}

// ---------------------------------------------------------------------------
// Brute-force search

namespace {

struct GridBest {
  double mu;
  double s;
  double value;
  bool on_boundary;
};

GridBest scan(const ProxObjective& obj, double h, int grid, double mu_lo, double mu_hi,
              double s_lo, double s_hi) {
  GridBest best{0.0, 0.0, std::numeric_limits<double>::infinity(), false};
  const double dmu = (mu_hi - mu_lo) / (grid - 1);
  const double ds = (s_hi - s_lo) / (grid - 1);
  for (int i = 0; i < grid; ++i) {
    const double mu = mu_lo + i * dmu;
    for (int j = 0; j < grid; ++j) {
      const double s = s_lo + j * ds;
      const double v = obj.evaluate_scalar(mu, std::exp(s), h);
      if (v < best.value) {
        best = {mu, s, v, i == 0 || j == 0 || i == grid - 1 || j == grid - 1};
      }
    }
  }
  return best;
}

ProxResult grid_search_scalar(const ProxObjective& obj, double h, const SearchConfig& search,
                              const Vector& data_means, double p_hint) {
  const Gaussian& anchor = obj.anchor();
  const double mu_a = anchor.mean()(0);
  const double p_a = anchor.cov().mat()(0, 0);
  double mu_min = mu_a;
  double mu_max = mu_a;
  for (Index i = 0; i < data_means.size(); ++i) {
    mu_min = std::min(mu_min, data_means(i));
    mu_max = std::max(mu_max, data_means(i));
  }
  const double pad = 5.0 * std::sqrt(p_a) + 1.0;
  double mu_lo = mu_min - pad;
  double mu_hi = mu_max + pad;
  double s_lo = std::log(std::min(p_a, p_hint)) - 3.0;
  double s_hi = std::log(std::max(p_a, p_hint)) + 3.0;

  const int grid = search.grid;
  GridBest best = scan(obj, h, grid, mu_lo, mu_hi, s_lo, s_hi);
  for (int widen = 0; best.on_boundary && widen < 6; ++widen) {
    const double mu_half = mu_hi - mu_lo;
    const double s_half = s_hi - s_lo;
    mu_lo -= mu_half;
    mu_hi += mu_half;
    s_lo -= s_half;
    s_hi += s_half;
    best = scan(obj, h, grid, mu_lo, mu_hi, s_lo, s_hi);
  }
  if (best.on_boundary) {
    throw OracleFailure("brute_force_prox: minimizer lies on the search boundary");
  }
  for (int r = 0; r < search.refinements; ++r) {
    const double dmu = (mu_hi - mu_lo) / (grid - 1);
    const double ds = (s_hi - s_lo) / (grid - 1);
    mu_lo = best.mu - 2.0 * dmu;
    mu_hi = best.mu + 2.0 * dmu;
    s_lo = best.s - 2.0 * ds;
    s_hi = best.s + 2.0 * ds;
    best = scan(obj, h, grid, mu_lo, mu_hi, s_lo, s_hi);
  }
  Gaussian g(Vector::Constant(1, best.mu), SpdMatrix::scalar(std::exp(best.s)));
  const double value = obj.evaluate(g, h);
  return ProxResult{std::move(g), value};
}

// (μ, a, b, c) with P = LLᵀ, L = [[e^a, 0], [b, e^c]].
Gaussian unpack2(const Vector& x) {
  Matrix l = Matrix::Zero(2, 2);
  l(0, 0) = std::exp(x(2));
  l(1, 0) = x(3);
  l(1, 1) = std::exp(x(4));
  return Gaussian(x.head(2), SpdMatrix(l * l.transpose()));
}

ProxResult descent_2d(const ProxObjective& obj, double h, const SearchConfig& search) {
  const Gaussian& anchor = obj.anchor();
  const Matrix l0 = anchor.cov().mat().llt().matrixL();
  Vector x(5);
  x << anchor.mean()(0), anchor.mean()(1), std::log(l0(0, 0)), l0(1, 0), std::log(l0(1, 1));

  const auto f = [&](const Vector& v) {
    try {
      return obj.evaluate(unpack2(v), h);
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const auto grad = [&](const Vector& v) {
    constexpr double kStep = 1e-6;
    Vector g(v.size());
    for (Index i = 0; i < v.size(); ++i) {
      Vector plus = v;
      Vector minus = v;
      plus(i) += kStep;
      minus(i) -= kStep;
      g(i) = (f(plus) - f(minus)) / (2.0 * kStep);
    }
    return g;
  };

  // Newton direction from a finite-difference Hessian of the numeric
  // gradient; plain steepest descent wherever that Hessian is not SPD.
  const auto direction = [&](const Vector& v, const Vector& g) -> Vector {
    constexpr double kStep = 1e-4;
    Matrix hess(v.size(), v.size());
    for (Index j = 0; j < v.size(); ++j) {
      Vector plus = v;
      Vector minus = v;
      plus(j) += kStep;
      minus(j) -= kStep;
      hess.col(j) = (grad(plus) - grad(minus)) / (2.0 * kStep);
    }
    const Eigen::LLT<Matrix> llt(0.5 * (hess + hess.transpose()));
    if (llt.info() == Eigen::Success && hess.allFinite()) {
      return -llt.solve(g);
    }
    return -g;
  };

  double fx = f(x);
  for (int it = 0; it < search.max_iterations; ++it) {
    const Vector g = grad(x);
    if (g.cwiseAbs().maxCoeff() < search.gradient_tol) {
      return ProxResult{unpack2(x), fx};
    }
    Vector d = direction(x, g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      d = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    bool accepted = false;
    while (step > 1e-14) {
      const Vector trial = x + step * d;
      const double ft = f(trial);
      if (ft <= fx + 1e-4 * step * slope) {
        x = trial;
        fx = ft;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      break;
    }
  }
  // Stalled line search: accept only if the gradient is small enough to
  // meet the 1e-4 agreement contract.
  const Vector g = grad(x);
  if (g.cwiseAbs().maxCoeff() < 1e-7) {
    return ProxResult{unpack2(x), fx};
  }
  throw OracleFailure("brute_force_prox: gradient descent did not converge");
}

}  // namespace

ProxResult brute_force_prox(const ProxObjective& obj, double h, const SearchConfig& search) {
  if (!(h >= 0.0)) {
    throw ValidationError("brute_force_prox: step size must be non-negative");
  }
  const Index n = obj.anchor().dim();
  if (n > 2) {
    throw DimensionError("brute_force_prox: only n <= 2 is supported");
  }
  if (h == 0.0) {
    return ProxResult{obj.anchor(), obj.evaluate(obj.anchor(), 0.0)};
  }
  if (n == 2) {
    return descent_2d(obj, h, search);
  }
  const ProxObjective::SearchHints hints = obj.search_hints();
  return grid_search_scalar(obj, h, search, hints.means, hints.variance);
}

}  // namespace proxflow
