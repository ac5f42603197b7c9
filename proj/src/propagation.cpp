#include "proxflow/propagation.hpp"

#include <cmath>
#include <sstream>

namespace proxflow {
namespace {

constexpr double kControllabilityTol = 1e-9;
constexpr double kStructureTol = 1e-9;

}  // namespace

double controllability_margin(const SquareMatrix& a, const Matrix& b) {
  const Index n = a.dim();
  Matrix ctrb(n, n * b.cols());
  Matrix block = b;
  for (Index i = 0; i < n; ++i) {
    ctrb.middleCols(i * b.cols(), b.cols()) = block;
    block = a.mat() * block;
  }
  Eigen::JacobiSVD<Matrix> svd(ctrb);
  const Vector& sv = svd.singularValues();
  if (sv.size() < n || sv(0) == 0.0) {
    return 0.0;
  }
  return sv(n - 1) / sv(0);
}

LinearSystem::LinearSystem(SquareMatrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
  if (b_.rows() != a_.dim() || b_.cols() == 0) {
    std::ostringstream os;
    os << "LinearSystem: B is " << b_.rows() << "x" << b_.cols() << " but A is " << a_.dim()
       << "x" << a_.dim();
    throw DimensionError(os.str());
  }
  if (!b_.allFinite()) {
    throw NumericError("LinearSystem: non-finite entry in B");
  }
  const double abscissa = spectral_abscissa(a_);
  if (!(abscissa < 0.0)) {
    std::ostringstream os;
    os << "LinearSystem: A is not Hurwitz (max eigenvalue real part " << abscissa << ")";
    throw StabilityError(os.str());
  }
  if (!(controllability_margin(a_, b_) > kControllabilityTol)) {
    throw StabilityError("LinearSystem: (A, B) is not controllable");
  }
}

SymMatrix LinearSystem::diffusion() const { return SymMatrix(2.0 * b_ * b_.transpose()); }

std::optional<double> LinearSystem::gradient_beta() const {
  const Matrix& am = a_.mat();
  if (max_abs(am - am.transpose()) > kStructureTol * (1.0 + max_abs(am))) {
    return std::nullopt;
  }
  const Matrix bbt = b_ * b_.transpose();
  const double s = bbt.trace() / static_cast<double>(dim());
  const Matrix iso = s * Matrix::Identity(dim(), dim());
  if (!(s > 0.0) || max_abs(bbt - iso) > kStructureTol * (1.0 + s)) {
    return std::nullopt;
  }
  return 1.0 / s;
}

void StepConfig::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ValidationError("StepConfig: step size h must be positive");
  }
  if (steps < 0) {
    throw ValidationError("StepConfig: step count must be non-negative");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ValidationError("StepConfig: beta must be positive");
  }
}

EquipartitionFrame make_equipartition(const LinearSystem& sys) {
  const Index n = sys.dim();
  SpdMatrix pinf(lyapunov_solve(sys.a(), sys.diffusion()).mat());
  SpdMatrix root = sqrt_spd(pinf);
  SpdMatrix inv_root = inv_sqrt_spd(pinf);
  const double theta = pinf.mat().trace() / static_cast<double>(n);
  SquareMatrix aep(inv_root.mat() * sys.a().mat() * root.mat());
  Matrix bep = inv_root.mat() * sys.b();
  auto [sym, skew] = sym_skew_split(aep);
  return EquipartitionFrame{std::move(pinf), std::move(root), std::move(inv_root), theta,
                            std::move(aep), std::move(bep), std::move(sym), std::move(skew)};
}

FrameResiduals frame_residuals(const LinearSystem& sys, const EquipartitionFrame& frame) {
  const Matrix& a = sys.a().mat();
  const Matrix& p = frame.pinf.mat();
  const Matrix& aep = frame.aep.mat();
  const double th = frame.theta;
  FrameResiduals r{};
  r.lyapunov = max_abs(a * p + p * a.transpose() + sys.diffusion().mat());
  r.theta = std::abs(th - p.trace() / static_cast<double>(sys.dim()));
  r.equipartition =
      max_abs(th * aep + th * aep.transpose() + 2.0 * th * frame.bep * frame.bep.transpose());
  r.split = max_abs(frame.aep_sym.mat() + frame.aep_skew.mat() - aep);
  return r;
}

SymmetrizedPair symmetrized_pair(const EquipartitionFrame& frame, double t) {
  const Matrix rot_back = expm(frame.aep_skew, -t).mat();
  const Matrix rot = expm(frame.aep_skew, t).mat();
  return SymmetrizedPair{SymMatrix(rot_back * frame.aep_sym.mat() * rot), rot_back * frame.bep};
}

PairResiduals pair_residuals(const EquipartitionFrame& frame, const SymmetrizedPair& pair) {
  const Matrix& f = pair.f.mat();
  const Matrix ggt = pair.g * pair.g.transpose();
  const double th = frame.theta;
  Eigen::SelfAdjointEigenSolver<Matrix> es(f, Eigen::EigenvaluesOnly);
  return PairResiduals{max_abs(ggt + f), max_abs(2.0 * th * f + 2.0 * th * ggt),
                       es.eigenvalues().maxCoeff()};
}

Gaussian jko_step_symmetric(const Gaussian& g_prev, const SpdMatrix& gamma, double beta,
                            double h) {
  const Index n = g_prev.dim();
  if (gamma.dim() != n) {
    throw DimensionError("jko_step_symmetric: Gamma dimension mismatch");
  }
  if (!(beta > 0.0)) {
    throw ValidationError("jko_step_symmetric: beta must be positive");
  }
  if (!(h >= 0.0) || !std::isfinite(h)) {
    throw ValidationError("jko_step_symmetric: step size must be non-negative");
  }
  if (h == 0.0) {
    return g_prev;
  }
  const Matrix resolvent = Matrix::Identity(n, n) + h * gamma.mat();
  Vector mean = resolvent.llt().solve(g_prev.mean());

  const SpdMatrix inv_root0 = inv_sqrt_spd(g_prev.cov());
  const SpdMatrix rhs(inv_root0.mat() * resolvent * inv_root0.mat());
  const SpdMatrix z = quadratic_matrix_solve(beta / h, rhs);
  const SpdMatrix z_inv_sq = z.map_eigenvalues([](double v) { return 1.0 / (v * v); });
  SpdMatrix cov(inv_root0.mat() * z_inv_sq.mat() * inv_root0.mat());
  return Gaussian(std::move(mean), std::move(cov));
}

Vector jko_step_general_mean(const Vector& mu_prev, const EquipartitionFrame& frame, int k,
                             double h) {
  const Index n = frame.aep.dim();
  if (mu_prev.size() != n) {
    throw DimensionError("jko_step_general_mean: mean dimension mismatch");
  }
  if (k < 1) {
    throw ValidationError("jko_step_general_mean: step index must be at least 1");
  }
  if (!(h >= 0.0)) {
    throw ValidationError("jko_step_general_mean: step size must be non-negative");
  }
  const double t = k * h;
  const SymmetrizedPair pair = symmetrized_pair(frame, t);
  const Matrix resolvent = Matrix::Identity(n, n) - h * pair.f.mat();

  Vector v = frame.pinf_inv_sqrt.mat() * mu_prev;
  v = expm(frame.aep_skew, -t).mat() * v;
  v = expm(frame.aep_skew, h).mat() * v;
  // F ⪯ 0, so I − hF ⪰ I.
  v = resolvent.llt().solve(v);
  v = expm(frame.aep_skew, t).mat() * v;
  return frame.pinf_sqrt.mat() * v;
}

SpdMatrix jko_step_general_cov(const SpdMatrix& p_prev, const LinearSystem& sys, double h) {
  if (p_prev.dim() != sys.dim()) {
    throw DimensionError("jko_step_general_cov: covariance dimension mismatch");
  }
  if (!(h >= 0.0) || !std::isfinite(h)) {
    throw ValidationError("jko_step_general_cov: step size must be non-negative");
  }
  const Matrix& a = sys.a().mat();
  const Matrix& p = p_prev.mat();
  const Matrix next = p + h * (a * p + p * a.transpose() + sys.diffusion().mat());
  try {
    return SpdMatrix(next);
  } catch (const SingularityError&) {
    std::ostringstream os;
    os << "jko_step_general_cov: covariance left the SPD cone at h = " << h
       << "; use a smaller step size";
    throw StepSizeError(os.str());
  }
}

std::vector<TimedGaussian> propagate(const LinearSystem& sys, const Gaussian& g0,
                                     const StepConfig& cfg, PropagationMode mode) {
  cfg.validate();
  if (g0.dim() != sys.dim()) {
    throw DimensionError("propagate: initial Gaussian dimension does not match the system");
  }
  std::vector<TimedGaussian> path;
  path.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  path.push_back({0.0, g0});

  if (mode == PropagationMode::kSymmetricExact) {
    const Matrix& a = sys.a().mat();
    if (max_abs(a - a.transpose()) > kStructureTol * (1.0 + max_abs(a))) {
      throw ModeMismatchError("propagate: symmetric-exact mode requires a symmetric drift A");
    }
    const Matrix bbt = sys.b() * sys.b().transpose();
    const Matrix target = Matrix::Identity(sys.dim(), sys.dim()) / cfg.beta;
    if (max_abs(bbt - target) > kStructureTol * (1.0 + max_abs(target))) {
      throw ModeMismatchError(
          "propagate: symmetric-exact mode requires B·Bᵀ = I/beta for the configured beta");
    }
    const SpdMatrix gamma(-a);
    for (int k = 1; k <= cfg.steps; ++k) {
      path.push_back({k * cfg.h, jko_step_symmetric(path.back().g, gamma, cfg.beta, cfg.h)});
    }
    return path;
  }

  const EquipartitionFrame frame = make_equipartition(sys);
  for (int k = 1; k <= cfg.steps; ++k) {
    const Gaussian& prev = path.back().g;
    Vector mean = jko_step_general_mean(prev.mean(), frame, k, cfg.h);
    SpdMatrix cov = jko_step_general_cov(prev.cov(), sys, cfg.h);
    path.push_back({k * cfg.h, Gaussian(std::move(mean), std::move(cov))});
  }
  return path;
}

}  // namespace proxflow
