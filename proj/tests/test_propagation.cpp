#include <doctest.h>

#include <cmath>

#include "proxflow/errors.hpp"
#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/propagation.hpp"
#include "proxflow/reference_oracles.hpp"
#include "support.hpp"

using namespace proxflow;
using testing_support::max_diff;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

LinearSystem scalar_system(double a, double b) {
  return LinearSystem(SquareMatrix(Matrix::Constant(1, 1, a)), Matrix::Constant(1, 1, b));
}

Gaussian scalar(double mu, double p) {
  return Gaussian(Vector::Constant(1, mu), SpdMatrix::scalar(p));
}

LinearSystem random_system(proxflow::Rng& rng, Index n) {
  return LinearSystem(testing_support::random_hurwitz(rng, n),
                      testing_support::random_matrix(rng, n, n));
}

/// Random SPD Γ with eigenvalues spread over roughly [0.1, 10].
SpdMatrix random_gamma(proxflow::Rng& rng, Index n) {
  const SpdMatrix base = random_spd(rng, n);
  return base.map_eigenvalues([&](double) { return testing_support::log_uniform(rng, 0.1, 10.0); });
}

Vector sorted_eigenvalues(const Matrix& sym) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues();
}

}  // namespace

TEST_CASE("linear system validation") {
  CHECK_THROWS_AS(scalar_system(0.5, 1.0), StabilityError);
  CHECK_THROWS_AS(LinearSystem(SquareMatrix(mat2(-1, 0, 0, -2)), Matrix::Ones(3, 1)),
                  DimensionError);
  Matrix b(2, 1);
  b << 1, 0;
  CHECK_THROWS_AS(LinearSystem(SquareMatrix(mat2(-1, 0, 0, -2)), b), StabilityError);
  CHECK_THROWS_AS(LinearSystem(SquareMatrix(mat2(-1, 1, 0, -2)), b), StabilityError);
  b << 0, 1;
  CHECK_NOTHROW(LinearSystem(SquareMatrix(mat2(-1, 1, 0, -2)), b));
  CHECK(scalar_system(-1, 1).gradient_beta().value() == doctest::Approx(1.0));
  CHECK(scalar_system(-1, 2).gradient_beta().value() == doctest::Approx(0.25));
  CHECK_FALSE(LinearSystem(SquareMatrix(mat2(-1, 2, 0, -3)), Matrix::Identity(2, 2))
                  .gradient_beta()
                  .has_value());
}

TEST_CASE("step config validation") {
  CHECK_THROWS_AS((StepConfig{0.0, 1}.validate()), ValidationError);
  CHECK_THROWS_AS((StepConfig{0.1, -1}.validate()), ValidationError);
  CHECK_THROWS_AS((StepConfig{0.1, 1, 0.0}.validate()), ValidationError);
  CHECK_NOTHROW((StepConfig{0.1, 0}.validate()));
}

TEST_CASE("equipartition examples") {
  const EquipartitionFrame id =
      make_equipartition(LinearSystem(SquareMatrix(-Matrix::Identity(2, 2)), Matrix::Identity(2, 2)));
  CHECK(max_diff(id.pinf.mat(), Matrix::Identity(2, 2)) < 1e-14);
  CHECK(id.theta == doctest::Approx(1.0));
  CHECK(max_diff(id.aep.mat(), -Matrix::Identity(2, 2)) < 1e-14);
  CHECK(max_diff(id.bep, Matrix::Identity(2, 2)) < 1e-14);

  const EquipartitionFrame s = make_equipartition(scalar_system(-2, 1));
  CHECK(s.pinf(0, 0) == doctest::Approx(0.5));
  CHECK(s.theta == doctest::Approx(0.5));
  CHECK(s.aep(0, 0) == doctest::Approx(-2.0));
  CHECK(s.bep(0, 0) == doctest::Approx(std::sqrt(2.0)));

  proxflow::Rng rng(31);
  const SpdMatrix gamma = random_spd(rng, 3);
  const LinearSystem sym(SquareMatrix(-gamma.mat()), testing_support::random_matrix(rng, 3, 3));
  const EquipartitionFrame f = make_equipartition(sym);
  const Vector ev = Eigen::EigenSolver<Matrix>(f.aep.mat()).eigenvalues().real();
  Vector sorted = ev;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  CHECK(max_diff(sorted, sorted_eigenvalues(-gamma.mat())) < 1e-9);
}

TEST_CASE("symmetrized pair examples") {
  proxflow::Rng rng(32);
  const LinearSystem sys = random_system(rng, 3);
  const EquipartitionFrame f = make_equipartition(sys);
  const SymmetrizedPair at0 = symmetrized_pair(f, 0.0);
  CHECK(max_diff(at0.f.mat(), f.aep_sym.mat()) < 1e-15);
  CHECK(max_diff(at0.g, f.bep) < 1e-15);

  const SymmetrizedPair later = symmetrized_pair(f, 0.7);
  CHECK(max_diff(sorted_eigenvalues(later.f.mat()), sorted_eigenvalues(f.aep_sym.mat())) < 1e-9);

  const LinearSystem symmetric(SquareMatrix(mat2(-2, 0.5, 0.5, -1)), Matrix::Identity(2, 2));
  const EquipartitionFrame fs = make_equipartition(symmetric);
  for (double t : {0.0, 0.3, 5.0}) {
    CHECK(max_diff(symmetrized_pair(fs, t).f.mat(), fs.aep.mat()) < 1e-12);
  }
}

TEST_CASE("property: frame and pair invariants on random systems") {
  proxflow::Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + trial % 5;
    const LinearSystem sys = random_system(rng, n);
    const EquipartitionFrame f = make_equipartition(sys);
    const FrameResiduals r = frame_residuals(sys, f);
    CHECK(r.lyapunov < 1e-9);
    CHECK(r.theta < 1e-12);
    CHECK(r.equipartition < 1e-9);
    CHECK(r.split < 1e-14 * (1.0 + max_abs(f.aep.mat())));
    CHECK(max_abs(f.aep_skew.mat() + f.aep_skew.mat().transpose()) < 1e-14 * (1.0 + max_abs(f.aep.mat())));
    for (double t : {0.0, 0.25, 1.3}) {
      const PairResiduals pr = pair_residuals(f, symmetrized_pair(f, t));
      CHECK(pr.noise_balance < 1e-9);
      CHECK(pr.lyapunov < 1e-9);
      CHECK(pr.max_eigenvalue <= 1e-9);
    }
  }
}

TEST_CASE("jko symmetric step examples") {
  const SpdMatrix one = SpdMatrix::scalar(1.0);
  const Gaussian fixed = jko_step_symmetric(scalar(0, 1), one, 1.0, 0.1);
  CHECK(std::abs(fixed.mean()(0)) == 0.0);
  CHECK(fixed.cov()(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  const Gaussian step = jko_step_symmetric(scalar(2, 2), one, 1.0, 0.1);
  const double z = 5.0 * (-1.0 + std::sqrt(1.22));
  CHECK(step.mean()(0) == doctest::Approx(2.0 / 1.1).epsilon(1e-14));
  CHECK(step.cov()(0, 0) == doctest::Approx(1.0 / (z * z) / 2.0).epsilon(1e-13));
  CHECK(step.cov()(0, 0) == doctest::Approx(1.830194).epsilon(1e-6));
  CHECK(std::abs(step.cov()(0, 0) - (1.0 + std::exp(-0.2))) < 0.1);

  const Gaussian g0 = scalar(2, 2);
  CHECK(max_diff(jko_step_symmetric(g0, one, 1.0, 0.0).cov().mat(), g0.cov().mat()) == 0.0);
  double prev = 0.0;
  for (double h : {1e-3, 5e-4, 2.5e-4}) {
    const Gaussian g = jko_step_symmetric(g0, one, 1.0, h);
    const double d = std::abs(g.mean()(0) - 2.0) + std::abs(g.cov()(0, 0) - 2.0);
    if (prev > 0.0) {
      CHECK(prev / d == doctest::Approx(2.0).epsilon(0.01));
    }
    prev = d;
  }
}

TEST_CASE("property: Gibbs density is a fixed point of the symmetric step") {
  proxflow::Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 4;
    const SpdMatrix gamma = random_gamma(rng, n);
    const double beta = testing_support::log_uniform(rng, 0.1, 10.0);
    const double h = testing_support::log_uniform(rng, 1e-3, 0.1);
    const Gaussian gibbs(Vector::Zero(n), SpdMatrix(inv_spd(gamma).mat() / beta));
    const Gaussian out = jko_step_symmetric(gibbs, gamma, beta, h);
    CHECK(max_abs(out.mean()) < 1e-10);
    CHECK(max_diff(out.cov().mat(), gibbs.cov().mat()) < 1e-10);
  }
}

TEST_CASE("property: symmetric step is a stationary point of its objective") {
  proxflow::Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 4;
    const SpdMatrix gamma = random_gamma(rng, n);
    const double beta = testing_support::log_uniform(rng, 0.1, 10.0);
    const double h = testing_support::log_uniform(rng, 1e-3, 0.1);
    const Gaussian g0 = testing_support::random_gaussian(rng, n);
    const Gaussian g = jko_step_symmetric(g0, gamma, beta, h);
    const Matrix& p = g.cov().mat();
    const Vector grad_mu = (g.mean() - g0.mean()) + h * gamma.mat() * g.mean();
    const Matrix grad_p = 0.5 * Matrix::Identity(n, n) - grad_w2_cross(g.cov(), g0.cov()).mat() +
                          h * (0.5 * gamma.mat() - inv_spd(g.cov()).mat() / (2.0 * beta));
    CHECK(max_abs(grad_mu) < 1e-8);
    CHECK(max_abs(grad_p) < 1e-8);
    CHECK(max_abs(p - p.transpose()) == 0.0);
  }
}

TEST_CASE("property: symmetric covariance step matches the first-order recursion") {
  proxflow::Rng rng(36);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + trial % 4;
    const SpdMatrix gamma = random_gamma(rng, n);
    const double beta = testing_support::log_uniform(rng, 0.1, 10.0);
    const Gaussian g0 = testing_support::random_gaussian(rng, n);
    const Matrix& p = g0.cov().mat();
    const Matrix drift = -gamma.mat() * p - p * gamma.mat() + 2.0 / beta * Matrix::Identity(n, n);
    const auto defect = [&](double h) {
      return max_abs(jko_step_symmetric(g0, gamma, beta, h).cov().mat() - p - h * drift);
    };
    const double ratio = defect(2e-4) / defect(1e-4);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("general mean step") {
  proxflow::Rng rng(37);
  const SpdMatrix gamma = random_spd(rng, 2);
  const LinearSystem sym(SquareMatrix(-gamma.mat()), Matrix::Identity(2, 2));
  const EquipartitionFrame fs = make_equipartition(sym);
  const Vector mu = standard_normal(rng, 2);
  for (int k : {1, 7}) {
    const Vector expected = (Matrix::Identity(2, 2) + 0.05 * gamma.mat()).partialPivLu().solve(mu);
    CHECK(max_diff(jko_step_general_mean(mu, fs, k, 0.05), expected) < 1e-12);
  }

  const LinearSystem sys(SquareMatrix(mat2(-1, 2, 0, -3)), Matrix::Identity(2, 2));
  const EquipartitionFrame f = make_equipartition(sys);
  CHECK(max_abs(jko_step_general_mean(Vector::Zero(2), f, 3, 0.01)) == 0.0);
  CHECK_THROWS_AS(jko_step_general_mean(mu, f, 0, 0.01), ValidationError);

  for (int k : {1, 5, 40}) {
    const auto defect = [&](double h) {
      const Vector euler = mu + h * sys.a().mat() * mu;
      return (jko_step_general_mean(mu, f, k, h) - euler).norm();
    };
    CHECK(defect(1e-3) / defect(5e-4) == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("general covariance step") {
  proxflow::Rng rng(38);
  const LinearSystem sys = random_system(rng, 3);
  const EquipartitionFrame f = make_equipartition(sys);
  CHECK(max_diff(jko_step_general_cov(f.pinf, sys, 0.05).mat(), f.pinf.mat()) < 1e-12);

  const LinearSystem s = scalar_system(-1, 1);
  CHECK(jko_step_general_cov(SpdMatrix::scalar(2.0), s, 0.1)(0, 0) ==
        doctest::Approx(1.8).epsilon(1e-14));
  CHECK(jko_step_general_cov(SpdMatrix::scalar(2.0), s, 0.0)(0, 0) == 2.0);
  CHECK_THROWS_AS(jko_step_general_cov(SpdMatrix::scalar(2.0), scalar_system(-1, 0.5), 1.0),
                  StepSizeError);
}

TEST_CASE("propagate") {
  const LinearSystem s = scalar_system(-1, 1);
  const Gaussian g0 = scalar(2, 2);
  const auto none = propagate(s, g0, StepConfig{0.1, 0}, PropagationMode::kSymmetricExact);
  REQUIRE(none.size() == 1);
  CHECK(none[0].t == 0.0);
  CHECK(none[0].g.cov()(0, 0) == 2.0);

  const auto path = propagate(s, g0, StepConfig{0.01, 10}, PropagationMode::kSymmetricExact);
  REQUIRE(path.size() == 11);
  CHECK(path.back().t == doctest::Approx(0.1));
  const double exact = exact_cov_closed_form(SpdMatrix::scalar(1), 1.0, g0.cov(), 0.1)(0, 0);
  CHECK(std::abs(path.back().g.cov()(0, 0) - exact) < 0.01);

  const LinearSystem gen(SquareMatrix(mat2(-1, 2, 0, -3)), Matrix::Identity(2, 2));
  Vector mu0(2);
  mu0 << 1, 1;
  const Gaussian g2(mu0, SpdMatrix(mat2(2, 0, 0, 1)));
  const auto gpath = propagate(gen, g2, StepConfig{0.01, 50}, PropagationMode::kGeneralFirstOrder);
  CHECK((gpath.back().g.mean() - exact_mean(gen, mu0, 0.5)).norm() < 0.02);

  CHECK_THROWS_AS(propagate(gen, g2, StepConfig{0.01, 5}, PropagationMode::kSymmetricExact),
                  ModeMismatchError);
  CHECK_THROWS_AS(propagate(s, g0, StepConfig{0.01, 5, 2.0}, PropagationMode::kSymmetricExact),
                  ModeMismatchError);
  CHECK_THROWS_AS(propagate(gen, g0, StepConfig{0.01, 5}, PropagationMode::kGeneralFirstOrder),
                  DimensionError);
}

TEST_CASE("property: order-one convergence of the symmetric scheme") {
  const LinearSystem s = scalar_system(-1, 1);
  const Gaussian g0 = scalar(2, 2);
  const double mean_t = exact_mean(s, g0.mean(), 1.0)(0);
  const double cov_t = exact_cov_closed_form(SpdMatrix::scalar(1), 1.0, g0.cov(), 1.0)(0, 0);
  double prev_mean = 0.0;
  double prev_cov = 0.0;
  for (double h : {0.04, 0.02, 0.01, 0.005}) {
    const auto path = propagate(s, g0, StepConfig{h, static_cast<int>(std::lround(1.0 / h))},
                                PropagationMode::kSymmetricExact);
    const double em = std::abs(path.back().g.mean()(0) - mean_t);
    const double ec = std::abs(path.back().g.cov()(0, 0) - cov_t);
    if (prev_mean > 0.0) {
      CHECK(prev_mean / em >= 1.7);
      CHECK(prev_mean / em <= 2.3);
      CHECK(prev_cov / ec >= 1.7);
      CHECK(prev_cov / ec <= 2.3);
    }
    prev_mean = em;
    prev_cov = ec;
  }
}
