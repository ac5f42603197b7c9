#include "proxflow/sde_sim.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "proxflow/errors.hpp"

namespace proxflow {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed, unsigned stream) {
  std::uint64_t x = seed;
  for (auto& w : s_) {
    w = splitmix64(x);
  }
  for (unsigned i = 0; i < stream; ++i) {
    jump();
  }
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

void Rng::jump() noexcept {
  static constexpr std::array<std::uint64_t, 4> kJump = {
      0x180EC6D33CFD0ABAULL, 0xD5A61266F0C9392CULL, 0xA9582618E03FC9AAULL,
      0x39ABDC4529B1661CULL};
  std::array<std::uint64_t, 4> acc{};
  for (std::uint64_t word : kJump) {
    for (int b = 0; b < 64; ++b) {
      if (word & (std::uint64_t{1} << b)) {
        for (std::size_t i = 0; i < 4; ++i) {
          acc[i] ^= s_[i];
        }
      }
      next_u64();
    }
  }
  s_ = acc;
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 == 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

Vector standard_normal(Rng& rng, Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    v(i) = rng.normal();
  }
  return v;
}

SpdMatrix random_spd(Rng& rng, Index n, double floor) {
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      g(i, j) = rng.normal();
    }
  }
  Matrix p = g * g.transpose() / static_cast<double>(n);
  p.diagonal().array() += floor;
  return SpdMatrix(0.5 * (p + p.transpose()));
}

SimPath simulate(const LinearSystem& sys, const MeasurementModel& meas, const InitialState& x0,
                 const StepConfig& cfg, std::uint64_t seed, NoiseScale noise) {
  cfg.validate();
  const Index n = sys.dim();
  if (meas.state_dim() != n) {
    throw DimensionError("simulate: measurement model and system dimensions disagree");
  }
  Rng process(seed, 1);
  Rng measurement(seed, 2);

  Vector x;
  if (const auto* v = std::get_if<Vector>(&x0)) {
    x = *v;
  } else {
    const Gaussian& g = std::get<Gaussian>(x0);
    Rng initial(seed, 3);
    const Matrix l = g.cov().mat().llt().matrixL();
    x = g.mean() + l * standard_normal(initial, n);
  }
  if (x.size() != n) {
    throw DimensionError("simulate: initial state has the wrong dimension");
  }

  const double h = cfg.h;
  const Matrix step = Matrix::Identity(n, n) + h * sys.a().mat();
  const Matrix b = std::sqrt(2.0 * h) * noise.process * sys.b();
  const Matrix c = h * meas.c();
  const Matrix r_half = std::sqrt(h) * noise.measurement * sqrt_spd(meas.r()).mat();

  SimPath path{{}, {}, h, seed};
  path.states.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  path.increments.reserve(static_cast<std::size_t>(cfg.steps));
  path.states.push_back(x);
  for (int k = 0; k < cfg.steps; ++k) {
    const Vector xi = standard_normal(process, b.cols());
    const Vector eta = standard_normal(measurement, r_half.cols());
    path.increments.push_back(c * x + r_half * eta);
    x = step * x + b * xi;
    path.states.push_back(x);
  }
  return path;
}

std::vector<Vector> increments_to_y(const SimPath& path) {
  if (!(path.h > 0.0)) {
    throw ValidationError("increments_to_y: step size must be positive");
  }
  std::vector<Vector> y;
  y.reserve(path.increments.size());
  for (const Vector& dz : path.increments) {
    y.push_back(dz / path.h);
  }
  return y;
}

SimPath coarsen(const SimPath& fine, int factor) {
  if (factor < 1 || fine.increments.size() % static_cast<std::size_t>(factor) != 0) {
    std::ostringstream os;
    os << "coarsen: factor " << factor << " does not divide " << fine.increments.size()
       << " steps";
    throw ValidationError(os.str());
  }
  const auto f = static_cast<std::size_t>(factor);
  SimPath out{{}, {}, fine.h * factor, fine.seed};
  const std::size_t coarse_steps = fine.increments.size() / f;
  out.states.reserve(coarse_steps + 1);
  out.increments.reserve(coarse_steps);
  out.states.push_back(fine.states.front());
  for (std::size_t k = 0; k < coarse_steps; ++k) {
    Vector sum = fine.increments[k * f];
    for (std::size_t j = 1; j < f; ++j) {
      sum += fine.increments[k * f + j];
    }
    out.increments.push_back(std::move(sum));
    out.states.push_back(fine.states[(k + 1) * f]);
  }
  return out;
}

}  // namespace proxflow
