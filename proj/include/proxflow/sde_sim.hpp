#pragma once

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/measurement_model.hpp"
#include "proxflow/propagation.hpp"

namespace proxflow {

/// xoshiro256** seeded through splitmix64. Stream s of a seed is the base
/// state advanced by s calls of the 2^128 jump, so streams never overlap.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, unsigned stream = 0);

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Box–Muller: u1, u2 uniform with u1 = 0 rejected; both outputs of a pair
  /// are used in order r·cos(2πu2), r·sin(2πu2).
  double normal();

 private:
  void jump() noexcept;

  std::array<std::uint64_t, 4> s_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

Vector standard_normal(Rng& rng, Index n);

/// G·Gᵀ/n + floor·I with G standard normal; eigenvalues stay O(1).
SpdMatrix random_spd(Rng& rng, Index n, double floor = 0.1);

struct SimPath {
  std::vector<Vector> states;      ///< x_0 … x_K
  std::vector<Vector> increments;  ///< Δz_1 … Δz_K, Δz_k over [(k−1)h, kh]
  double h;
  std::uint64_t seed;
};

/// Either the exact starting state or a Gaussian to draw it from.
using InitialState = std::variant<Vector, Gaussian>;

/// Multipliers on the process and measurement noise; zero gives the
/// deterministic Euler path.
struct NoiseScale {
  double process = 1.0;
  double measurement = 1.0;
};

/// Euler–Maruyama:
///   x_{k+1} = x_k + hAx_k + √(2h)·B·ξ_k
///   Δz_{k+1} = hCx_k + √h·R^{1/2}·η_k
/// ξ, η and the x0 draw come from streams 1, 2 and 3 of the seed.
SimPath simulate(const LinearSystem& sys, const MeasurementModel& meas, const InitialState& x0,
                 const StepConfig& cfg, std::uint64_t seed, NoiseScale noise = {});

/// y_k = Δz_k / h.
std::vector<Vector> increments_to_y(const SimPath& path);

/// Path at step factor·h: every factor-th state and partial sums of the
/// increments over each coarse interval.
SimPath coarsen(const SimPath& fine, int factor);

}  // namespace proxflow
