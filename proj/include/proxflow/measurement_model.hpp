#pragma once

#include "proxflow/matrix_core.hpp"

namespace proxflow {

/// dz = C x dt + dv with E[dv dvᵀ] = R dt.
class MeasurementModel {
 public:
  MeasurementModel(Matrix c, SpdMatrix r);

  const Matrix& c() const noexcept { return c_; }
  const SpdMatrix& r() const noexcept { return r_; }
  const SpdMatrix& r_inv() const noexcept { return r_inv_; }
  Index state_dim() const noexcept { return c_.cols(); }
  Index meas_dim() const noexcept { return c_.rows(); }

  /// CᵀR⁻¹C.
  Matrix information() const;
  /// CᵀR⁻¹, the static observer gain.
  Matrix observer_gain() const;

 private:
  Matrix c_;
  SpdMatrix r_;
  SpdMatrix r_inv_;
};

}  // namespace proxflow
