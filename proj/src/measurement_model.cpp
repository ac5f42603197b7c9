#include "proxflow/measurement_model.hpp"

#include <sstream>
#include <utility>

#include "proxflow/errors.hpp"

namespace proxflow {

MeasurementModel::MeasurementModel(Matrix c, SpdMatrix r)
    : c_(std::move(c)), r_(std::move(r)), r_inv_(inv_spd(r_)) {
  if (c_.rows() != r_.dim() || c_.cols() == 0) {
    std::ostringstream os;
    os << "MeasurementModel: C is " << c_.rows() << "x" << c_.cols() << " but R is " << r_.dim()
       << "x" << r_.dim();
    throw DimensionError(os.str());
  }
  if (!c_.allFinite()) {
    throw NumericError("MeasurementModel: non-finite entry in C");
  }
}

Matrix MeasurementModel::information() const {
  Matrix info = c_.transpose() * r_inv_.mat() * c_;
  return 0.5 * (info + info.transpose());
}

Matrix MeasurementModel::observer_gain() const { return c_.transpose() * r_inv_.mat(); }

}  // namespace proxflow
