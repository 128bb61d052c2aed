#pragma once

#include <Eigen/Dense>

namespace igb {

/// Row-major so that one row is one sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// True iff every entry is finite. inf * 0 and nan * 0 are nan, so the
/// vectorized sum is exactly 0 only for finite input.
template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return (x.derived().array() * 0.0).sum() == 0.0;
}

}  // namespace igb
