#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include <Eigen/Dense>

namespace mpfk {

/// Row-major dense matrix; every numeric kernel in the library uses this layout.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using DenseMatrix = Matrix<double>;
using DenseVector = Vector<double>;
using Index = Eigen::Index;

/// Position of the first non-finite entry, or {-1, -1} if all entries are finite.
template <typename Derived>
std::pair<Index, Index> first_non_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) return {i, j};
    }
  }
  return {-1, -1};
}

}  // namespace mpfk
