#pragma once

#include <vector>

#include "msml/tensor.hpp"

namespace msml {

/// Eigenpairs of a real symmetric matrix. `vectors` holds one unit
/// eigenvector per row, matching `values` which are sorted descending.
/// Each eigenvector is signed so that its largest-magnitude entry is positive.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
  int sweeps = 0;
};

inline constexpr std::size_t kMaxEigenDimension = 64;

/// Cyclic Jacobi rotations. Throws NotSymmetric when |a_ij - a_ji| exceeds
/// 1e-9 * max(1, max|a|), DimensionMismatch for non-square or n > 64, and
/// NoConvergence when `max_sweeps` is exhausted.
SymmetricEigen eigendecompose_symmetric(const Matrix& a, int max_sweeps = 100);

}  // namespace msml
