#include "msml/eigen_sym.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msml/error.hpp"

namespace msml {

namespace {

double off_diagonal_sq(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  return 2.0 * s;
}

}  // namespace

SymmetricEigen eigendecompose_symmetric(const Matrix& input, int max_sweeps) {
  const std::size_t n = input.rows();
  if (n == 0 || input.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "eigendecomposition needs a non-empty square matrix");
  if (n > kMaxEigenDimension)
    throw Error(ErrorCode::DimensionMismatch, "matrix dimension exceeds 64");

  double max_abs = 0.0;
  for (double v : input.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NotSymmetric, "matrix has a non-finite entry");
    max_abs = std::max(max_abs, std::abs(v));
  }
  const double sym_tol = 1e-9 * std::max(1.0, max_abs);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > sym_tol)
        throw Error(ErrorCode::NotSymmetric, "matrix is not symmetric within 1e-9");
      a(i, j) = 0.5 * (input(i, j) + input(j, i));
    }

  Matrix v = Matrix::identity(n);
  const double scale_sq = std::max(off_diagonal_sq(a) + [&] {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += a(i, i) * a(i, i);
    return d;
  }(), std::numeric_limits<double>::min());
  const double eps = std::numeric_limits<double>::epsilon();

  int sweep = 0;
  for (;; ++sweep) {
    const double off = off_diagonal_sq(a);
    const double tol = static_cast<double>(n) * eps;
    if (off <= tol * tol * scale_sq) break;
    if (sweep >= max_sweeps)
      throw Error(ErrorCode::NoConvergence, "Jacobi did not converge in " + std::to_string(max_sweeps) + " sweeps");

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Entry already below the diagonal's resolution; rotating adds only noise.
        if (sweep > 3 && std::abs(apq) <= eps * 1e-2 * std::min(std::abs(app), std::abs(aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymmetricEigen out;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t col = order[r];
    out.values[r] = a(col, col);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, col)) > std::abs(v(arg, col))) arg = k;
    const double sign = v(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = sign * v(k, col);
  }
  return out;
}

}  // namespace msml
