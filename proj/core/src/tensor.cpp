#include "msml/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <thread>

#include "msml/error.hpp"

namespace msml {

namespace {

std::atomic<int> g_threads{1};

// Runs fn(begin, end) over [0, n) split into contiguous blocks.
template <typename Fn>
void parallel_rows(std::size_t n, std::size_t work_per_row, Fn&& fn) {
  const int threads = g_threads.load(std::memory_order_relaxed);
  if (threads <= 1 || n < 2 || n * work_per_row < 32768) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  const std::size_t chunk = (n + t - 1) / t;
  std::vector<std::jthread> pool;
  pool.reserve(t - 1);
  for (std::size_t i = 1; i < t; ++i) {
    const std::size_t b = i * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InconsistentShape: return "InconsistentShape";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyBucket: return "EmptyBucket";
    case ErrorCode::DegenerateBand: return "DegenerateBand";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidRule: return "InvalidRule";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::IncomparableArchitectures: return "IncomparableArchitectures";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "matmul_abt inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  const std::size_t k = a.cols();
  parallel_rows(a.rows(), b.rows() * k, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* ai = a.data() + i * k;
      double* ci = c.data() + i * b.rows();
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const double* bj = b.data() + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        ci[j] = s;
      }
    }
  });
  return c;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  parallel_rows(a.rows(), n * k, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* ci = c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a(i, p);
        if (aip == 0.0) continue;
        const double* bp = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  });
  return c;
}

void matmul_atb(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.rows() != b.rows())
    throw Error(ErrorCode::ShapeMismatch, "matmul_atb inner dimensions differ");
  if (!accumulate || out.rows() != a.cols() || out.cols() != b.cols()) {
    if (accumulate && !out.empty())
      throw Error(ErrorCode::ShapeMismatch, "matmul_atb accumulator has wrong shape");
    out = Matrix(a.cols(), b.cols());
  }
  const std::size_t m = a.rows();
  const std::size_t n = b.cols();
  // Parallel over output rows (columns of a); each output row sums over m in order.
  parallel_rows(a.cols(), m * n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* oi = out.data() + i * n;
      for (std::size_t r = 0; r < m; ++r) {
        const double ari = a(r, i);
        if (ari == 0.0) continue;
        const double* br = b.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) oi[j] += ari * br[j];
      }
    }
  });
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

void set_num_threads(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

int num_threads() noexcept { return g_threads.load(std::memory_order_relaxed); }

}  // namespace msml
