#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace msml {

/// Dense row-major matrix of doubles. Used for activations, weights and
/// anything else that is two-dimensional.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  Matrix transposed() const;

  static Matrix identity(std::size_t n);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B^T, the natural layout for y = x W^T with W stored (out x in).
Matrix matmul_abt(const Matrix& a, const Matrix& b);
// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B, accumulated into `out` when `accumulate` is set.
void matmul_atb(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frobenius_norm(const Matrix& a);

/// Thread count used by the dense kernels above. Work is split by output
/// rows and each row is reduced serially, so results do not depend on it.
void set_num_threads(int n);
int num_threads() noexcept;

}  // namespace msml
