#include "msml/losses.hpp"

#include <algorithm>
#include <cmath>

#include "msml/error.hpp"

namespace msml {

namespace {

constexpr double kMinNorm = 1e-12;

void validate(const SoftConBatch& b) {
  if (b.z.rows() == 0 || b.z.cols() == 0)
    throw Error(ErrorCode::ShapeMismatch, "batch needs at least one non-empty embedding");
  if (b.z.rows() != b.z_prime.rows() || b.z.cols() != b.z_prime.cols())
    throw Error(ErrorCode::ShapeMismatch, "z and z' must share a shape");
  if (b.labels.rows() != b.z.rows())
    throw Error(ErrorCode::ShapeMismatch, "label rows must match the batch size");
  for (double y : b.labels.values())
    if (y != 0.0 && y != 1.0) throw Error(ErrorCode::ShapeMismatch, "labels must be 0 or 1");
  if (!(b.tau > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "tau must be positive");
  if (!(b.lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be non-negative");
}

struct Normalized {
  Matrix unit;
  std::vector<double> norms;
};

Normalized normalize_rows(const Matrix& m, bool enabled) {
  Normalized out{m, std::vector<double>(m.rows(), 1.0)};
  if (!enabled) return out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = std::max(norm2(m.row(i)), kMinNorm);
    out.norms[i] = n;
    for (double& v : out.unit.row(i)) v /= n;
  }
  return out;
}

// Back through u = v / max(|v|, eps): dv = (du - u (u . du)) / |v|.
Matrix normalize_backward(const Normalized& n, const Matrix& d_unit, bool enabled) {
  if (!enabled) return d_unit;
  Matrix d(d_unit.rows(), d_unit.cols());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto u = n.unit.row(i);
    const auto g = d_unit.row(i);
    if (n.norms[i] <= kMinNorm) {
      for (std::size_t k = 0; k < g.size(); ++k) d(i, k) = g[k] / kMinNorm;
      continue;
    }
    const double ug = dot(u, g);
    for (std::size_t k = 0; k < g.size(); ++k) d(i, k) = (g[k] - u[k] * ug) / n.norms[i];
  }
  return d;
}

// Row-wise softmax of z z'^T / tau and the per-row loss terms.
double contrastive_terms(const Matrix& zu, const Matrix& zpu, double tau, Matrix* softmax_out) {
  Matrix logits = matmul_abt(zu, zpu);
  const std::size_t n = logits.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logits.row(i);
    double mx = -INFINITY;
    for (double& v : row) {
      v /= tau;
      mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    // lse >= row[i] mathematically; clamp rounding so the loss stays >= 0.
    loss += std::max(0.0, lse - row[i]);
    if (softmax_out)
      for (double& v : row) v = std::exp(v - lse);
  }
  if (softmax_out) *softmax_out = std::move(logits);
  return loss;
}

double soft_terms(const Matrix& zu, const Matrix& ysim, bool include_diagonal, Matrix* grad_out) {
  const Matrix x = matmul_abt(zu, zu);
  const std::size_t n = x.rows();
  if (grad_out) *grad_out = Matrix(n, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!include_diagonal && i == j) continue;
      const double xij = x(i, j);
      const double yij = ysim(i, j);
      loss += softplus(xij) - yij * xij;
      if (grad_out) (*grad_out)(i, j) = sigmoid(xij) - yij;
    }
  return loss;
}

}  // namespace

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix label_similarity(const Matrix& labels) {
  const std::size_t n = labels.rows();
  // Squared norms of {0,1} rows are exact integers, so sqrt(|a|^2 |b|^2)
  // equals a . b exactly for identical rows.
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = dot(labels.row(i), labels.row(i));
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (sq[i] == 0.0 || sq[j] == 0.0) continue;
      s(i, j) = dot(labels.row(i), labels.row(j)) / std::sqrt(sq[i] * sq[j]);
    }
  return s;
}

SimilarityMatrices similarity(const SoftConBatch& batch) {
  validate(batch);
  const auto zu = normalize_rows(batch.z, batch.normalize);
  return {matmul_abt(zu.unit, zu.unit), label_similarity(batch.labels)};
}

double contrastive_loss(const SoftConBatch& batch) {
  validate(batch);
  const auto zu = normalize_rows(batch.z, batch.normalize);
  const auto zpu = normalize_rows(batch.z_prime, batch.normalize);
  return contrastive_terms(zu.unit, zpu.unit, batch.tau, nullptr);
}

double soft_loss(const SoftConBatch& batch) {
  validate(batch);
  const auto zu = normalize_rows(batch.z, batch.normalize);
  return soft_terms(zu.unit, label_similarity(batch.labels), batch.include_diagonal, nullptr);
}

double total_loss(const SoftConBatch& batch) {
  const double c = contrastive_loss(batch);
  if (batch.lambda == 0.0) return c;
  return c + batch.lambda * soft_loss(batch);
}

LossGradient total_loss_grad(const SoftConBatch& batch) {
  validate(batch);
  const std::size_t n = batch.z.rows();
  const auto zu = normalize_rows(batch.z, batch.normalize);
  const auto zpu = normalize_rows(batch.z_prime, batch.normalize);

  LossGradient out;
  Matrix p;
  out.loss = contrastive_terms(zu.unit, zpu.unit, batch.tau, &p);
  // dL/dS_ij for S = zu zpu^T: (softmax_ij - [i == j]) / tau.
  for (std::size_t i = 0; i < n; ++i) {
    p(i, i) -= 1.0;
    for (double& v : p.row(i)) v /= batch.tau;
  }
  Matrix d_zu = matmul(p, zpu.unit);
  Matrix d_zpu(zpu.unit.rows(), zpu.unit.cols());
  matmul_atb(p, zu.unit, d_zpu);

  if (batch.lambda != 0.0) {
    Matrix g;
    out.loss += batch.lambda * soft_terms(zu.unit, label_similarity(batch.labels), batch.include_diagonal, &g);
    // X = zu zu^T, so dX_ij reaches both row i and row j.
    Matrix sym(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) sym(i, j) = batch.lambda * (g(i, j) + g(j, i));
    const Matrix d_soft = matmul(sym, zu.unit);
    for (std::size_t k = 0; k < d_zu.size(); ++k) d_zu.values()[k] += d_soft.values()[k];
  }

  out.d_z = normalize_backward(zu, d_zu, batch.normalize);
  out.d_z_prime = normalize_backward(zpu, d_zpu, batch.normalize);
  return out;
}

}  // namespace msml
