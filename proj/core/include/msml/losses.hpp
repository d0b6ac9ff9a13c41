#pragma once

#include "msml/tensor.hpp"

namespace msml {

/// Paired embeddings for the combined contrastive + soft-contrastive loss.
/// `labels` is N x C and must be {0,1}-valued.
struct SoftConBatch {
  Matrix z;
  Matrix z_prime;
  Matrix labels;
  double tau = 0.1;
  double lambda = 1.0;
  // L2-normalize z and z' inside the loss (gradients include the chain rule).
  bool normalize = true;
  // Include the i == j terms of the soft term's double sum.
  bool include_diagonal = true;
};

struct SimilarityMatrices {
  Matrix features;  // X_ij = z_i . z_j (after normalization when enabled)
  Matrix labels;    // cosine similarity of label rows, 0 for all-zero rows
};

/// Cosine similarity between multi-hot rows; all-zero rows score 0 against
/// every row including themselves.
Matrix label_similarity(const Matrix& labels);
SimilarityMatrices similarity(const SoftConBatch& batch);

double softplus(double x) noexcept;
double sigmoid(double x) noexcept;

/// -sum_i log softmax_j(z_i . z'_j / tau)[i], log-sum-exp stabilized.
double contrastive_loss(const SoftConBatch& batch);
/// -sum_ij [Y_ij log s(X_ij) + (1 - Y_ij) log(1 - s(X_ij))], via softplus.
double soft_loss(const SoftConBatch& batch);
/// contrastive_loss + lambda * soft_loss.
double total_loss(const SoftConBatch& batch);

struct LossGradient {
  double loss = 0.0;
  Matrix d_z;
  Matrix d_z_prime;
};

LossGradient total_loss_grad(const SoftConBatch& batch);

}  // namespace msml
