// Copyright (c) 2026 The CEL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cel/cel_losses.h"

#include <cmath>
#include <limits>
#include <string>

#include "cel/cosine_matrix.h"
#include "cel/error.h"

namespace cel {

namespace {

void require_pairs(const EmbeddingBatch& batch, const char* loss) {
  if (batch.size() < 2) {
    throw Error(ErrorCode::kBatchTooSmall,
                std::string(loss) + " needs K >= 2, got K = " +
                    std::to_string(batch.size()));
  }
}

// Half of the uniformity loss for one view; writes the gradient into *grad.
double uniformity_half(const Matrix& x, double t, Matrix* grad) {
  const Eigen::Index k = x.rows();
  const double num_pairs = 0.5 * static_cast<double>(k) * (k - 1);

  // Exponents -t |x_i - x_j|^2 for i < j, enumerated in a fixed order.
  std::vector<double> exponents;
  exponents.reserve(static_cast<size_t>(num_pairs));
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double e = -t * (x.row(i) - x.row(j)).squaredNorm();
      exponents.push_back(e);
      mx = std::max(mx, e);
    }
  }
  double sum = 0.0;
  for (double e : exponents) sum += std::exp(e - mx);
  const double log_sum = mx + std::log(sum);

  grad->setZero(x.rows(), x.cols());
  size_t idx = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      // d/dx_i of 0.5 * log sum = 0.5 * p_ij * (-2t) (x_i - x_j)
      const double p = std::exp(exponents[idx++] - mx) / sum;
      const auto diff = (x.row(i) - x.row(j)).eval();
      grad->row(i) -= (t * p) * diff;
      grad->row(j) += (t * p) * diff;
    }
  }
  return 0.5 * (log_sum - std::log(num_pairs));
}

// Cross-entropy over the rows of `logits` with the diagonal as target,
// averaged over rows and scaled by `weight`. Accumulates dL/dlogits.
double diagonal_cross_entropy(const Matrix& logits, double weight,
                              Matrix* grad_logits) {
  const Eigen::Index k = logits.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) loss += row_cross_entropy(logits, i, i);
  Matrix g = softmax_rows(logits);
  g.diagonal().array() -= 1.0;
  *grad_logits += (weight / static_cast<double>(k)) * g;
  return weight * loss / static_cast<double>(k);
}

LossOutput similarity_from_logit_grad(const EmbeddingBatch& batch,
                                      const SimilarityParams& p,
                                      const CosineMatrix& cos, double value,
                                      const Matrix& grad_logits) {
  LossOutput out;
  out.value = value;
  out.grad_view1 = Matrix::Zero(batch.size(), batch.dim());
  out.grad_view2 = Matrix::Zero(batch.size(), batch.dim());
  out.grad_w = grad_logits.cwiseProduct(cos.values()).sum();
  out.grad_b = grad_logits.sum();
  cos.backward(p.w * grad_logits, &out.grad_view1, &out.grad_view2);
  return out;
}

}  // namespace

KernelParam::KernelParam(double t) : t_(t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw Error(ErrorCode::kInvalidParam,
                "kernel parameter t must be positive, got " + std::to_string(t));
  }
}

double gaussian_potential(const EmbeddingVector& a, const EmbeddingVector& b,
                          KernelParam k) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "gaussian potential of vectors with different dimensions");
  }
  return std::exp(-k.t() * (a.values() - b.values()).squaredNorm());
}

LossOutput uniformity_loss(const EmbeddingBatch& batch, KernelParam k) {
  require_pairs(batch, "uniformity loss");
  LossOutput out;
  out.value = uniformity_half(batch.view1(), k.t(), &out.grad_view1) +
              uniformity_half(batch.view2(), k.t(), &out.grad_view2);
  return out;
}

LossOutput aprot_loss(const EmbeddingBatch& batch, const SimilarityParams& p) {
  require_pairs(batch, "angular prototypical loss");
  const CosineMatrix cos(batch.view1(), batch.view2());
  const Matrix logits = (p.w * cos.values()).array() + p.b;
  Matrix grad_logits = Matrix::Zero(logits.rows(), logits.cols());
  const double value = diagonal_cross_entropy(logits, 1.0, &grad_logits);
  return similarity_from_logit_grad(batch, p, cos, value, grad_logits);
}

LossOutput acont_loss(const EmbeddingBatch& batch, const SimilarityParams& p) {
  require_pairs(batch, "angular contrastive loss");
  const CosineMatrix cos(batch.view1(), batch.view2());
  const Matrix logits = (p.w * cos.values()).array() + p.b;
  Matrix grad_logits = Matrix::Zero(logits.rows(), logits.cols());
  double value = diagonal_cross_entropy(logits, 0.5, &grad_logits);
  Matrix grad_t = Matrix::Zero(logits.rows(), logits.cols());
  value += diagonal_cross_entropy(logits.transpose(), 0.5, &grad_t);
  grad_logits += grad_t.transpose();
  return similarity_from_logit_grad(batch, p, cos, value, grad_logits);
}

LossOutput similarity_loss(const EmbeddingBatch& batch,
                           const SimilarityParams& p, SimilarityKind kind) {
  return kind == SimilarityKind::kAngularPrototypical ? aprot_loss(batch, p)
                                                      : acont_loss(batch, p);
}

CelLoss cel_loss(const EmbeddingBatch& batch, KernelParam k,
                 const SimilarityParams& p, CelWeights weights,
                 SimilarityKind kind) {
  if (!(weights.lambda >= 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "lambda must be nonnegative");
  }
  CelLoss out;
  out.total = similarity_loss(batch, p, kind);
  out.similarity = out.total.value;
  const LossOutput unif = uniformity_loss(batch, k);
  out.uniformity = unif.value;
  if (weights.lambda != 0.0) {
    out.total.value = weights.lambda * unif.value + out.similarity;
    out.total.grad_view1 += weights.lambda * unif.grad_view1;
    out.total.grad_view2 += weights.lambda * unif.grad_view2;
  }
  return out;
}

LossOutput total_loss(const EmbeddingBatch& batch, KernelParam k,
                      const SimilarityParams& p, CelWeights weights,
                      SimilarityKind kind) {
  return cel_loss(batch, k, p, weights, kind).total;
}

}  // namespace cel
