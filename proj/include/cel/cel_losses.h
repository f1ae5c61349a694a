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

#ifndef CEL_CEL_LOSSES_H_
#define CEL_CEL_LOSSES_H_

#include "cel/embedding_space.h"

namespace cel {

// Sharpness of the Gaussian potential exp(-t |a - b|^2).
class KernelParam {
 public:
  explicit KernelParam(double t = 2.0);
  double t() const { return t_; }

 private:
  double t_;
};

// Scalar loss plus its gradient with respect to every input row and the
// learnable similarity parameters. grad_w and grad_b stay zero for losses
// without learnable parameters.
struct LossOutput {
  double value = 0.0;
  Matrix grad_view1;
  Matrix grad_view2;
  double grad_w = 0.0;
  double grad_b = 0.0;
};

struct CelWeights {
  double lambda = 1.0;
};

enum class SimilarityKind { kAngularPrototypical, kAngularContrastive };

double gaussian_potential(const EmbeddingVector& a, const EmbeddingVector& b,
                          KernelParam k);

// Half the log mean pairwise potential within each view, summed over both
// views. Pairs are unordered, so each half averages C(K, 2) terms. Operates
// on the rows as given; no normalization is applied.
LossOutput uniformity_loss(const EmbeddingBatch& batch, KernelParam k);

// Softmax cross-entropy of each view-1 row against all view-2 rows, scored
// with w * cos + b. The positive for row i is column i.
LossOutput aprot_loss(const EmbeddingBatch& batch, const SimilarityParams& p);

// Symmetric variant of aprot_loss: the mean of the row-wise and the
// column-wise cross-entropies of the cross-view score matrix.
LossOutput acont_loss(const EmbeddingBatch& batch, const SimilarityParams& p);

LossOutput similarity_loss(const EmbeddingBatch& batch,
                           const SimilarityParams& p, SimilarityKind kind);

struct CelLoss {
  LossOutput total;
  double uniformity = 0.0;
  double similarity = 0.0;
};

// lambda * uniformity + similarity, with the component values kept for
// logging. With lambda == 0 the uniformity gradient is skipped entirely.
CelLoss cel_loss(const EmbeddingBatch& batch, KernelParam k,
                 const SimilarityParams& p, CelWeights weights,
                 SimilarityKind kind);

LossOutput total_loss(const EmbeddingBatch& batch, KernelParam k,
                      const SimilarityParams& p, CelWeights weights,
                      SimilarityKind kind);

}  // namespace cel

#endif  // CEL_CEL_LOSSES_H_
