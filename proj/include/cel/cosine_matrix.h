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

#ifndef CEL_COSINE_MATRIX_H_
#define CEL_COSINE_MATRIX_H_

#include "cel/embedding_space.h"

namespace cel {

// Pairwise cosine similarities between the rows of two raw matrices,
// cos(i, j) = a_i . b_j / (|a_i| |b_j|), together with the reverse-mode rule
// that maps dL/dcos back onto the raw rows. Every cosine-based loss in the
// library goes through this so its gradients include the normalization.
class CosineMatrix {
 public:
  CosineMatrix(const Matrix& a, const Matrix& b);

  const Matrix& values() const { return cos_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return cos_(i, j); }

  // Accumulates the gradients of a loss with respect to the rows of `a` and
  // `b`, given upstream dL/dcos.
  void backward(const Matrix& grad_cos, Matrix* grad_a, Matrix* grad_b) const;

 private:
  Matrix a_hat_;
  Matrix b_hat_;
  Vector a_norm_;
  Vector b_norm_;
  Matrix cos_;
};

// -log softmax(logits.row(row))[target], summed as log1p over the non-maximal
// terms so near-zero losses keep their relative precision.
double row_cross_entropy(const Matrix& logits, Eigen::Index row, Eigen::Index target);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

}  // namespace cel

#endif  // CEL_COSINE_MATRIX_H_
