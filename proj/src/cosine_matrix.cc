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

#include "cel/cosine_matrix.h"

#include <cmath>

#include "cel/error.h"

namespace cel {

namespace {

void normalize_rows(const Matrix& m, Matrix* hat, Vector* norms) {
  *norms = m.rowwise().norm();
  for (Eigen::Index i = 0; i < norms->size(); ++i) {
    if (!((*norms)[i] > kMinNorm)) {
      throw Error(ErrorCode::kZeroVector,
                  "row " + std::to_string(i) + " has zero norm");
    }
  }
  *hat = norms->cwiseInverse().asDiagonal() * m;
}

}  // namespace

CosineMatrix::CosineMatrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cosine matrix operands have dimensions " +
                    std::to_string(a.cols()) + " and " +
                    std::to_string(b.cols()));
  }
  normalize_rows(a, &a_hat_, &a_norm_);
  normalize_rows(b, &b_hat_, &b_norm_);
  cos_ = a_hat_ * b_hat_.transpose();
}

// d cos(a, b) / d a = (b_hat - cos * a_hat) / |a|, symmetric for b.
void CosineMatrix::backward(const Matrix& grad_cos, Matrix* grad_a,
                            Matrix* grad_b) const {
  const Matrix weighted = grad_cos.cwiseProduct(cos_);
  if (grad_a != nullptr) {
    Matrix g = grad_cos * b_hat_;
    g -= weighted.rowwise().sum().asDiagonal() * a_hat_;
    *grad_a += a_norm_.cwiseInverse().asDiagonal() * g;
  }
  if (grad_b != nullptr) {
    Matrix g = grad_cos.transpose() * a_hat_;
    g -= weighted.colwise().sum().transpose().asDiagonal() * b_hat_;
    *grad_b += b_norm_.cwiseInverse().asDiagonal() * g;
  }
}

double row_cross_entropy(const Matrix& logits, Eigen::Index row, Eigen::Index target) {
  Eigen::Index arg = 0;
  const double mx = logits.row(row).maxCoeff(&arg);
  double rest = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (j != arg) rest += std::exp(logits(row, j) - mx);
  }
  return std::log1p(rest) + (mx - logits(row, target));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace cel
