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

#include "cel/embedding_space.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "cel/error.h"

namespace cel {
namespace {

// Distance from 1 within which a norm counts as unit (a few hundred ulps).
constexpr double kUnitSlack = 1e-13;

}  // namespace

EmbeddingVector normalize(const Vector& v) {
  if (v.size() < 2) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding dimension must be at least 2, got " +
                    std::to_string(v.size()));
  }
  const double norm = v.norm();
  if (!(norm > kMinNorm)) {
    throw Error(ErrorCode::kZeroVector, "cannot normalize a vector with norm " +
                                            std::to_string(norm));
  }
  // Inputs already on the sphere up to rounding are returned unchanged, which
  // makes normalize an exact fixed point on its own outputs.
  if (std::abs(norm - 1.0) <= kUnitSlack) return EmbeddingVector(v);
  return EmbeddingVector(v / norm);
}

EmbeddingVector normalize(std::span<const double> v) {
  return normalize(Vector(Eigen::Map<const Vector>(
      v.data(), static_cast<Eigen::Index>(v.size()))));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cosine of vectors with dimensions " + std::to_string(a.dim()) +
                    " and " + std::to_string(b.dim()));
  }
  return std::clamp(a.values().dot(b.values()), -1.0, 1.0);
}

double affine_similarity(const EmbeddingVector& a, const EmbeddingVector& b,
                         const SimilarityParams& p) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "affine similarity of vectors with different dimensions");
  }
  const double denom = a.values().norm() * b.values().norm();
  const double cos = std::clamp(a.values().dot(b.values()) / denom, -1.0, 1.0);
  return p.w * cos + p.b;
}

EmbeddingBatch::EmbeddingBatch(Matrix view1, Matrix view2)
    : view1_(std::move(view1)), view2_(std::move(view2)) {
  if (view1_.rows() != view2_.rows() || view1_.cols() != view2_.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "views have shapes " + std::to_string(view1_.rows()) + "x" +
                    std::to_string(view1_.cols()) + " and " +
                    std::to_string(view2_.rows()) + "x" +
                    std::to_string(view2_.cols()));
  }
  if (view1_.cols() < 2) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding dimension must be at least 2");
  }
}

}  // namespace cel
