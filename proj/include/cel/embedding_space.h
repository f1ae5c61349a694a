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

#ifndef CEL_EMBEDDING_SPACE_H_
#define CEL_EMBEDDING_SPACE_H_

#include <span>

#include <Eigen/Dense>

namespace cel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kMinNorm = 1e-12;

// A point on the unit hypersphere. Only constructible through normalize().
class EmbeddingVector {
 public:
  const Vector& values() const { return values_; }
  Eigen::Index dim() const { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

  friend EmbeddingVector normalize(const Vector& v);

 private:
  explicit EmbeddingVector(Vector v) : values_(std::move(v)) {}
  Vector values_;
};

// Returns v / |v|. Throws kZeroVector when |v| <= 1e-12 and
// kDimensionMismatch when v has fewer than two components.
EmbeddingVector normalize(const Vector& v);
EmbeddingVector normalize(std::span<const double> v);

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// Learnable affine map w * cos + b applied to cosine similarities.
struct SimilarityParams {
  static constexpr double kMinScale = 1e-3;

  double w = 10.0;
  double b = -5.0;

  // Keeps w positive after an optimizer update so the map stays
  // orientation-preserving.
  void clamp() {
    if (!(w >= kMinScale)) w = kMinScale;
  }
};

double affine_similarity(const EmbeddingVector& a, const EmbeddingVector& b,
                         const SimilarityParams& p);

// K positive pairs, stored as two K x m matrices whose row i holds the two
// augmented views of utterance i.
class EmbeddingBatch {
 public:
  EmbeddingBatch(Matrix view1, Matrix view2);

  const Matrix& view1() const { return view1_; }
  const Matrix& view2() const { return view2_; }
  Eigen::Index size() const { return view1_.rows(); }
  Eigen::Index dim() const { return view1_.cols(); }

 private:
  Matrix view1_;
  Matrix view2_;
};

}  // namespace cel

#endif  // CEL_EMBEDDING_SPACE_H_
