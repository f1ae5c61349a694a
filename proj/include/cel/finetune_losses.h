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

#ifndef CEL_FINETUNE_LOSSES_H_
#define CEL_FINETUNE_LOSSES_H_

#include <vector>

#include "cel/embedding_space.h"

namespace cel {

// N raw embeddings (rows) and their class labels in [0, num_classes).
struct LabeledBatch {
  Matrix embeddings;
  std::vector<int> labels;
  int num_classes = 0;
};

// C x m class weight rows. The losses normalize each row before use and
// differentiate through that normalization, so `weights` itself may drift
// off the sphere during training.
struct ClassifierWeights {
  Matrix weights;

  // Glorot-uniform rows for `num_classes` classes of dimension `dim`.
  static ClassifierWeights random(int num_classes, int dim, uint64_t seed);
};

struct MarginConfig {
  double margin = 0.2;
  double scale = 30.0;
};

// Gradient contract for labeled objectives.
struct LabeledLossOutput {
  double value = 0.0;
  Matrix grad_embeddings;
  Matrix grad_weights;  // empty for GE2E
  double grad_w = 0.0;
  double grad_b = 0.0;
};

// Softmax GE2E. Rows are grouped by label; every class present must have the
// same number U >= 2 of utterances, and at least two classes must be present.
// Each utterance is scored against every centroid, its own computed without
// itself.
LabeledLossOutput ge2e_loss(const LabeledBatch& batch,
                            const SimilarityParams& p);

// Additive cosine margin: target logit s * (cos - m).
LabeledLossOutput cosface_loss(const LabeledBatch& batch,
                               const ClassifierWeights& w,
                               const MarginConfig& cfg);

// Additive angular margin: target logit s * cos(theta + m).
LabeledLossOutput arcface_loss(const LabeledBatch& batch,
                               const ClassifierWeights& w,
                               const MarginConfig& cfg);

struct AdaCosState {
  static constexpr double kMinScale = 1e-3;

  double scale = kMinScale;
  bool update = true;
  bool floored = false;  // initial scale hit the floor (C == 2)

  // sqrt(2) * log(C - 1), floored at kMinScale.
  static AdaCosState initial(int num_classes);
};

// Margin-free scaled softmax with the scale taken from `state`. When
// state->update is set the scale is re-estimated from this batch after the
// loss is computed; the update carries no gradient.
LabeledLossOutput adacos_loss(const LabeledBatch& batch,
                              const ClassifierWeights& w, AdaCosState* state);

// The dynamic scale rule in isolation: log(B_avg) / cos(min(pi/4, theta_med)),
// where B_avg is the mean per-sample sum of exp(s * cos) over non-target
// classes and theta_med is the median target angle.
double adacos_next_scale(const Matrix& cos, const std::vector<int>& labels,
                         double scale);

}  // namespace cel

#endif  // CEL_FINETUNE_LOSSES_H_
