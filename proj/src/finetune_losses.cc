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

#include "cel/finetune_losses.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include <spdlog/spdlog.h>

#include "cel/cosine_matrix.h"
#include "cel/error.h"

namespace cel {

namespace {

constexpr double kArcClamp = 1e-7;

void validate_labels(const LabeledBatch& batch, Eigen::Index num_rows_w) {
  if (batch.embeddings.rows() < 1) {
    throw Error(ErrorCode::kBatchTooSmall, "labeled batch is empty");
  }
  if (static_cast<size_t>(batch.embeddings.rows()) != batch.labels.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "embedding rows and label count differ");
  }
  const Eigen::Index classes =
      num_rows_w > 0 ? num_rows_w : static_cast<Eigen::Index>(batch.num_classes);
  for (int label : batch.labels) {
    if (label < 0 || label >= classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

void validate_classifier(const LabeledBatch& batch,
                         const ClassifierWeights& w) {
  if (w.weights.cols() != batch.embeddings.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "classifier dimension " + std::to_string(w.weights.cols()) +
                    " vs embedding dimension " +
                    std::to_string(batch.embeddings.cols()));
  }
  validate_labels(batch, w.weights.rows());
}

// Mean softmax cross-entropy of `logits` against `labels`; writes dL/dlogits.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                     Matrix* grad_logits) {
  const double n = static_cast<double>(logits.rows());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    loss += row_cross_entropy(logits, i, labels[i]);
  }
  *grad_logits = softmax_rows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    (*grad_logits)(i, labels[i]) -= 1.0;
  }
  *grad_logits /= n;
  return loss / n;
}

// Shared tail of the classifier losses: logits are s * f(cos), with f the
// identity off-target and `target_fn` on target.
template <typename TargetFn>
LabeledLossOutput margin_softmax(const LabeledBatch& batch,
                                 const ClassifierWeights& w, double scale,
                                 TargetFn target_fn) {
  const CosineMatrix cos(batch.embeddings, w.weights);
  Matrix logits = scale * cos.values();
  std::vector<double> target_slope(batch.labels.size());
  for (size_t i = 0; i < batch.labels.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto [value, slope] = target_fn(cos(row, batch.labels[i]));
    logits(row, batch.labels[i]) = scale * value;
    target_slope[i] = slope;
  }
  Matrix grad_logits;
  LabeledLossOutput out;
  out.value = cross_entropy(logits, batch.labels, &grad_logits);

  Matrix grad_cos = scale * grad_logits;
  for (size_t i = 0; i < batch.labels.size(); ++i) {
    grad_cos(static_cast<Eigen::Index>(i), batch.labels[i]) *= target_slope[i];
  }
  out.grad_embeddings = Matrix::Zero(batch.embeddings.rows(),
                                     batch.embeddings.cols());
  out.grad_weights = Matrix::Zero(w.weights.rows(), w.weights.cols());
  cos.backward(grad_cos, &out.grad_embeddings, &out.grad_weights);
  return out;
}

}  // namespace

ClassifierWeights ClassifierWeights::random(int num_classes, int dim,
                                            uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / (num_classes + dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  ClassifierWeights w;
  w.weights.resize(num_classes, dim);
  for (Eigen::Index i = 0; i < w.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.weights.cols(); ++j) {
      w.weights(i, j) = dist(rng);
    }
  }
  return w;
}

LabeledLossOutput ge2e_loss(const LabeledBatch& batch,
                            const SimilarityParams& p) {
  validate_labels(batch, 0);
  std::map<int, std::vector<Eigen::Index>> groups;
  for (size_t i = 0; i < batch.labels.size(); ++i) {
    groups[batch.labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  const size_t speakers = groups.size();
  const size_t per_speaker = groups.begin()->second.size();
  for (const auto& [label, rows] : groups) {
    if (rows.size() != per_speaker) {
      throw Error(ErrorCode::kBatchShapeInvalid,
                  "GE2E needs the same utterance count for every speaker");
    }
  }
  if (speakers < 2 || per_speaker < 2) {
    throw Error(ErrorCode::kBatchShapeInvalid,
                "GE2E needs S >= 2 and U >= 2, got S = " +
                    std::to_string(speakers) +
                    ", U = " + std::to_string(per_speaker));
  }

  const Matrix& e = batch.embeddings;
  const Eigen::Index n = e.rows();
  const auto s_count = static_cast<Eigen::Index>(speakers);
  const double u = static_cast<double>(per_speaker);

  // Speaker index per row and per-speaker sums.
  std::vector<Eigen::Index> speaker_of(static_cast<size_t>(n));
  Matrix sums = Matrix::Zero(s_count, e.cols());
  std::vector<const std::vector<Eigen::Index>*> members;
  Eigen::Index k = 0;
  for (const auto& [label, rows] : groups) {
    for (Eigen::Index r : rows) {
      speaker_of[static_cast<size_t>(r)] = k;
      sums.row(k) += e.row(r);
    }
    members.push_back(&rows);
    ++k;
  }
  const Matrix centroids = sums / u;

  // Cosines against all centroids, then the own-speaker column replaced by
  // the leave-one-out centroid.
  const CosineMatrix all(e, centroids);
  Matrix cos = all.values();
  Matrix own_centroids(n, e.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index s = speaker_of[static_cast<size_t>(i)];
    own_centroids.row(i) = (sums.row(s) - e.row(i)) / (u - 1.0);
  }
  Vector own_cos(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ni = e.row(i).norm();
    const double nc = own_centroids.row(i).norm();
    if (!(nc > kMinNorm)) {
      throw Error(ErrorCode::kZeroVector, "leave-one-out centroid is zero");
    }
    own_cos[i] = e.row(i).dot(own_centroids.row(i)) / (ni * nc);
    cos(i, speaker_of[static_cast<size_t>(i)]) = own_cos[i];
  }

  const Matrix logits = (p.w * cos).array() + p.b;
  std::vector<int> targets(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    targets[static_cast<size_t>(i)] =
        static_cast<int>(speaker_of[static_cast<size_t>(i)]);
  }
  Matrix grad_logits;
  LabeledLossOutput out;
  out.value = cross_entropy(logits, targets, &grad_logits);
  out.grad_w = grad_logits.cwiseProduct(cos).sum();
  out.grad_b = grad_logits.sum();

  Matrix grad_cos = p.w * grad_logits;
  Vector grad_own(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index s = speaker_of[static_cast<size_t>(i)];
    grad_own[i] = grad_cos(i, s);
    grad_cos(i, s) = 0.0;
  }

  out.grad_embeddings = Matrix::Zero(n, e.cols());
  Matrix grad_centroids = Matrix::Zero(s_count, e.cols());
  all.backward(grad_cos, &out.grad_embeddings, &grad_centroids);
  // Full centroids are means over U members.
  for (Eigen::Index s = 0; s < s_count; ++s) {
    for (Eigen::Index r : *members[static_cast<size_t>(s)]) {
      out.grad_embeddings.row(r) += grad_centroids.row(s) / u;
    }
  }
  // Leave-one-out centroids: mean over the other U - 1 members.
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index s = speaker_of[static_cast<size_t>(i)];
    const double ni = e.row(i).norm();
    const double nc = own_centroids.row(i).norm();
    const auto e_hat = (e.row(i) / ni).eval();
    const auto c_hat = (own_centroids.row(i) / nc).eval();
    out.grad_embeddings.row(i) +=
        grad_own[i] * (c_hat - own_cos[i] * e_hat) / ni;
    const auto grad_c = (grad_own[i] * (e_hat - own_cos[i] * c_hat) / nc).eval();
    for (Eigen::Index r : *members[static_cast<size_t>(s)]) {
      if (r != i) out.grad_embeddings.row(r) += grad_c / (u - 1.0);
    }
  }
  return out;
}

LabeledLossOutput cosface_loss(const LabeledBatch& batch,
                               const ClassifierWeights& w,
                               const MarginConfig& cfg) {
  validate_classifier(batch, w);
  if (!(cfg.margin >= 0.0) || !(cfg.scale > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "margin must be >= 0, scale > 0");
  }
  const double m = cfg.margin;
  return margin_softmax(batch, w, cfg.scale, [m](double c) {
    return std::pair{c - m, 1.0};
  });
}

LabeledLossOutput arcface_loss(const LabeledBatch& batch,
                               const ClassifierWeights& w,
                               const MarginConfig& cfg) {
  validate_classifier(batch, w);
  if (!(cfg.margin >= 0.0) || !(cfg.scale > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "margin must be >= 0, scale > 0");
  }
  const double cos_m = std::cos(cfg.margin);
  const double sin_m = std::sin(cfg.margin);
  // cos(theta + m) = cos * cos_m - sin(theta) * sin_m. The value uses the
  // exact sine; the slope uses the clamped cosine so it stays finite at
  // |cos| = 1.
  return margin_softmax(batch, w, cfg.scale, [=](double c) {
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double cc = std::clamp(c, -1.0 + kArcClamp, 1.0 - kArcClamp);
    const double slope = cos_m + cc * sin_m / std::sqrt(1.0 - cc * cc);
    return std::pair{c * cos_m - sin_theta * sin_m, slope};
  });
}

AdaCosState AdaCosState::initial(int num_classes) {
  if (num_classes < 2) {
    throw Error(ErrorCode::kSingleClass, "AdaCos needs at least two classes");
  }
  AdaCosState state;
  state.scale = std::numbers::sqrt2 * std::log(num_classes - 1.0);
  if (!(state.scale >= kMinScale)) {
    spdlog::warn("AdaCos initial scale {} floored at {} for C = {}",
                 state.scale, kMinScale, num_classes);
    state.scale = kMinScale;
    state.floored = true;
  }
  return state;
}

double adacos_next_scale(const Matrix& cos, const std::vector<int>& labels,
                         double scale) {
  const Eigen::Index n = cos.rows();
  double b_sum = 0.0;
  std::vector<double> target_angles;
  target_angles.reserve(labels.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < cos.cols(); ++j) {
      if (j != y) b_sum += std::exp(scale * cos(i, j));
    }
    target_angles.push_back(std::acos(std::clamp(cos(i, y), -1.0, 1.0)));
  }
  const double b_avg = b_sum / static_cast<double>(n);

  std::sort(target_angles.begin(), target_angles.end());
  const size_t mid = target_angles.size() / 2;
  const double median = target_angles.size() % 2 == 1
                            ? target_angles[mid]
                            : 0.5 * (target_angles[mid - 1] + target_angles[mid]);
  const double next =
      std::log(b_avg) / std::cos(std::min(std::numbers::pi / 4.0, median));
  if (!std::isfinite(next) || next < AdaCosState::kMinScale) {
    return AdaCosState::kMinScale;
  }
  return next;
}

LabeledLossOutput adacos_loss(const LabeledBatch& batch,
                              const ClassifierWeights& w, AdaCosState* state) {
  if (w.weights.rows() < 2) {
    throw Error(ErrorCode::kSingleClass, "AdaCos needs at least two classes");
  }
  validate_classifier(batch, w);
  if (!(state->scale > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "AdaCos scale must be positive");
  }
  LabeledLossOutput out = margin_softmax(
      batch, w, state->scale, [](double c) { return std::pair{c, 1.0}; });
  if (state->update) {
    const CosineMatrix cos(batch.embeddings, w.weights);
    state->scale = adacos_next_scale(cos.values(), batch.labels, state->scale);
  }
  return out;
}

}  // namespace cel
