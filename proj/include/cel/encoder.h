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

#ifndef CEL_ENCODER_H_
#define CEL_ENCODER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cel/audio_features.h"
#include "cel/embedding_space.h"

namespace cel {

enum class Pooling { kMean, kMeanStd };

// Per-frame ReLU MLP, temporal pooling, a final affine map to the embedding
// dimension and L2 normalization.
struct EncoderConfig {
  int input_dim = 40;
  std::vector<int> hidden = {64, 64};
  int embedding_dim = 64;
  Pooling pooling = Pooling::kMean;

  void validate() const;
  // Canonical one-line description; used as the checkpoint config echo.
  std::string describe() const;

  bool operator==(const EncoderConfig&) const = default;
};

// Encoder parameters live in one flat vector so optimizers, checkpoints and
// gradient checks can treat them uniformly. Layout per layer: weight matrix
// (out x in, column-major) followed by the bias.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg = {});

  const EncoderConfig& config() const { return cfg_; }

  // Glorot-uniform weights, zero biases.
  void init_glorot(uint64_t seed);

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  size_t num_parameters() const { return params_.size(); }
  void set_parameters(std::span<const double> values);

  // Must be called after parameters are modified in place; forward caches
  // taken before the change are then rejected by backward().
  void touch() { ++version_; }
  uint64_t version() const { return version_; }

  struct Cache {
    uint64_t version = 0;
    std::vector<Matrix> layer_inputs;  // input to each hidden layer
    std::vector<Matrix> pre_activations;
    Vector mean;
    Vector std;
    Vector pooled;
    Vector raw;     // before normalization
    double norm = 0.0;
    Vector embedding;
  };

  // Throws kShapeMismatch on a wrong feature dimension and
  // kNormalizationDegenerate when the pre-normalization output vanishes.
  EmbeddingVector forward(const FeatureMatrix& features,
                          Cache* cache = nullptr) const;

  // Adds dL/dparams into `param_grad` (size num_parameters()) and, when
  // `input_grad` is given, writes dL/dfeatures into it.
  void backward(const Vector& grad_embedding, const Cache& cache,
                std::span<double> param_grad,
                Matrix* input_grad = nullptr) const;

 private:
  struct Layer {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    size_t weight_offset = 0;
    size_t bias_offset = 0;
  };

  Eigen::Map<const Matrix> weight(size_t layer) const;
  Eigen::Map<const Vector> bias(size_t layer) const;
  Eigen::Index pooled_dim() const;

  EncoderConfig cfg_;
  std::vector<Layer> layers_;  // hidden layers, then the output layer
  std::vector<double> params_;
  uint64_t version_ = 0;
};

}  // namespace cel

#endif  // CEL_ENCODER_H_
