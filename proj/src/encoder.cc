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

#include "cel/encoder.h"

#include <cmath>
#include <sstream>

#include "cel/error.h"
#include "cel/rng.h"

namespace cel {

namespace {

constexpr double kStdEps = 1e-6;

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1) {
    throw Error(ErrorCode::kInvalidParam, "encoder input_dim must be positive");
  }
  if (hidden.empty()) {
    throw Error(ErrorCode::kInvalidParam, "encoder needs at least one hidden layer");
  }
  for (int h : hidden) {
    if (h < 1) throw Error(ErrorCode::kInvalidParam, "hidden width must be positive");
  }
  if (embedding_dim < 2) {
    throw Error(ErrorCode::kInvalidParam, "embedding_dim must be at least 2");
  }
}

std::string EncoderConfig::describe() const {
  std::ostringstream out;
  out << "input=" << input_dim << ";hidden=";
  for (size_t i = 0; i < hidden.size(); ++i) {
    out << (i ? "," : "") << hidden[i];
  }
  out << ";embedding=" << embedding_dim
      << ";pooling=" << (pooling == Pooling::kMean ? "mean" : "mean+std")
      << ";activation=relu";
  return out.str();
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  size_t offset = 0;
  Eigen::Index in = cfg_.input_dim;
  auto add = [&](Eigen::Index out) {
    Layer layer{out, in, offset, offset + static_cast<size_t>(out * in)};
    offset = layer.bias_offset + static_cast<size_t>(out);
    layers_.push_back(layer);
    in = out;
  };
  for (int h : cfg_.hidden) add(h);
  in = pooled_dim();
  add(cfg_.embedding_dim);
  params_.assign(offset, 0.0);
}

Eigen::Index Encoder::pooled_dim() const {
  const Eigen::Index h = cfg_.hidden.back();
  return cfg_.pooling == Pooling::kMean ? h : 2 * h;
}

Eigen::Map<const Matrix> Encoder::weight(size_t layer) const {
  const Layer& l = layers_[layer];
  return {params_.data() + l.weight_offset, l.rows, l.cols};
}

Eigen::Map<const Vector> Encoder::bias(size_t layer) const {
  const Layer& l = layers_[layer];
  return {params_.data() + l.bias_offset, l.rows};
}

void Encoder::init_glorot(uint64_t seed) {
  Rng rng(seed);
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const Layer& l : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (size_t i = 0; i < static_cast<size_t>(l.rows * l.cols); ++i) {
      params_[l.weight_offset + i] = dist(rng);
    }
  }
  touch();
}

void Encoder::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "expected " + std::to_string(params_.size()) +
                    " encoder parameters, got " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), params_.begin());
  touch();
}

EmbeddingVector Encoder::forward(const FeatureMatrix& features,
                                 Cache* cache) const {
  if (features.bands() != cfg_.input_dim) {
    throw Error(ErrorCode::kShapeMismatch,
                "features have " + std::to_string(features.bands()) +
                    " rows, encoder expects " + std::to_string(cfg_.input_dim));
  }
  if (features.frames() < 1) {
    throw Error(ErrorCode::kShapeMismatch, "features have no frames");
  }
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.version = version_;
  c.layer_inputs.clear();
  c.pre_activations.clear();

  const size_t hidden = cfg_.hidden.size();
  Matrix act = features.values;
  for (size_t l = 0; l < hidden; ++l) {
    Matrix z = weight(l) * act;
    z.colwise() += bias(l);
    c.layer_inputs.push_back(std::move(act));
    act = z.cwiseMax(0.0);
    c.pre_activations.push_back(std::move(z));
  }
  const double frames = static_cast<double>(act.cols());
  c.mean = act.rowwise().mean();
  if (cfg_.pooling == Pooling::kMeanStd) {
    const Matrix centered = act.colwise() - c.mean;
    c.std = (centered.array().square().rowwise().sum() / frames + kStdEps).sqrt();
    c.pooled.resize(2 * c.mean.size());
    c.pooled << c.mean, c.std;
  } else {
    c.std.resize(0);
    c.pooled = c.mean;
  }
  c.layer_inputs.push_back(std::move(act));  // last hidden output, for std

  c.raw = weight(hidden) * c.pooled + bias(hidden);
  c.norm = c.raw.norm();
  if (!(c.norm > kMinNorm)) {
    throw Error(ErrorCode::kNormalizationDegenerate,
                "encoder output norm " + std::to_string(c.norm) +
                    " is too small to normalize");
  }
  c.embedding = c.raw / c.norm;
  return normalize(c.raw);
}

void Encoder::backward(const Vector& grad_embedding, const Cache& cache,
                       std::span<double> param_grad,
                       Matrix* input_grad) const {
  if (cache.version != version_) {
    throw Error(ErrorCode::kStaleCache,
                "forward cache predates the current parameters");
  }
  if (param_grad.size() != params_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter gradient has wrong size");
  }
  if (grad_embedding.size() != cache.embedding.size() ||
      cache.layer_inputs.size() != cfg_.hidden.size() + 1) {
    throw Error(ErrorCode::kShapeMismatch, "gradient does not match the cache");
  }
  auto grad_w = [&](size_t layer) {
    const Layer& l = layers_[layer];
    return Eigen::Map<Matrix>(param_grad.data() + l.weight_offset, l.rows, l.cols);
  };
  auto grad_b = [&](size_t layer) {
    const Layer& l = layers_[layer];
    return Eigen::Map<Vector>(param_grad.data() + l.bias_offset, l.rows);
  };

  // Normalization Jacobian (I - e e^T) / |v|.
  const Vector& e = cache.embedding;
  const Vector grad_raw = (grad_embedding - e * e.dot(grad_embedding)) / cache.norm;

  const size_t hidden = cfg_.hidden.size();
  grad_w(hidden) += grad_raw * cache.pooled.transpose();
  grad_b(hidden) += grad_raw;
  const Vector grad_pooled = weight(hidden).transpose() * grad_raw;

  const Matrix& last = cache.layer_inputs.back();
  const Eigen::Index width = last.rows();
  const double frames = static_cast<double>(last.cols());
  Matrix grad_act(width, last.cols());
  grad_act.colwise() = grad_pooled.head(width) / frames;
  if (cfg_.pooling == Pooling::kMeanStd) {
    const Vector scale = grad_pooled.tail(width).cwiseQuotient(cache.std) / frames;
    grad_act += scale.asDiagonal() * (last.colwise() - cache.mean);
  }

  for (size_t l = hidden; l-- > 0;) {
    const Matrix grad_z =
        grad_act.cwiseProduct((cache.pre_activations[l].array() > 0.0)
                                  .cast<double>()
                                  .matrix());
    grad_w(l) += grad_z * cache.layer_inputs[l].transpose();
    grad_b(l) += grad_z.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      grad_act = weight(l).transpose() * grad_z;
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(grad_act);
}

}  // namespace cel
