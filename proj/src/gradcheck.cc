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

#include "cel/gradcheck.h"

#include <algorithm>
#include <array>
#include <memory>
#include <cmath>
#include <random>

#include <spdlog/fmt/fmt.h>

#include "cel/cel_losses.h"
#include "cel/encoder.h"
#include "cel/error.h"
#include "cel/finetune_losses.h"
#include "cel/rng.h"

namespace cel {

namespace {

// A named block inside the flat coordinate vector. Scalars have rows = 0.
struct Segment {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  size_t size() const { return rows == 0 ? 1 : static_cast<size_t>(rows * cols); }
};

class Layout {
 public:
  void add_matrix(const std::string& name, const Matrix& m) {
    segments_.push_back({name, m.rows(), m.cols()});
    values_.insert(values_.end(), m.data(), m.data() + m.size());
  }
  void add_scalar(const std::string& name, double v) {
    segments_.push_back({name, 0, 0});
    values_.push_back(v);
  }
  const std::vector<double>& values() const { return values_; }

  static Matrix matrix(std::span<const double> x, size_t offset, Eigen::Index rows,
                       Eigen::Index cols) {
    return Eigen::Map<const Matrix>(x.data() + offset, rows, cols);
  }

  std::string coordinate(size_t index) const {
    size_t offset = 0;
    for (const auto& s : segments_) {
      if (index < offset + s.size()) {
        if (s.rows == 0) return s.name;
        const auto local = static_cast<Eigen::Index>(index - offset);
        return fmt::format("{}[{},{}]", s.name, local % s.rows, local / s.rows);
      }
      offset += s.size();
    }
    return "?";
  }

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
};

void append(std::vector<double>* out, const Matrix& m) {
  out->insert(out->end(), m.data(), m.data() + m.size());
}

Matrix unit_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> gauss;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    do {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
    } while (m.row(i).norm() < 1e-3);
    m.row(i).normalize();
  }
  return m;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

constexpr int kBatchSizes[] = {2, 3, 5, 8};
constexpr int kDims[] = {3, 8, 16};

// One instance: the starting point, its layout, and a function returning
// the loss value and the analytic gradient at a point.
struct Instance {
  Layout layout;
  std::function<double(std::span<const double>, std::vector<double>*)> eval;
};

using InstanceFactory = std::function<Instance(int index, Rng& rng)>;

GradCheckRow check(const std::string& name, const InstanceFactory& make,
                   const GradCheckConfig& cfg, double tolerance, uint64_t stream) {
  GradCheckRow row;
  row.loss = name;
  row.tolerance = tolerance;
  row.instances = cfg.instances;
  for (int i = 0; i < cfg.instances; ++i) {
    Rng rng(derive_seed(cfg.seed, {stream, static_cast<uint64_t>(i)}));
    Instance inst = make(i, rng);
    const std::vector<double>& x = inst.layout.values();
    std::vector<double> analytic;
    inst.eval(x, &analytic);
    const std::vector<double> numeric = numeric_gradient(
        [&](std::span<const double> p) { return inst.eval(p, nullptr); }, x, cfg.step);
    size_t worst = 0;
    const double err = relative_error(analytic, numeric, &worst);
    if (row.worst_instance < 0 || err > row.max_rel_error) {
      row.max_rel_error = err;
      row.worst_instance = i;
      row.worst_coordinate = inst.layout.coordinate(worst);
    }
  }
  row.passed = row.max_rel_error < tolerance;
  return row;
}

Instance pair_instance(int i, Rng& rng, bool with_head) {
  const int k = kBatchSizes[i % 4];
  const int m = kDims[i % 3];
  Instance inst;
  inst.layout.add_matrix("view1", unit_rows(k, m, rng));
  inst.layout.add_matrix("view2", unit_rows(k, m, rng));
  if (with_head) {
    inst.layout.add_scalar("w", uniform(rng, 0.5, 5.0));
    inst.layout.add_scalar("b", uniform(rng, -3.0, 3.0));
  }
  return inst;
}

struct PairView {
  Matrix v1, v2;
  SimilarityParams p;
};

PairView unpack_pair(std::span<const double> x, int k, int m, bool with_head) {
  PairView pv;
  const size_t n = static_cast<size_t>(k) * static_cast<size_t>(m);
  pv.v1 = Layout::matrix(x, 0, k, m);
  pv.v2 = Layout::matrix(x, n, k, m);
  if (with_head) pv.p = {x[2 * n], x[2 * n + 1]};
  return pv;
}

void pack(const LossOutput& out, bool with_head, std::vector<double>* grad) {
  if (grad == nullptr) return;
  grad->clear();
  append(grad, out.grad_view1);
  append(grad, out.grad_view2);
  if (with_head) grad->insert(grad->end(), {out.grad_w, out.grad_b});
}

GradCheckRow check_uniformity(const GradCheckConfig& cfg) {
  return check("uniformity", [](int i, Rng& rng) {
    Instance inst = pair_instance(i, rng, false);
    const int k = kBatchSizes[i % 4];
    const int m = kDims[i % 3];
    constexpr double kTemps[] = {0.5, 1.0, 2.0, 4.0};
    const KernelParam kernel(kTemps[i % 4]);
    inst.eval = [=](std::span<const double> x, std::vector<double>* g) {
      const PairView pv = unpack_pair(x, k, m, false);
      const LossOutput out = uniformity_loss(EmbeddingBatch(pv.v1, pv.v2), kernel);
      pack(out, false, g);
      return out.value;
    };
    return inst;
  }, cfg, cfg.tolerance, 1);
}

GradCheckRow check_similarity(const GradCheckConfig& cfg, SimilarityKind kind) {
  const std::string name =
      kind == SimilarityKind::kAngularPrototypical ? "aprot" : "acont";
  return check(name, [kind](int i, Rng& rng) {
    Instance inst = pair_instance(i, rng, true);
    const int k = kBatchSizes[i % 4];
    const int m = kDims[i % 3];
    inst.eval = [=](std::span<const double> x, std::vector<double>* g) {
      const PairView pv = unpack_pair(x, k, m, true);
      const LossOutput out = similarity_loss(EmbeddingBatch(pv.v1, pv.v2), pv.p, kind);
      pack(out, true, g);
      return out.value;
    };
    return inst;
  }, cfg, cfg.tolerance, kind == SimilarityKind::kAngularPrototypical ? 2 : 3);
}

GradCheckRow check_total(const GradCheckConfig& cfg) {
  return check("total", [](int i, Rng& rng) {
    Instance inst = pair_instance(i, rng, true);
    const int k = kBatchSizes[i % 4];
    const int m = kDims[i % 3];
    const CelWeights weights{uniform(rng, 0.25, 2.0)};
    const SimilarityKind kind = i % 2 == 0 ? SimilarityKind::kAngularPrototypical
                                           : SimilarityKind::kAngularContrastive;
    inst.eval = [=](std::span<const double> x, std::vector<double>* g) {
      const PairView pv = unpack_pair(x, k, m, true);
      const LossOutput out =
          total_loss(EmbeddingBatch(pv.v1, pv.v2), KernelParam(2.0), pv.p, weights, kind);
      pack(out, true, g);
      return out.value;
    };
    return inst;
  }, cfg, cfg.tolerance, 4);
}

GradCheckRow check_ge2e(const GradCheckConfig& cfg) {
  return check("ge2e", [](int i, Rng& rng) {
    const int speakers = 2 + i % 3;
    const int per = 2 + (i / 3) % 2;
    const int m = kDims[i % 3];
    const int n = speakers * per;
    std::vector<int> labels;
    for (int s = 0; s < speakers; ++s) labels.insert(labels.end(), per, s);
    std::shuffle(labels.begin(), labels.end(), rng);
    Instance inst;
    inst.layout.add_matrix("embeddings", unit_rows(n, m, rng));
    inst.layout.add_scalar("w", uniform(rng, 0.5, 5.0));
    inst.layout.add_scalar("b", uniform(rng, -3.0, 3.0));
    const size_t size = static_cast<size_t>(n * m);
    inst.eval = [=](std::span<const double> x, std::vector<double>* g) {
      const LabeledBatch batch{Layout::matrix(x, 0, n, m), labels, speakers};
      const LabeledLossOutput out = ge2e_loss(batch, {x[size], x[size + 1]});
      if (g != nullptr) {
        g->clear();
        append(g, out.grad_embeddings);
        g->insert(g->end(), {out.grad_w, out.grad_b});
      }
      return out.value;
    };
    return inst;
  }, cfg, cfg.tolerance, 5);
}

enum class MarginKind { kCosFace, kArcFace, kAdaCos };

GradCheckRow check_margin(const GradCheckConfig& cfg, MarginKind kind) {
  static const char* kNames[] = {"cosface", "arcface", "adacos"};
  return check(kNames[static_cast<int>(kind)], [kind](int i, Rng& rng) {
    const int n = 2 + i % 7;
    const int classes = 2 + i % 4;
    const int m = kDims[i % 3];
    std::vector<int> labels(n);
    for (int& y : labels) y = std::uniform_int_distribution<int>(0, classes - 1)(rng);
    Instance inst;
    inst.layout.add_matrix("embeddings", unit_rows(n, m, rng));
    inst.layout.add_matrix("classifier", unit_rows(classes, m, rng));
    const size_t size = static_cast<size_t>(n * m);
    inst.eval = [=](std::span<const double> x, std::vector<double>* g) {
      const LabeledBatch batch{Layout::matrix(x, 0, n, m), labels, classes};
      const ClassifierWeights w{Layout::matrix(x, size, classes, m)};
      LabeledLossOutput out;
      if (kind == MarginKind::kCosFace) {
        out = cosface_loss(batch, w, MarginConfig{0.2, 30.0});
      } else if (kind == MarginKind::kArcFace) {
        out = arcface_loss(batch, w, MarginConfig{0.2, 30.0});
      } else {
        AdaCosState state = AdaCosState::initial(std::max(classes, 3));
        state.update = false;
        out = adacos_loss(batch, w, &state);
      }
      if (g != nullptr) {
        g->clear();
        append(g, out.grad_embeddings);
        append(g, out.grad_weights);
      }
      return out.value;
    };
    return inst;
  }, cfg, cfg.tolerance, 6 + static_cast<uint64_t>(kind));
}

// Total loss through a tiny encoder: K = 3 pairs, one hidden layer, m = 4,
// 8-frame features.
GradCheckRow check_encoder(const GradCheckConfig& cfg) {
  return check("encoder", [](int i, Rng& rng) {
    EncoderConfig ec;
    ec.input_dim = 6;
    ec.hidden = {5};
    ec.embedding_dim = 4;
    ec.pooling = i % 2 == 0 ? Pooling::kMean : Pooling::kMeanStd;
    auto encoder = std::make_shared<Encoder>(ec);
    encoder->init_glorot(rng());
    constexpr int kPairs = 3;
    auto feats = std::make_shared<std::vector<FeatureMatrix>>();
    std::normal_distribution<double> gauss;
    for (int c = 0; c < 2 * kPairs; ++c) {
      FeatureMatrix f{Matrix(ec.input_dim, 8)};
      for (Eigen::Index j = 0; j < f.values.size(); ++j) f.values.data()[j] = gauss(rng);
      feats->push_back(std::move(f));
    }
    Instance inst;
    const auto params = encoder->parameters();
    Matrix p = Eigen::Map<const Matrix>(params.data(), static_cast<Eigen::Index>(params.size()), 1);
    inst.layout.add_matrix("param", p);
    const SimilarityParams head{uniform(rng, 1.0, 5.0), uniform(rng, -2.0, 2.0)};
    const SimilarityKind kind = i % 2 == 0 ? SimilarityKind::kAngularPrototypical
                                           : SimilarityKind::kAngularContrastive;
    inst.eval = [=](std::span<const double> x, std::vector<double>* g) {
      encoder->set_parameters(x);
      std::vector<Encoder::Cache> caches(2 * kPairs);
      Matrix v1(kPairs, ec.embedding_dim), v2(kPairs, ec.embedding_dim);
      for (int c = 0; c < kPairs; ++c) {
        v1.row(c) = encoder->forward((*feats)[2 * c], &caches[2 * c]).values().transpose();
        v2.row(c) =
            encoder->forward((*feats)[2 * c + 1], &caches[2 * c + 1]).values().transpose();
      }
      const LossOutput out =
          total_loss(EmbeddingBatch(v1, v2), KernelParam(2.0), head, CelWeights{1.0}, kind);
      if (g != nullptr) {
        g->assign(x.size(), 0.0);
        for (int c = 0; c < kPairs; ++c) {
          encoder->backward(out.grad_view1.row(c).transpose(), caches[2 * c], *g);
          encoder->backward(out.grad_view2.row(c).transpose(), caches[2 * c + 1], *g);
        }
      }
      return out.value;
    };
    return inst;
  }, cfg, cfg.encoder_tolerance, 9);
}

constexpr GradScope kScopes[] = {
    GradScope::kAll,     GradScope::kUniformity, GradScope::kAngularPrototypical,
    GradScope::kAngularContrastive, GradScope::kTotal, GradScope::kGe2e,
    GradScope::kCosFace, GradScope::kArcFace,    GradScope::kAdaCos,
    GradScope::kEncoder,
};

}  // namespace

std::string scope_name(GradScope scope) {
  switch (scope) {
    case GradScope::kAll: return "all";
    case GradScope::kUniformity: return "unif";
    case GradScope::kAngularPrototypical: return "aprot";
    case GradScope::kAngularContrastive: return "acont";
    case GradScope::kTotal: return "total";
    case GradScope::kGe2e: return "ge2e";
    case GradScope::kCosFace: return "cosface";
    case GradScope::kArcFace: return "arcface";
    case GradScope::kAdaCos: return "adacos";
    case GradScope::kEncoder: return "encoder";
  }
  return "?";
}

GradScope parse_scope(const std::string& name) {
  for (GradScope s : kScopes) {
    if (scope_name(s) == name) return s;
  }
  throw Error(ErrorCode::kSchemaError, "unknown gradcheck scope '" + name + "'");
}

std::vector<double> numeric_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric, size_t* worst_index) {
  if (analytic.size() != numeric.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient sizes differ");
  }
  double scale = 1e-12;
  double worst = 0.0;
  size_t at = 0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    const double d = std::abs(analytic[i] - numeric[i]);
    if (d > worst) {
      worst = d;
      at = i;
    }
  }
  if (worst_index != nullptr) *worst_index = at;
  return worst / scale;
}

std::vector<GradCheckRow> run_gradcheck(GradScope scope, const GradCheckConfig& cfg) {
  std::vector<GradCheckRow> rows;
  auto want = [scope](GradScope s) { return scope == GradScope::kAll || scope == s; };
  if (want(GradScope::kUniformity)) rows.push_back(check_uniformity(cfg));
  if (want(GradScope::kAngularPrototypical)) {
    rows.push_back(check_similarity(cfg, SimilarityKind::kAngularPrototypical));
  }
  if (want(GradScope::kAngularContrastive)) {
    rows.push_back(check_similarity(cfg, SimilarityKind::kAngularContrastive));
  }
  if (want(GradScope::kTotal)) rows.push_back(check_total(cfg));
  if (want(GradScope::kGe2e)) rows.push_back(check_ge2e(cfg));
  if (want(GradScope::kCosFace)) rows.push_back(check_margin(cfg, MarginKind::kCosFace));
  if (want(GradScope::kArcFace)) rows.push_back(check_margin(cfg, MarginKind::kArcFace));
  if (want(GradScope::kAdaCos)) rows.push_back(check_margin(cfg, MarginKind::kAdaCos));
  if (want(GradScope::kEncoder)) rows.push_back(check_encoder(cfg));
  return rows;
}

std::string format_gradcheck(const std::vector<GradCheckRow>& rows) {
  std::string out = fmt::format("{:<11} {:>9} {:>12} {:>9}  {:<6} {}\n", "loss",
                                "instances", "max_rel_err", "tol", "result", "worst");
  for (const auto& r : rows) {
    out += fmt::format("{:<11} {:>9} {:>12.3e} {:>9.0e}  {:<6} #{} {}\n", r.loss,
                       r.instances, r.max_rel_error, r.tolerance,
                       r.passed ? "PASS" : "FAIL", r.worst_instance, r.worst_coordinate);
  }
  return out;
}

}  // namespace cel
