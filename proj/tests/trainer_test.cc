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

#include "cel/trainer.h"

#include <algorithm>
#include <array>
#include <set>

#include <gtest/gtest.h>

#include "cel/error.h"

namespace cel {
namespace {

const Corpus& small_corpus() {
  static const Corpus corpus = [] {
    CorpusConfig cfg;
    cfg.num_speakers = 4;
    cfg.utterances_per_speaker = 3;
    cfg.seed = 404;
    return generate_corpus(cfg);
  }();
  return corpus;
}

Corpus label_free(Corpus c) {
  for (auto& u : c.utterances) u.speaker_id = "-";
  return c;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.hidden = {12};
  e.embedding_dim = 6;
  return e;
}

PretrainConfig small_pretrain() {
  PretrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.crop_frames = 60;
  cfg.encoder = small_encoder();
  cfg.log_wall_time = false;
  return cfg;
}

FinetuneConfig small_finetune(FinetuneObjective objective) {
  FinetuneConfig cfg;
  cfg.objective = objective;
  cfg.speakers_per_batch = 2;
  cfg.utterances_per_speaker = 2;
  cfg.epochs = 2;
  cfg.seed = 10;
  cfg.segment_frames = 60;
  cfg.encoder = small_encoder();
  cfg.log_wall_time = false;
  return cfg;
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidParam;
}

TEST(PlannerTest, TwoUtteranceCorpusUsesBoth) {
  Corpus c;
  c.utterances = {small_corpus().utterances[0], small_corpus().utterances[3]};
  Rng rng(1);
  const auto plan = plan_pretrain_epoch(c, 2, rng);
  ASSERT_EQ(plan.size(), 1u);
  auto batch = plan[0];
  std::sort(batch.begin(), batch.end());
  EXPECT_EQ(batch, (std::vector<size_t>{0, 1}));
  EXPECT_EQ(code_of([&] { plan_pretrain_epoch(c, 3, rng); }), ErrorCode::kCorpusTooSmall);
}

TEST(PlannerTest, NoRepeatsOverManyBatches) {
  const Corpus& c = small_corpus();
  const Corpus unlabeled = label_free(c);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto b = sample_batch_indices(c, 4, rng);
    ASSERT_EQ(b.size(), 4u);
    std::set<std::string> speakers;
    for (size_t idx : b) speakers.insert(c.utterances[idx].speaker_id);
    EXPECT_EQ(speakers.size(), 4u);
    const auto u = sample_batch_indices(unlabeled, 7, rng);
    EXPECT_EQ(std::set<size_t>(u.begin(), u.end()).size(), 7u);
  }
  EXPECT_EQ(code_of([&] { sample_batch_indices(c, 5, rng); }), ErrorCode::kCorpusTooSmall);
}

TEST(PlannerTest, EpochPlanCoversEachUtteranceAtMostOnce) {
  const Corpus& c = small_corpus();
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto plan = plan_pretrain_epoch(c, 4, rng);
    EXPECT_EQ(plan.size(), 3u);  // 4 speakers x 3 utterances, K = 4
    std::set<size_t> seen;
    for (const auto& batch : plan) {
      std::set<std::string> speakers;
      for (size_t idx : batch) {
        EXPECT_TRUE(seen.insert(idx).second);
        speakers.insert(c.utterances[idx].speaker_id);
      }
      EXPECT_EQ(speakers.size(), batch.size());
    }
  }
  Rng a(5), b(5);
  EXPECT_EQ(plan_pretrain_epoch(c, 2, a), plan_pretrain_epoch(c, 2, b));
}

TEST(PlannerTest, FinetuneGroups) {
  const Corpus& c = small_corpus();
  Rng rng(3);
  const auto plan = plan_finetune_epoch(c, 2, 2, rng);
  ASSERT_FALSE(plan.empty());
  for (const auto& batch : plan) {
    ASSERT_EQ(batch.size(), 2u);
    std::set<std::string> speakers;
    for (const auto& group : batch) {
      ASSERT_EQ(group.size(), 2u);
      EXPECT_NE(group[0], group[1]);
      EXPECT_EQ(c.utterances[group[0]].speaker_id, c.utterances[group[1]].speaker_id);
      speakers.insert(c.utterances[group[0]].speaker_id);
    }
    EXPECT_EQ(speakers.size(), 2u);
  }
  EXPECT_THROW(plan_finetune_epoch(label_free(c), 2, 2, rng), Error);
}

TEST(AssembleTest, IndependentOfWorkerCount) {
  const Corpus& c = small_corpus();
  PretrainConfig cfg = small_pretrain();
  const AugmentBank bank = AugmentBank::synthetic(1);
  const LogMelExtractor extractor(cfg.features);
  const std::vector<size_t> idx{0, 4, 8};
  const PretrainBatch a = assemble_pretrain_batch(c, idx, cfg, bank, extractor, 77);
  cfg.workers = 3;
  const PretrainBatch b = assemble_pretrain_batch(c, idx, cfg, bank, extractor, 77);
  ASSERT_EQ(a.view1.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.view1[i].values, b.view1[i].values);
    EXPECT_EQ(a.view2[i].values, b.view2[i].values);
    EXPECT_EQ(a.view1[i].frames(), 60);
    EXPECT_NE(a.view1[i].values, a.view2[i].values);
  }
}

TEST(MetricLogTest, AppendOnlyAndRoundTrip) {
  MetricLog log;
  log.append({1, 1e-3, 2.5, -1.0, 3.5, 10.0, -5.0, 12});
  log.append({2, 1e-3, 2.0, -1.5, 3.5, 10.1, -5.1, 0});
  EXPECT_EQ(code_of([&] { log.append({2, 0, 0, 0, 0, 0, 0, 0}); }), ErrorCode::kInvalidParam);
  const std::string text = log.to_string();
  EXPECT_EQ(text.substr(0, text.find('\n')), MetricLog::kHeader);
  EXPECT_EQ(MetricLog::unflatten(log.flatten()).to_string(), text);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(ConfigTest, Validation) {
  PretrainConfig p = small_pretrain();
  p.batch_size = 1;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::kBatchTooSmall);
  p = small_pretrain();
  p.encoder.input_dim = 30;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::kShapeMismatch);
  FinetuneConfig f = small_finetune(FinetuneObjective::kAngularPrototypical);
  f.utterances_per_speaker = 3;
  EXPECT_EQ(code_of([&] { f.validate(); }), ErrorCode::kBatchShapeInvalid);
  f = small_finetune(FinetuneObjective::kCosFace);
  f.margin.scale = 0.0;
  EXPECT_EQ(code_of([&] { f.validate(); }), ErrorCode::kInvalidParam);
}

TEST(PretrainTest, DeterministicLogAndCheckpoint) {
  PretrainConfig cfg = small_pretrain();
  cfg.epochs = 1;
  const auto a = pretrain(small_corpus(), cfg);
  cfg.workers = 2;
  const auto b = pretrain(small_corpus(), cfg);
  EXPECT_EQ(a.log.to_string(), b.log.to_string());
  EXPECT_EQ(a.checkpoint.serialize(), b.checkpoint.serialize());
  ASSERT_EQ(a.log.records().size(), 1u);
  EXPECT_EQ(a.log.records()[0].wall_ms, 0);
  EXPECT_NEAR(a.log.records()[0].loss_total,
              a.log.records()[0].loss_unif + a.log.records()[0].loss_sim, 1e-12);
}

// Reference loop that never evaluates the uniformity term, built from the
// public pieces with the documented seed streams.
std::vector<double> similarity_only_run(const Corpus& corpus, const PretrainConfig& cfg,
                                        SimilarityParams* sim_out) {
  Encoder enc(cfg.encoder);
  enc.init_glorot(derive_seed(cfg.seed, {0x1417}));
  const AugmentBank bank = AugmentBank::synthetic(derive_seed(cfg.seed, {0xba4c}));
  const LogMelExtractor extractor(cfg.features);
  OptimizerState enc_opt = OptimizerState::for_size(enc.num_parameters());
  OptimizerState head_opt = OptimizerState::for_size(2);
  SimilarityParams sim = cfg.init_similarity;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    enc_opt.lr = head_opt.lr = lr_at(cfg.schedule, epoch);
    const uint64_t epoch_seed = derive_seed(cfg.seed, {static_cast<uint64_t>(epoch)});
    Rng plan_rng(derive_seed(epoch_seed, {0x91a7}));
    for (const auto& idx :
         plan_pretrain_epoch(corpus, static_cast<size_t>(cfg.batch_size), plan_rng)) {
      const PretrainBatch batch =
          assemble_pretrain_batch(corpus, idx, cfg, bank, extractor, epoch_seed);
      const auto k = static_cast<Eigen::Index>(idx.size());
      Matrix v1(k, cfg.encoder.embedding_dim), v2(k, cfg.encoder.embedding_dim);
      std::vector<Encoder::Cache> c1(idx.size()), c2(idx.size());
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto u = static_cast<size_t>(i);
        v1.row(i) = enc.forward(batch.view1[u], &c1[u]).values().transpose();
        v2.row(i) = enc.forward(batch.view2[u], &c2[u]).values().transpose();
      }
      const LossOutput loss = similarity_loss(EmbeddingBatch(v1, v2), sim, cfg.similarity);
      std::vector<double> grad(enc.num_parameters(), 0.0);
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto u = static_cast<size_t>(i);
        enc.backward(loss.grad_view1.row(i).transpose(), c1[u], grad);
      }
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto u = static_cast<size_t>(i);
        enc.backward(loss.grad_view2.row(i).transpose(), c2[u], grad);
      }
      adam_step(enc_opt, enc.parameters(), grad);
      enc.touch();
      std::array<double, 2> head{sim.w, sim.b};
      adam_step(head_opt, head, std::array<double, 2>{loss.grad_w, loss.grad_b});
      sim = {head[0], head[1]};
      sim.clamp();
    }
  }
  *sim_out = sim;
  return {enc.parameters().begin(), enc.parameters().end()};
}

TEST(PretrainTest, ZeroLambdaMatchesSimilarityOnlyTraining) {
  for (auto kind : {SimilarityKind::kAngularPrototypical, SimilarityKind::kAngularContrastive}) {
    PretrainConfig cfg = small_pretrain();
    cfg.lambda = 0.0;
    cfg.similarity = kind;
    const auto run = pretrain(small_corpus(), cfg);
    SimilarityParams sim;
    const auto ref = similarity_only_run(small_corpus(), cfg, &sim);
    const auto p = run.encoder.parameters();
    ASSERT_EQ(p.size(), ref.size());
    double worst = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(p[i] - ref[i]));
    EXPECT_LE(worst, 1e-12);
    EXPECT_NEAR(run.similarity.w, sim.w, 1e-12);
    EXPECT_NEAR(run.similarity.b, sim.b, 1e-12);
    for (const auto& r : run.log.records()) {
      EXPECT_NE(r.loss_unif, 0.0);  // still reported
      EXPECT_NEAR(r.loss_total, r.loss_sim, 1e-12);
    }
  }
}

TEST(PretrainTest, ResumeIsBitIdentical) {
  PretrainConfig cfg = small_pretrain();
  cfg.epochs = 3;
  const auto full = pretrain(small_corpus(), cfg);
  cfg.epochs = 1;
  const auto first = pretrain(small_corpus(), cfg);
  const Checkpoint saved = Checkpoint::deserialize(first.checkpoint.serialize());
  cfg.epochs = 3;
  const auto resumed = pretrain(small_corpus(), cfg, &saved);
  EXPECT_EQ(resumed.checkpoint.serialize(), full.checkpoint.serialize());
  EXPECT_EQ(resumed.log.to_string(), full.log.to_string());
  for (size_t i = 1; i < full.log.records().size(); ++i) {
    EXPECT_EQ(full.log.records()[i].epoch, full.log.records()[i - 1].epoch + 1);
  }
}

TEST(FinetuneTest, ResumeIsBitIdenticalForEveryObjective) {
  for (auto obj : {FinetuneObjective::kAngularPrototypical, FinetuneObjective::kAngularContrastive,
                   FinetuneObjective::kGe2e, FinetuneObjective::kCosFace,
                   FinetuneObjective::kArcFace, FinetuneObjective::kAdaCos}) {
    FinetuneConfig cfg = small_finetune(obj);
    const auto full = finetune(small_corpus(), cfg);
    cfg.epochs = 1;
    const auto first = finetune(small_corpus(), cfg);
    cfg.epochs = 2;
    const auto resumed = finetune(small_corpus(), cfg, &first.checkpoint);
    EXPECT_EQ(resumed.checkpoint.serialize(), full.checkpoint.serialize()) << objective_name(obj);
    ASSERT_EQ(full.log.records().size(), 2u);
    EXPECT_GE(full.log.records()[0].loss_total, 0.0);
    const bool classifier = obj == FinetuneObjective::kCosFace ||
                            obj == FinetuneObjective::kArcFace ||
                            obj == FinetuneObjective::kAdaCos;
    EXPECT_EQ(full.classifier.has_value(), classifier);
    EXPECT_EQ(full.checkpoint.find("classifier") != nullptr, classifier);
  }
}

TEST(FinetuneTest, PretrainedInitTakesEncoderOnly) {
  const auto pre = pretrain(small_corpus(), small_pretrain());
  FinetuneConfig cfg = small_finetune(FinetuneObjective::kCosFace);
  cfg.epochs = 0;
  const auto run = finetune(small_corpus(), cfg, &pre.checkpoint);
  EXPECT_TRUE(std::equal(run.encoder.parameters().begin(), run.encoder.parameters().end(),
                         pre.encoder.parameters().begin()));
  EncoderConfig other = small_encoder();
  other.embedding_dim = 5;
  cfg.encoder = other;
  EXPECT_EQ(code_of([&] { finetune(small_corpus(), cfg, &pre.checkpoint); }),
            ErrorCode::kCheckpointMismatch);
}

TEST(FinetuneTest, NeedsLabels) {
  const Corpus unlabeled = label_free(small_corpus());
  EXPECT_EQ(code_of([&] {
              finetune(unlabeled, small_finetune(FinetuneObjective::kGe2e));
            }),
            ErrorCode::kInvalidParam);
}

TEST(EmbedTest, UnitNormPerUtterance) {
  const auto pre = pretrain(small_corpus(), small_pretrain());
  const LogMelExtractor extractor(FeatureConfig{});
  const auto emb = embed_corpus(pre.encoder, extractor, small_corpus(), 2);
  ASSERT_EQ(emb.size(), small_corpus().utterances.size());
  for (const auto& [id, v] : emb) EXPECT_NEAR(v.norm(), 1.0, 1e-12) << id;
  const Vector one = embed_waveform(pre.encoder, extractor, small_corpus().utterances[0].wave);
  EXPECT_EQ(one, emb.at(small_corpus().utterances[0].utterance_id));
}

}  // namespace
}  // namespace cel
