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

#ifndef CEL_TRAINER_H_
#define CEL_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cel/audio_features.h"
#include "cel/augmentation.h"
#include "cel/cel_losses.h"
#include "cel/checkpoint.h"
#include "cel/encoder.h"
#include "cel/finetune_losses.h"
#include "cel/optimizer.h"
#include "cel/synth_corpus.h"

namespace cel {

std::string similarity_kind_name(SimilarityKind kind);
SimilarityKind parse_similarity_kind(const std::string& name);

enum class FinetuneObjective {
  kAngularPrototypical,
  kAngularContrastive,
  kGe2e,
  kCosFace,
  kArcFace,
  kAdaCos,
};

std::string objective_name(FinetuneObjective objective);
FinetuneObjective parse_objective(const std::string& name);

struct PretrainConfig {
  int batch_size = 200;  // K utterances, 2K crops
  double lambda = 1.0;
  double t = 2.0;
  SimilarityKind similarity = SimilarityKind::kAngularPrototypical;
  int epochs = 500;
  uint64_t seed = 1;
  LrSchedule schedule{1e-3, 0.05, 10};
  int crop_frames = 180;
  bool wrap_pad = false;
  SimilarityParams init_similarity;
  EncoderConfig encoder;
  FeatureConfig features;
  AugmentConfig augment;
  std::filesystem::path bank_dir;  // empty: synthetic bank from `seed`
  int workers = 1;
  bool log_wall_time = true;

  void validate() const;
};

struct FinetuneConfig {
  FinetuneObjective objective = FinetuneObjective::kAngularPrototypical;
  MarginConfig margin;
  int speakers_per_batch = 8;
  int utterances_per_speaker = 2;
  int epochs = 250;
  uint64_t seed = 1;
  LrSchedule schedule{1e-3, 0.10, 10};
  int segment_frames = 300;
  SimilarityParams init_similarity;
  EncoderConfig encoder;
  FeatureConfig features;
  int workers = 1;
  bool log_wall_time = true;

  void validate() const;
};

struct MetricRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_unif = 0.0;
  double loss_sim = 0.0;
  double w = 0.0;
  double b = 0.0;
  int64_t wall_ms = 0;
};

// Append-only per-epoch log, written as tab-separated text with a header.
class MetricLog {
 public:
  static constexpr const char* kHeader =
      "epoch\tlr\tloss_total\tloss_unif\tloss_sim\tw\tb\twall_ms";

  // Raises kInvalidParam unless record.epoch exceeds the last epoch.
  void append(const MetricRecord& record);
  const std::vector<MetricRecord>& records() const { return records_; }

  std::string to_string() const;
  void write(const std::filesystem::path& path) const;

  std::vector<double> flatten() const;
  static MetricLog unflatten(const std::vector<double>& values);

 private:
  std::vector<MetricRecord> records_;
};

using EpochCallback = std::function<void(const MetricRecord&)>;

struct TrainingOutcome {
  Encoder encoder;
  SimilarityParams similarity;
  std::optional<ClassifierWeights> classifier;
  std::optional<AdaCosState> adacos;
  MetricLog log;
  Checkpoint checkpoint;
};

// Splits the corpus into batches of `k` utterances for one epoch. When the
// corpus carries speaker ids no batch holds two utterances of one speaker;
// otherwise batches are drawn one utterance per file. Utterances that cannot
// complete a batch are dropped for this epoch.
std::vector<std::vector<size_t>> plan_pretrain_epoch(const Corpus& corpus,
                                                     size_t k, Rng& rng);

// One batch of `k` utterances under the same constraint.
std::vector<size_t> sample_batch_indices(const Corpus& corpus, size_t k,
                                         Rng& rng);

// Batches of `speakers` groups, each holding `per_speaker` utterances of one
// speaker. Requires speaker ids.
std::vector<std::vector<std::vector<size_t>>> plan_finetune_epoch(
    const Corpus& corpus, size_t speakers, size_t per_speaker, Rng& rng);

struct PretrainBatch {
  std::vector<size_t> utterances;
  std::vector<std::pair<AugmentSpec, AugmentSpec>> specs;
  std::vector<FeatureMatrix> view1;
  std::vector<FeatureMatrix> view2;
};

// Crops each listed utterance twice, augments each crop independently and
// extracts features. Item i draws its randomness from
// derive_seed(epoch_seed, {utterance, crop}), so the result does not depend
// on `workers`.
PretrainBatch assemble_pretrain_batch(const Corpus& corpus,
                                      std::span<const size_t> utterances,
                                      const PretrainConfig& cfg,
                                      const AugmentBank& bank,
                                      const LogMelExtractor& extractor,
                                      uint64_t epoch_seed);

// Unsupervised pre-training with lambda * uniformity + similarity. With
// `resume`, training continues from the epoch stored in that checkpoint.
TrainingOutcome pretrain(const Corpus& corpus, const PretrainConfig& cfg,
                         const Checkpoint* resume = nullptr,
                         const EpochCallback& on_epoch = {});

// Supervised fine-tuning. `init` may be a pre-training checkpoint (only the
// encoder is taken) or a fine-tuning checkpoint for the same objective
// (training resumes).
TrainingOutcome finetune(const Corpus& corpus, const FinetuneConfig& cfg,
                         const Checkpoint* init = nullptr,
                         const EpochCallback& on_epoch = {});

// Loads encoder weights from a checkpoint written for `cfg`.
Encoder load_encoder(const Checkpoint& ckpt, const EncoderConfig& cfg);

// Unit embedding of a whole waveform.
Vector embed_waveform(const Encoder& encoder, const LogMelExtractor& extractor,
                      const Waveform& wave);

std::map<std::string, Vector> embed_corpus(const Encoder& encoder,
                                           const LogMelExtractor& extractor,
                                           const Corpus& corpus,
                                           int workers = 1);

}  // namespace cel

#endif  // CEL_TRAINER_H_
