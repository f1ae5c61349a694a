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
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "cel/error.h"
#include "cel/rng.h"

namespace cel {

namespace {

constexpr uint64_t kPlanStream = 0x91a7;
constexpr uint64_t kItemStream = 0x17e4;
constexpr uint64_t kInitStream = 0x1417;
constexpr uint64_t kClassifierStream = 0xc1a5;
constexpr uint64_t kBankStream = 0xba4c;

constexpr double kStagePretrain = 0.0;
constexpr size_t kMetricFields = 8;

// Runs f(0) .. f(n - 1) on up to `workers` threads. Each index writes only
// its own output slot, so results do not depend on scheduling.
template <typename F>
void parallel_for(size_t n, int workers, F&& f) {
  const size_t threads = std::min<size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < n; i = next++) {
          try {
            f(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

Waveform cut_segment(const Waveform& wave, size_t length, Rng& rng) {
  Waveform out;
  out.sample_rate = wave.sample_rate;
  if (wave.size() < length) {
    out.samples.resize(length);
    for (size_t i = 0; i < length; ++i) out.samples[i] = wave.samples[i % wave.size()];
    return out;
  }
  const size_t start =
      std::uniform_int_distribution<size_t>(0, wave.size() - length)(rng);
  out.samples.assign(wave.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     wave.samples.begin() + static_cast<std::ptrdiff_t>(start + length));
  return out;
}

std::map<std::string, std::vector<size_t>> utterances_by_speaker(
    const Corpus& corpus) {
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < corpus.utterances.size(); ++i) {
    groups[corpus.utterances[i].speaker_id].push_back(i);
  }
  return groups;
}

// Greedy batching of per-speaker queues: each batch takes one item from
// each of the `k` speakers with the most items left (random tie-break).
template <typename Item>
std::vector<std::vector<Item>> batch_distinct(
    std::vector<std::vector<Item>> queues, size_t k, Rng& rng) {
  std::vector<std::vector<Item>> batches;
  std::vector<size_t> order(queues.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  while (true) {
    std::vector<size_t> live;
    for (size_t i : order) {
      if (!queues[i].empty()) live.push_back(i);
    }
    if (live.size() < k) break;
    std::shuffle(live.begin(), live.end(), rng);
    std::stable_sort(live.begin(), live.end(), [&](size_t a, size_t b) {
      return queues[a].size() > queues[b].size();
    });
    std::vector<Item> batch;
    for (size_t j = 0; j < k; ++j) {
      batch.push_back(std::move(queues[live[j]].back()));
      queues[live[j]].pop_back();
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

struct EpochSums {
  double total = 0.0;
  double unif = 0.0;
  double sim = 0.0;
  size_t batches = 0;
};

int64_t elapsed_ms(std::chrono::steady_clock::time_point start, bool enabled) {
  if (!enabled) return 0;
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

double stage_code(FinetuneObjective objective) {
  return 1.0 + static_cast<double>(objective);
}

void put_optimizer(Checkpoint* ckpt, const std::string& name,
                   const OptimizerState& state) {
  ckpt->put(name + ".m", state.m);
  ckpt->put(name + ".v", state.v);
}

void get_optimizer(const Checkpoint& ckpt, const std::string& name,
                   OptimizerState* state) {
  const auto& m = ckpt.at(name + ".m");
  const auto& v = ckpt.at(name + ".v");
  if (m.size() != state->m.size() || v.size() != state->v.size()) {
    throw Error(ErrorCode::kCheckpointMismatch,
                "optimizer state " + name + " has the wrong size");
  }
  state->m = m;
  state->v = v;
}

// Runs the encoder over every feature matrix; rows of the result are the
// embeddings, in order.
Matrix forward_all(const Encoder& encoder, const std::vector<FeatureMatrix>& feats,
                   std::vector<Encoder::Cache>* caches) {
  caches->assign(feats.size(), {});
  Matrix rows(static_cast<Eigen::Index>(feats.size()),
              encoder.config().embedding_dim);
  for (size_t i = 0; i < feats.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) =
        encoder.forward(feats[i], &(*caches)[i]).values().transpose();
  }
  return rows;
}

void backward_all(const Encoder& encoder, const Matrix& grad_rows,
                  const std::vector<Encoder::Cache>& caches,
                  std::span<double> param_grad) {
  for (size_t i = 0; i < caches.size(); ++i) {
    encoder.backward(grad_rows.row(static_cast<Eigen::Index>(i)).transpose(),
                     caches[i], param_grad);
  }
}

}  // namespace

std::string similarity_kind_name(SimilarityKind kind) {
  return kind == SimilarityKind::kAngularPrototypical ? "aprot" : "acont";
}

SimilarityKind parse_similarity_kind(const std::string& name) {
  if (name == "aprot") return SimilarityKind::kAngularPrototypical;
  if (name == "acont") return SimilarityKind::kAngularContrastive;
  throw Error(ErrorCode::kSchemaError,
              "unknown similarity loss '" + name + "' (expected aprot or acont)");
}

std::string objective_name(FinetuneObjective objective) {
  switch (objective) {
    case FinetuneObjective::kAngularPrototypical: return "aprot";
    case FinetuneObjective::kAngularContrastive: return "acont";
    case FinetuneObjective::kGe2e: return "ge2e";
    case FinetuneObjective::kCosFace: return "cosface";
    case FinetuneObjective::kArcFace: return "arcface";
    case FinetuneObjective::kAdaCos: return "adacos";
  }
  return "?";
}

FinetuneObjective parse_objective(const std::string& name) {
  for (auto o : {FinetuneObjective::kAngularPrototypical,
                 FinetuneObjective::kAngularContrastive, FinetuneObjective::kGe2e,
                 FinetuneObjective::kCosFace, FinetuneObjective::kArcFace,
                 FinetuneObjective::kAdaCos}) {
    if (objective_name(o) == name) return o;
  }
  throw Error(ErrorCode::kSchemaError,
              "unknown objective '" + name +
                  "' (expected aprot, acont, ge2e, cosface, arcface or adacos)");
}

void PretrainConfig::validate() const {
  if (batch_size < 2) {
    throw Error(ErrorCode::kBatchTooSmall, "pre-training needs K >= 2");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidParam, "lambda must be >= 0");
  KernelParam{t};
  if (epochs < 0) throw Error(ErrorCode::kInvalidParam, "epochs must be >= 0");
  if (crop_frames < 1) throw Error(ErrorCode::kInvalidParam, "crop_frames must be >= 1");
  schedule.validate();
  encoder.validate();
  if (encoder.input_dim != features.num_mels) {
    throw Error(ErrorCode::kShapeMismatch, "encoder input_dim must equal num_mels");
  }
}

void FinetuneConfig::validate() const {
  if (speakers_per_batch < 2) {
    throw Error(ErrorCode::kBatchShapeInvalid, "need at least two speakers per batch");
  }
  if (utterances_per_speaker < 1) {
    throw Error(ErrorCode::kBatchShapeInvalid, "need at least one utterance per speaker");
  }
  const bool pair = objective == FinetuneObjective::kAngularPrototypical ||
                    objective == FinetuneObjective::kAngularContrastive;
  if (pair && utterances_per_speaker != 2) {
    throw Error(ErrorCode::kBatchShapeInvalid,
                objective_name(objective) + " pairs two utterances per speaker");
  }
  if (objective == FinetuneObjective::kGe2e && utterances_per_speaker < 2) {
    throw Error(ErrorCode::kBatchShapeInvalid, "GE2E needs U >= 2");
  }
  if (!(margin.margin >= 0.0) || !(margin.scale > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "margin must be >= 0 and scale > 0");
  }
  if (epochs < 0) throw Error(ErrorCode::kInvalidParam, "epochs must be >= 0");
  if (segment_frames < 1) throw Error(ErrorCode::kInvalidParam, "segment_frames must be >= 1");
  schedule.validate();
  encoder.validate();
  if (encoder.input_dim != features.num_mels) {
    throw Error(ErrorCode::kShapeMismatch, "encoder input_dim must equal num_mels");
  }
}

void MetricLog::append(const MetricRecord& record) {
  if (!records_.empty() && record.epoch <= records_.back().epoch) {
    throw Error(ErrorCode::kInvalidParam,
                fmt::format("metric log epoch {} does not follow {}", record.epoch,
                            records_.back().epoch));
  }
  records_.push_back(record);
}

std::string MetricLog::to_string() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : records_) {
    out += fmt::format("{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\t{}\n",
                       r.epoch, r.lr, r.loss_total, r.loss_unif, r.loss_sim, r.w,
                       r.b, r.wall_ms);
  }
  return out;
}

void MetricLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << to_string();
}

std::vector<double> MetricLog::flatten() const {
  std::vector<double> flat;
  flat.reserve(records_.size() * kMetricFields);
  for (const auto& r : records_) {
    flat.insert(flat.end(), {static_cast<double>(r.epoch), r.lr, r.loss_total,
                             r.loss_unif, r.loss_sim, r.w, r.b,
                             static_cast<double>(r.wall_ms)});
  }
  return flat;
}

MetricLog MetricLog::unflatten(const std::vector<double>& values) {
  if (values.size() % kMetricFields != 0) {
    throw Error(ErrorCode::kParseError, "metric block has a partial record");
  }
  MetricLog log;
  for (size_t i = 0; i < values.size(); i += kMetricFields) {
    log.append({static_cast<int>(values[i]), values[i + 1], values[i + 2],
                values[i + 3], values[i + 4], values[i + 5], values[i + 6],
                static_cast<int64_t>(values[i + 7])});
  }
  return log;
}

std::vector<std::vector<size_t>> plan_pretrain_epoch(const Corpus& corpus,
                                                     size_t k, Rng& rng) {
  if (corpus.utterances.size() < k) {
    throw Error(ErrorCode::kCorpusTooSmall,
                fmt::format("corpus has {} utterances, batch needs {}",
                            corpus.utterances.size(), k));
  }
  std::vector<std::vector<size_t>> batches;
  if (corpus.has_speakers()) {
    std::vector<std::vector<size_t>> queues;
    for (auto& [speaker, utts] : utterances_by_speaker(corpus)) {
      std::shuffle(utts.begin(), utts.end(), rng);
      queues.push_back(std::move(utts));
    }
    if (queues.size() < k) {
      throw Error(ErrorCode::kCorpusTooSmall,
                  fmt::format("corpus has {} speakers, batch needs {} distinct",
                              queues.size(), k));
    }
    batches = batch_distinct(std::move(queues), k, rng);
  } else {
    std::vector<size_t> order(corpus.utterances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start + k <= order.size(); start += k) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(start + k));
    }
  }
  return batches;
}

std::vector<size_t> sample_batch_indices(const Corpus& corpus, size_t k,
                                         Rng& rng) {
  if (corpus.utterances.size() < k) {
    throw Error(ErrorCode::kCorpusTooSmall,
                fmt::format("corpus has {} utterances, batch needs {}",
                            corpus.utterances.size(), k));
  }
  std::vector<size_t> batch;
  if (corpus.has_speakers()) {
    auto groups = utterances_by_speaker(corpus);
    if (groups.size() < k) {
      throw Error(ErrorCode::kCorpusTooSmall,
                  fmt::format("corpus has {} speakers, batch needs {} distinct",
                              groups.size(), k));
    }
    std::vector<const std::vector<size_t>*> speakers;
    for (const auto& [id, utts] : groups) speakers.push_back(&utts);
    std::shuffle(speakers.begin(), speakers.end(), rng);
    for (size_t j = 0; j < k; ++j) {
      const auto& utts = *speakers[j];
      batch.push_back(utts[std::uniform_int_distribution<size_t>(0, utts.size() - 1)(rng)]);
    }
  } else {
    std::vector<size_t> order(corpus.utterances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    batch.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return batch;
}

std::vector<std::vector<std::vector<size_t>>> plan_finetune_epoch(
    const Corpus& corpus, size_t speakers, size_t per_speaker, Rng& rng) {
  if (!corpus.has_speakers()) {
    throw Error(ErrorCode::kInvalidParam,
                "fine-tuning needs speaker labels; the manifest marks some "
                "utterances with '-'");
  }
  std::vector<std::vector<std::vector<size_t>>> queues;
  for (auto& [speaker, utts] : utterances_by_speaker(corpus)) {
    std::shuffle(utts.begin(), utts.end(), rng);
    std::vector<std::vector<size_t>> groups;
    for (size_t start = 0; start + per_speaker <= utts.size(); start += per_speaker) {
      groups.emplace_back(utts.begin() + static_cast<std::ptrdiff_t>(start),
                          utts.begin() + static_cast<std::ptrdiff_t>(start + per_speaker));
    }
    if (!groups.empty()) queues.push_back(std::move(groups));
  }
  if (queues.size() < speakers) {
    throw Error(ErrorCode::kCorpusTooSmall,
                fmt::format("{} speakers have {} utterances, batch needs {}",
                            queues.size(), per_speaker, speakers));
  }
  return batch_distinct(std::move(queues), speakers, rng);
}

PretrainBatch assemble_pretrain_batch(const Corpus& corpus,
                                      std::span<const size_t> utterances,
                                      const PretrainConfig& cfg,
                                      const AugmentBank& bank,
                                      const LogMelExtractor& extractor,
                                      uint64_t epoch_seed) {
  const size_t n = utterances.size();
  PretrainBatch batch;
  batch.utterances.assign(utterances.begin(), utterances.end());
  batch.specs.resize(n);
  batch.view1.resize(n);
  batch.view2.resize(n);
  parallel_for(n, cfg.workers, [&](size_t i) {
    const size_t utt = utterances[i];
    const Utterance& source = corpus.utterances.at(utt);
    Rng crop_rng(derive_seed(epoch_seed, {kItemStream, utt, 0}));
    CropPair pair = crop_two(source.wave, static_cast<size_t>(cfg.crop_frames),
                             crop_rng, cfg.wrap_pad, cfg.features);
    pair.source_id = source.utterance_id;
    Rng aug_rng(derive_seed(epoch_seed, {kItemStream, utt, 1}));
    batch.specs[i] = sample_augment_pair(bank, cfg.augment, pair.crop1.size(), aug_rng);
    batch.view1[i] = extractor.compute(
        apply_augment(pair.crop1, batch.specs[i].first, bank, cfg.augment));
    batch.view2[i] = extractor.compute(
        apply_augment(pair.crop2, batch.specs[i].second, bank, cfg.augment));
  });
  return batch;
}

Encoder load_encoder(const Checkpoint& ckpt, const EncoderConfig& cfg) {
  if (ckpt.config != cfg.describe()) {
    throw Error(ErrorCode::kCheckpointMismatch,
                "checkpoint encoder \"" + ckpt.config + "\" differs from \"" +
                    cfg.describe() + "\"");
  }
  Encoder encoder(cfg);
  encoder.set_parameters(ckpt.at("encoder"));
  return encoder;
}

TrainingOutcome pretrain(const Corpus& corpus, const PretrainConfig& cfg,
                         const Checkpoint* resume, const EpochCallback& on_epoch) {
  cfg.validate();
  const auto k = static_cast<size_t>(cfg.batch_size);
  const KernelParam kernel(cfg.t);
  const CelWeights weights{cfg.lambda};
  const LogMelExtractor extractor(cfg.features);
  const AugmentBank bank = cfg.bank_dir.empty()
                               ? AugmentBank::synthetic(derive_seed(cfg.seed, {kBankStream}))
                               : AugmentBank::load(cfg.bank_dir);

  TrainingOutcome run{Encoder(cfg.encoder), cfg.init_similarity, {}, {}, {}, {}};
  run.encoder.init_glorot(derive_seed(cfg.seed, {kInitStream}));
  OptimizerState enc_opt = OptimizerState::for_size(run.encoder.num_parameters());
  OptimizerState head_opt = OptimizerState::for_size(2);
  int start_epoch = 0;

  if (resume != nullptr) {
    run.encoder = load_encoder(*resume, cfg.encoder);
    const auto& progress = resume->at("progress");
    if (progress.size() != 4 || progress[0] != kStagePretrain) {
      throw Error(ErrorCode::kCheckpointMismatch,
                  "resume checkpoint is not a pre-training checkpoint");
    }
    start_epoch = static_cast<int>(progress[1]);
    enc_opt.step = static_cast<uint64_t>(progress[2]);
    head_opt.step = static_cast<uint64_t>(progress[3]);
    get_optimizer(*resume, "optim.encoder", &enc_opt);
    get_optimizer(*resume, "optim.similarity", &head_opt);
    const auto& sim = resume->at("similarity");
    run.similarity = {sim.at(0), sim.at(1)};
    run.log = MetricLog::unflatten(resume->at("metrics"));
  }

  std::vector<double> grad(run.encoder.num_parameters());
  std::vector<Encoder::Cache> caches1, caches2;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_at(cfg.schedule, epoch);
    enc_opt.lr = lr;
    head_opt.lr = lr;
    const uint64_t epoch_seed = derive_seed(cfg.seed, {static_cast<uint64_t>(epoch)});
    Rng plan_rng(derive_seed(epoch_seed, {kPlanStream}));
    const auto plan = plan_pretrain_epoch(corpus, k, plan_rng);
    if (plan.empty()) {
      throw Error(ErrorCode::kCorpusTooSmall, "epoch plan produced no batches");
    }

    EpochSums sums;
    for (const auto& indices : plan) {
      const PretrainBatch batch =
          assemble_pretrain_batch(corpus, indices, cfg, bank, extractor, epoch_seed);
      const EmbeddingBatch embeddings(forward_all(run.encoder, batch.view1, &caches1),
                                      forward_all(run.encoder, batch.view2, &caches2));
      const CelLoss loss =
          cel_loss(embeddings, kernel, run.similarity, weights, cfg.similarity);

      std::fill(grad.begin(), grad.end(), 0.0);
      backward_all(run.encoder, loss.total.grad_view1, caches1, grad);
      backward_all(run.encoder, loss.total.grad_view2, caches2, grad);
      adam_step(enc_opt, run.encoder.parameters(), grad);
      run.encoder.touch();

      std::array<double, 2> head{run.similarity.w, run.similarity.b};
      const std::array<double, 2> head_grad{loss.total.grad_w, loss.total.grad_b};
      adam_step(head_opt, head, head_grad);
      run.similarity = {head[0], head[1]};
      run.similarity.clamp();

      sums.total += loss.total.value;
      sums.unif += loss.uniformity;
      sums.sim += loss.similarity;
      ++sums.batches;
    }
    const double nb = static_cast<double>(sums.batches);
    const MetricRecord record{epoch + 1,         lr,
                              sums.total / nb,   sums.unif / nb,
                              sums.sim / nb,     run.similarity.w,
                              run.similarity.b,  elapsed_ms(started, cfg.log_wall_time)};
    run.log.append(record);
    spdlog::debug("pretrain epoch {} lr {:.6g} total {:.6f} unif {:.6f} sim {:.6f} w {:.4f} b {:.4f}",
                  record.epoch, record.lr, record.loss_total, record.loss_unif,
                  record.loss_sim, record.w, record.b);
    if (on_epoch) on_epoch(record);
  }

  Checkpoint& ckpt = run.checkpoint;
  ckpt.config = cfg.encoder.describe();
  ckpt.put("encoder", {run.encoder.parameters().begin(), run.encoder.parameters().end()});
  ckpt.put("similarity", {run.similarity.w, run.similarity.b});
  ckpt.put("progress", {kStagePretrain, static_cast<double>(std::max(cfg.epochs, start_epoch)),
                        static_cast<double>(enc_opt.step),
                        static_cast<double>(head_opt.step)});
  put_optimizer(&ckpt, "optim.encoder", enc_opt);
  put_optimizer(&ckpt, "optim.similarity", head_opt);
  ckpt.put("metrics", run.log.flatten());
  return run;
}

TrainingOutcome finetune(const Corpus& corpus, const FinetuneConfig& cfg,
                         const Checkpoint* init, const EpochCallback& on_epoch) {
  cfg.validate();
  const LogMelExtractor extractor(cfg.features);
  const std::vector<std::string> speakers = corpus.speakers();
  std::map<std::string, int> label_of;
  for (size_t i = 0; i < speakers.size(); ++i) label_of[speakers[i]] = static_cast<int>(i);
  const int num_classes = static_cast<int>(speakers.size());
  if (!corpus.has_speakers()) {
    throw Error(ErrorCode::kInvalidParam,
                "fine-tuning needs speaker labels for every utterance");
  }

  const bool pair_objective =
      cfg.objective == FinetuneObjective::kAngularPrototypical ||
      cfg.objective == FinetuneObjective::kAngularContrastive;
  const bool classifier_objective = cfg.objective == FinetuneObjective::kCosFace ||
                                    cfg.objective == FinetuneObjective::kArcFace ||
                                    cfg.objective == FinetuneObjective::kAdaCos;

  TrainingOutcome run{Encoder(cfg.encoder), cfg.init_similarity, {}, {}, {}, {}};
  run.encoder.init_glorot(derive_seed(cfg.seed, {kInitStream}));
  if (classifier_objective) {
    run.classifier = ClassifierWeights::random(num_classes, cfg.encoder.embedding_dim,
                                               derive_seed(cfg.seed, {kClassifierStream}));
  }
  if (cfg.objective == FinetuneObjective::kAdaCos) {
    run.adacos = AdaCosState::initial(num_classes);
  }
  auto head_size = [&] {
    return classifier_objective ? static_cast<size_t>(run.classifier->weights.size())
                                : size_t{2};
  };
  OptimizerState enc_opt = OptimizerState::for_size(run.encoder.num_parameters());
  OptimizerState head_opt = OptimizerState::for_size(head_size());
  int start_epoch = 0;

  if (init != nullptr) {
    run.encoder = load_encoder(*init, cfg.encoder);
    const auto* progress = init->find("progress");
    const bool resuming = progress != nullptr && progress->size() == 4 &&
                          (*progress)[0] == stage_code(cfg.objective);
    if (resuming) {
      start_epoch = static_cast<int>((*progress)[1]);
      enc_opt.step = static_cast<uint64_t>((*progress)[2]);
      head_opt.step = static_cast<uint64_t>((*progress)[3]);
      get_optimizer(*init, "optim.encoder", &enc_opt);
      get_optimizer(*init, "optim.head", &head_opt);
      run.log = MetricLog::unflatten(init->at("metrics"));
      if (classifier_objective) {
        const auto& w = init->at("classifier");
        if (w.size() != head_size()) {
          throw Error(ErrorCode::kCheckpointMismatch,
                      "classifier in checkpoint has a different class count");
        }
        run.classifier->weights =
            Eigen::Map<const Matrix>(w.data(), num_classes, cfg.encoder.embedding_dim);
      } else {
        const auto& sim = init->at("similarity");
        run.similarity = {sim.at(0), sim.at(1)};
      }
      if (run.adacos) run.adacos->scale = init->at("adacos").at(0);
    }
  }

  const size_t segment = samples_for_frames(static_cast<size_t>(cfg.segment_frames),
                                            cfg.features);
  const auto s = static_cast<size_t>(cfg.speakers_per_batch);
  const auto u = static_cast<size_t>(cfg.utterances_per_speaker);
  std::vector<double> grad(run.encoder.num_parameters());
  std::vector<double> head(head_size());
  std::vector<double> head_grad(head_size());
  std::vector<Encoder::Cache> caches;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_at(cfg.schedule, epoch);
    enc_opt.lr = lr;
    head_opt.lr = lr;
    const uint64_t epoch_seed = derive_seed(cfg.seed, {static_cast<uint64_t>(epoch)});
    Rng plan_rng(derive_seed(epoch_seed, {kPlanStream}));
    const auto plan = plan_finetune_epoch(corpus, s, u, plan_rng);
    if (plan.empty()) {
      throw Error(ErrorCode::kCorpusTooSmall, "epoch plan produced no batches");
    }

    EpochSums sums;
    for (const auto& groups : plan) {
      // Row order: group-major, utterance-minor.
      std::vector<size_t> rows;
      std::vector<int> labels;
      for (const auto& g : groups) {
        for (size_t idx : g) {
          rows.push_back(idx);
          labels.push_back(label_of.at(corpus.utterances[idx].speaker_id));
        }
      }
      std::vector<FeatureMatrix> feats(rows.size());
      parallel_for(rows.size(), cfg.workers, [&](size_t i) {
        Rng seg_rng(derive_seed(epoch_seed, {kItemStream, rows[i]}));
        feats[i] = extractor.compute(cut_segment(corpus.utterances[rows[i]].wave,
                                                 segment, seg_rng));
      });
      const Matrix emb = forward_all(run.encoder, feats, &caches);

      Matrix grad_rows = Matrix::Zero(emb.rows(), emb.cols());
      double value = 0.0;
      double grad_w = 0.0;
      double grad_b = 0.0;
      Matrix grad_classifier;
      if (pair_objective) {
        Matrix v1(static_cast<Eigen::Index>(groups.size()), emb.cols());
        Matrix v2(static_cast<Eigen::Index>(groups.size()), emb.cols());
        for (Eigen::Index g = 0; g < v1.rows(); ++g) {
          v1.row(g) = emb.row(2 * g);
          v2.row(g) = emb.row(2 * g + 1);
        }
        const SimilarityKind kind = cfg.objective == FinetuneObjective::kAngularPrototypical
                                        ? SimilarityKind::kAngularPrototypical
                                        : SimilarityKind::kAngularContrastive;
        const LossOutput out = similarity_loss(EmbeddingBatch(v1, v2), run.similarity, kind);
        for (Eigen::Index g = 0; g < v1.rows(); ++g) {
          grad_rows.row(2 * g) = out.grad_view1.row(g);
          grad_rows.row(2 * g + 1) = out.grad_view2.row(g);
        }
        value = out.value;
        grad_w = out.grad_w;
        grad_b = out.grad_b;
      } else {
        const LabeledBatch labeled{emb, labels, num_classes};
        LabeledLossOutput out;
        switch (cfg.objective) {
          case FinetuneObjective::kGe2e:
            out = ge2e_loss(labeled, run.similarity);
            break;
          case FinetuneObjective::kCosFace:
            out = cosface_loss(labeled, *run.classifier, cfg.margin);
            break;
          case FinetuneObjective::kArcFace:
            out = arcface_loss(labeled, *run.classifier, cfg.margin);
            break;
          default:
            out = adacos_loss(labeled, *run.classifier, &*run.adacos);
            break;
        }
        grad_rows = out.grad_embeddings;
        value = out.value;
        grad_w = out.grad_w;
        grad_b = out.grad_b;
        grad_classifier = std::move(out.grad_weights);
      }

      std::fill(grad.begin(), grad.end(), 0.0);
      backward_all(run.encoder, grad_rows, caches, grad);
      adam_step(enc_opt, run.encoder.parameters(), grad);
      run.encoder.touch();

      if (classifier_objective) {
        Matrix& w = run.classifier->weights;
        std::copy(w.data(), w.data() + w.size(), head.begin());
        std::copy(grad_classifier.data(), grad_classifier.data() + grad_classifier.size(),
                  head_grad.begin());
        adam_step(head_opt, head, head_grad);
        std::copy(head.begin(), head.end(), w.data());
      } else {
        head = {run.similarity.w, run.similarity.b};
        head_grad = {grad_w, grad_b};
        adam_step(head_opt, head, head_grad);
        run.similarity = {head[0], head[1]};
        run.similarity.clamp();
      }
      sums.total += value;
      sums.sim += value;
      ++sums.batches;
    }

    const double nb = static_cast<double>(sums.batches);
    double w = run.similarity.w;
    double b = run.similarity.b;
    if (cfg.objective == FinetuneObjective::kCosFace ||
        cfg.objective == FinetuneObjective::kArcFace) {
      w = cfg.margin.scale;
      b = 0.0;
    } else if (cfg.objective == FinetuneObjective::kAdaCos) {
      w = run.adacos->scale;
      b = 0.0;
    }
    const MetricRecord record{epoch + 1, lr, sums.total / nb, 0.0, sums.sim / nb, w, b,
                              elapsed_ms(started, cfg.log_wall_time)};
    run.log.append(record);
    spdlog::debug("finetune[{}] epoch {} lr {:.6g} loss {:.6f}", objective_name(cfg.objective),
                  record.epoch, record.lr, record.loss_total);
    if (on_epoch) on_epoch(record);
  }

  Checkpoint& ckpt = run.checkpoint;
  ckpt.config = cfg.encoder.describe();
  ckpt.put("encoder", {run.encoder.parameters().begin(), run.encoder.parameters().end()});
  ckpt.put("similarity", {run.similarity.w, run.similarity.b});
  if (run.classifier) {
    const Matrix& w = run.classifier->weights;
    ckpt.put("classifier", {w.data(), w.data() + w.size()});
  }
  if (run.adacos) ckpt.put("adacos", {run.adacos->scale});
  ckpt.put("progress", {stage_code(cfg.objective),
                        static_cast<double>(std::max(cfg.epochs, start_epoch)),
                        static_cast<double>(enc_opt.step),
                        static_cast<double>(head_opt.step)});
  put_optimizer(&ckpt, "optim.encoder", enc_opt);
  put_optimizer(&ckpt, "optim.head", head_opt);
  ckpt.put("metrics", run.log.flatten());
  return run;
}

Vector embed_waveform(const Encoder& encoder, const LogMelExtractor& extractor,
                      const Waveform& wave) {
  return encoder.forward(extractor.compute(wave)).values();
}

std::map<std::string, Vector> embed_corpus(const Encoder& encoder,
                                           const LogMelExtractor& extractor,
                                           const Corpus& corpus, int workers) {
  std::vector<Vector> vectors(corpus.utterances.size());
  parallel_for(vectors.size(), workers, [&](size_t i) {
    vectors[i] = embed_waveform(encoder, extractor, corpus.utterances[i].wave);
  });
  std::map<std::string, Vector> out;
  for (size_t i = 0; i < vectors.size(); ++i) {
    out.emplace(corpus.utterances[i].utterance_id, std::move(vectors[i]));
  }
  return out;
}

}  // namespace cel
