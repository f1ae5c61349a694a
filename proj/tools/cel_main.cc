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

// cel: corpus generation, pre-training, fine-tuning, evaluation and
// gradient checks from one binary.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "cel/checkpoint.h"
#include "cel/error.h"
#include "cel/evaluation.h"
#include "cel/gradcheck.h"
#include "cel/logging.h"
#include "cel/run_config.h"
#include "cel/synth_corpus.h"
#include "cel/trainer.h"

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointName = "checkpoint.bin";
constexpr const char* kMetricsName = "metrics.tsv";
constexpr const char* kScoresName = "scores.txt";
constexpr const char* kDetName = "det.csv";
constexpr const char* kTrialsName = "trials.txt";

// Options shared by every training-related subcommand.
struct CommonFlags {
  std::string config_path;
  std::string profile;
  uint64_t seed = 0;
  int workers = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration");
    app->add_option("--profile", profile, "base profile: desk or paper");
    seed_opt = app->add_option("--seed", seed, "run seed");
    workers_opt = app->add_option("--workers", workers, "feature/augmentation threads");
  }

  // Profile < file < flags.
  cel::RunConfig resolve() const {
    cel::RunConfig cfg;
    if (config_path.empty()) {
      cfg = cel::profile_config(profile.empty() ? "desk" : profile);
    } else {
      cfg = cel::load_run_config(config_path, profile.empty() ? "desk" : profile);
      if (!profile.empty() && cfg.profile != profile) {
        cfg = cel::load_run_config(config_path, profile);
      }
    }
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (workers_opt->count() > 0) cfg.workers = workers;
    return cfg;
  }
};

template <typename T>
void override(CLI::Option* opt, const T& value, T& target) {
  if (opt->count() > 0) target = value;
}

int gen_data(const CommonFlags& common, const fs::path& out) {
  cel::RunConfig cfg = common.resolve();
  cfg.validate();
  const auto write = [&](const cel::CorpusConfig& cc, const fs::path& root) {
    const cel::Corpus corpus = cel::generate_corpus(cc);
    cel::write_corpus(corpus, root);
    double seconds = 0.0;
    for (const auto& u : corpus.utterances) {
      seconds += static_cast<double>(u.wave.size()) / u.wave.sample_rate;
    }
    fmt::print("{}: {} speakers, {} utterances, {:.1f} s total\n", root.string(),
               corpus.speakers().size(), corpus.utterances.size(), seconds);
    return corpus;
  };
  write(cfg.corpus_config(), out / "train");
  if (cfg.eval_corpus_enabled) {
    const cel::Corpus eval = write(cfg.eval_corpus_config(), out / "eval");
    std::vector<std::string> ids, groups;
    for (const auto& u : eval.utterances) {
      ids.push_back(u.utterance_id);
      groups.push_back(u.speaker_id);
    }
    const auto trials = cel::all_pair_trials(ids, groups);
    cel::write_trial_list(out / "eval" / kTrialsName, trials);
    fmt::print("{}: {} trials\n", (out / "eval" / kTrialsName).string(), trials.size());
  }
  cel::write_config_echo(out, cfg);
  return 0;
}

void write_outcome(const fs::path& out, const cel::RunConfig& cfg,
                   const cel::TrainingOutcome& run) {
  fs::create_directories(out);
  cel::save_checkpoint(out / kCheckpointName, run.checkpoint);
  run.log.write(out / kMetricsName);
  cel::write_config_echo(out, cfg);
  if (!run.log.records().empty()) {
    const auto& last = run.log.records().back();
    fmt::print("epoch {}: loss_total {:.6f} loss_unif {:.6f} loss_sim {:.6f} w {:.4f} b {:.4f}\n",
               last.epoch, last.loss_total, last.loss_unif, last.loss_sim, last.w, last.b);
  }
  fmt::print("wrote {}, {}, {}\n", (out / kCheckpointName).string(),
             (out / kMetricsName).string(), (out / cel::kConfigEchoName).string());
}

void log_epoch(const char* stage, const cel::MetricRecord& r) {
  spdlog::info("{} epoch {} lr {:.3g} loss {:.5f} (unif {:.5f}, sim {:.5f}) w {:.3f} b {:.3f}",
               stage, r.epoch, r.lr, r.loss_total, r.loss_unif, r.loss_sim, r.w, r.b);
}

}  // namespace

int main(int argc, char** argv) {
  cel::init_logging();
  CLI::App app{"Contrastive equilibrium learning for speaker embeddings"};
  app.require_subcommand(1);
  std::string stage = "cli";

  // gen-data
  CommonFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus and eval trials");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "output directory")->required();

  // pretrain
  CommonFlags pre_flags;
  std::string pre_corpus, pre_out, pre_resume;
  double lambda = 1.0;
  int pre_epochs = 0, batch = 0;
  std::string similarity;
  auto* pre = app.add_subcommand("pretrain", "unsupervised CEL pre-training");
  pre_flags.attach(pre);
  pre->add_option("--corpus", pre_corpus, "corpus directory with manifest.tsv")->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_option("--resume", pre_resume, "continue from a pre-training checkpoint");
  auto* lambda_opt = pre->add_option("--lambda", lambda, "uniformity weight");
  auto* pre_epochs_opt = pre->add_option("--epochs", pre_epochs, "training epochs");
  auto* batch_opt = pre->add_option("--batch-size", batch, "utterances per batch (K)");
  auto* sim_opt = pre->add_option("--similarity", similarity, "aprot or acont");

  // finetune
  CommonFlags ft_flags;
  std::string ft_corpus, ft_out, init = "random", objective;
  double margin = 0.0, scale = 0.0;
  int ft_epochs = 0;
  auto* ft = app.add_subcommand("finetune", "supervised fine-tuning");
  ft_flags.attach(ft);
  ft->add_option("--corpus", ft_corpus, "labeled corpus directory")->required();
  ft->add_option("--out", ft_out, "output directory")->required();
  ft->add_option("--init", init, "random or a checkpoint path");
  auto* objective_opt = ft->add_option(
      "--objective", objective, "aprot, acont, ge2e, cosface, arcface or adacos");
  auto* margin_opt = ft->add_option("--margin", margin, "CosFace/ArcFace margin");
  auto* scale_opt = ft->add_option("--scale", scale, "CosFace/ArcFace scale");
  auto* ft_epochs_opt = ft->add_option("--epochs", ft_epochs, "training epochs");

  // evaluate
  CommonFlags ev_flags;
  std::string ev_ckpt, ev_trials, ev_corpus, ev_out;
  auto* ev = app.add_subcommand("evaluate", "score a trial list and report EER/MinDCF");
  ev_flags.attach(ev);
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--trials", ev_trials, "trial list: <0|1> <enroll> <test> per line")->required();
  ev->add_option("--corpus", ev_corpus, "corpus holding the trial utterances")->required();
  ev->add_option("--out", ev_out, "output directory")->required();

  // gradcheck
  std::string scope = "all";
  cel::GradCheckConfig gc;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--scope", scope,
                   "all, unif, aprot, acont, total, ge2e, cosface, arcface, adacos, encoder");
  grad->add_option("--seed", gc.seed, "instance seed");
  grad->add_option("--instances", gc.instances, "instances per loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      stage = "gen-data";
      return gen_data(gen_flags, gen_out);
    }
    if (*pre) {
      stage = "pretrain";
      cel::RunConfig cfg = pre_flags.resolve();
      override(lambda_opt, lambda, cfg.pretrain.lambda);
      override(pre_epochs_opt, pre_epochs, cfg.pretrain.epochs);
      override(batch_opt, batch, cfg.pretrain.batch_size);
      if (sim_opt->count() > 0) cfg.pretrain.similarity = cel::parse_similarity_kind(similarity);
      cfg.validate();
      if (cfg.pretrain.lambda == 0.0) {
        spdlog::info("lambda = 0: similarity-only ablation, uniformity is logged but not trained");
      }
      const cel::Corpus corpus = cel::load_corpus(pre_corpus);
      std::optional<cel::Checkpoint> resume;
      if (!pre_resume.empty()) resume = cel::load_checkpoint(pre_resume);
      const auto run = cel::pretrain(corpus, cfg.pretrain_config(),
                                     resume ? &*resume : nullptr,
                                     [](const auto& r) { log_epoch("pretrain", r); });
      write_outcome(pre_out, cfg, run);
      return 0;
    }
    if (*ft) {
      stage = "finetune";
      cel::RunConfig cfg = ft_flags.resolve();
      if (objective_opt->count() > 0) cfg.finetune.objective = cel::parse_objective(objective);
      override(margin_opt, margin, cfg.finetune.margin.margin);
      override(scale_opt, scale, cfg.finetune.margin.scale);
      override(ft_epochs_opt, ft_epochs, cfg.finetune.epochs);
      cfg.validate();
      const cel::Corpus corpus = cel::load_corpus(ft_corpus);
      std::optional<cel::Checkpoint> start;
      if (init != "random") start = cel::load_checkpoint(init, cfg.encoder.describe());
      const auto run = cel::finetune(corpus, cfg.finetune_config(),
                                     start ? &*start : nullptr,
                                     [](const auto& r) { log_epoch("finetune", r); });
      write_outcome(ft_out, cfg, run);
      return 0;
    }
    if (*ev) {
      stage = "evaluate";
      const cel::RunConfig cfg = ev_flags.resolve();
      cfg.validate();
      const cel::Checkpoint ckpt = cel::load_checkpoint(ev_ckpt, cfg.encoder.describe());
      const cel::Encoder encoder = cel::load_encoder(ckpt, cfg.encoder);
      auto trials = cel::read_trial_list(ev_trials);
      const cel::Corpus corpus = cel::load_corpus(ev_corpus);
      const cel::LogMelExtractor extractor(cfg.features);
      // Trial entries may name an utterance by id or by its manifest path.
      auto embeddings = cel::embed_corpus(encoder, extractor, corpus, cfg.workers);
      for (const auto& utt : corpus.utterances) {
        embeddings.emplace(utt.path, embeddings.at(utt.utterance_id));
      }
      trials = cel::score_trials(embeddings, std::move(trials));
      const auto e = cel::eer(trials);
      const auto d = cel::min_dcf(trials, cfg.dcf);
      fs::create_directories(ev_out);
      cel::write_scores(fs::path(ev_out) / kScoresName, trials);
      cel::write_det_csv(fs::path(ev_out) / kDetName, cel::det_points(trials));
      cel::write_config_echo(ev_out, cfg);
      fmt::print("trials {}\nEER {:.4f}%\nMinDCF {:.4f} (c_miss={}, c_fa={}, p_target={})\n",
                 trials.size(), 100.0 * e.eer, d.min_dcf, cfg.dcf.c_miss, cfg.dcf.c_fa,
                 cfg.dcf.p_target);
      return 0;
    }
    if (*grad) {
      stage = "gradcheck";
      const auto rows = cel::run_gradcheck(cel::parse_scope(scope), gc);
      fmt::print("{}", cel::format_gradcheck(rows));
      bool ok = true;
      for (const auto& r : rows) {
        if (!r.passed) {
          ok = false;
          fmt::print(stderr, "gradcheck: {} failed, max rel err {:.3e} at instance {} {}\n",
                     r.loss, r.max_rel_error, r.worst_instance, r.worst_coordinate);
        }
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "cel {}: {}\n", stage, e.what());
    return 1;
  }
  return 0;
}
