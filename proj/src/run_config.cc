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

#include "cel/run_config.h"

#include <fstream>
#include <set>

#include "cel/error.h"

namespace cel {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) {
      throw Error(ErrorCode::kSchemaError, where() + " must be an object");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError, "bad value for '" + join(key) + "': " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    std::string name;
    const bool present = doc_.contains(key);
    get(key, name);
    if (!present) return;
    try {
      out = parse(name);
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaError, "bad value for '" + join(key) + "': " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.count(item.key())) {
        throw Error(ErrorCode::kSchemaError, "unknown key '" + join(item.key()) + "'");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "mean+std") return Pooling::kMeanStd;
  throw Error(ErrorCode::kSchemaError, "unknown pooling '" + name + "' (mean or mean+std)");
}

std::string pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "mean+std"; }

void read_corpus(const json& doc, const std::string& path, CorpusConfig* c,
                 bool* enabled) {
  Section s(doc, path);
  s.get("num_speakers", c->num_speakers);
  s.get("utterances_per_speaker", c->utterances_per_speaker);
  s.get("duration_s", c->duration_s);
  s.get("speaker_prefix", c->speaker_prefix);
  if (enabled != nullptr) s.get("enabled", *enabled);
  s.finish();
}

void read_schedule(Section& s, LrSchedule* schedule) {
  s.get("lr", schedule->initial_lr);
  s.get("decay_fraction", schedule->decay_fraction);
  s.get("period_epochs", schedule->period_epochs);
}

json corpus_json(const CorpusConfig& c) {
  return {{"num_speakers", c.num_speakers},
          {"utterances_per_speaker", c.utterances_per_speaker},
          {"duration_s", c.duration_s},
          {"speaker_prefix", c.speaker_prefix}};
}

}  // namespace

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig c = pretrain;
  c.seed = seed;
  c.workers = workers;
  c.features = features;
  c.encoder = encoder;
  c.augment = augment;
  c.bank_dir = bank_dir;
  return c;
}

FinetuneConfig RunConfig::finetune_config() const {
  FinetuneConfig c = finetune;
  c.seed = seed;
  c.workers = workers;
  c.features = features;
  c.encoder = encoder;
  return c;
}

CorpusConfig RunConfig::corpus_config() const {
  CorpusConfig c = corpus;
  c.seed = seed;
  return c;
}

CorpusConfig RunConfig::eval_corpus_config() const {
  CorpusConfig c = eval_corpus;
  c.seed = derive_seed(seed, {0xe7a1});
  return c;
}

void RunConfig::validate() const {
  if (workers < 1) throw Error(ErrorCode::kSchemaError, "'workers' must be >= 1");
  for (const auto* c : {&corpus, &eval_corpus}) {
    if (c->num_speakers < 1 || c->utterances_per_speaker < 1) {
      throw Error(ErrorCode::kSchemaError, "corpus sizes must be positive");
    }
    if (!(c->duration_s >= min_utterance_seconds())) {
      throw Error(ErrorCode::kSchemaError,
                  "corpus duration_s must be >= " + std::to_string(min_utterance_seconds()));
    }
  }
  if (corpus.speaker_prefix == eval_corpus.speaker_prefix) {
    throw Error(ErrorCode::kSchemaError,
                "corpus and eval_corpus need different speaker_prefix values");
  }
  try {
    pretrain_config().validate();
    finetune_config().validate();
    dcf.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaError, e.what());
  }
}

RunConfig profile_config(const std::string& name) {
  RunConfig cfg;
  cfg.profile = name;
  cfg.eval_corpus.num_speakers = 16;
  cfg.eval_corpus.speaker_prefix = "evl";
  if (name == "desk") {
    cfg.pretrain.batch_size = 8;
    cfg.pretrain.epochs = 30;
    cfg.pretrain.crop_frames = 180;
    cfg.finetune.epochs = 30;
    cfg.finetune.segment_frames = 200;
    cfg.features.mean_norm = false;
    return cfg;
  }
  if (name == "paper") {
    cfg.pretrain.batch_size = 200;
    cfg.pretrain.epochs = 500;
    cfg.finetune.epochs = 250;
    return cfg;
  }
  throw Error(ErrorCode::kSchemaError, "unknown profile '" + name + "' (desk or paper)");
}

RunConfig apply_config(const json& doc, RunConfig cfg) {
  Section top(doc, "");
  std::string profile = cfg.profile;
  top.get("profile", profile);
  if (profile != cfg.profile) {
    throw Error(ErrorCode::kSchemaError,
                "'profile' is " + profile + " but the base profile is " + cfg.profile);
  }
  top.get("seed", cfg.seed);
  top.get("workers", cfg.workers);
  if (const json* j = top.child("corpus")) read_corpus(*j, "corpus", &cfg.corpus, nullptr);
  if (const json* j = top.child("eval_corpus")) {
    read_corpus(*j, "eval_corpus", &cfg.eval_corpus, &cfg.eval_corpus_enabled);
  }
  if (const json* j = top.child("features")) {
    Section s(*j, "features");
    auto& f = cfg.features;
    s.get("num_mels", f.num_mels);
    s.get("win_length", f.win_length);
    s.get("hop_length", f.hop_length);
    s.get("fft_size", f.fft_size);
    s.get("f_min", f.f_min);
    s.get("f_max", f.f_max);
    s.get("log_floor", f.log_floor);
    s.get("mean_norm", f.mean_norm);
    s.finish();
  }
  if (const json* j = top.child("augment")) {
    Section s(*j, "augment");
    auto& a = cfg.augment;
    s.get("snr_min_db", a.snr_min_db);
    s.get("snr_max_db", a.snr_max_db);
    s.get("rt60_min_ms", a.rt60_min_ms);
    s.get("rt60_max_ms", a.rt60_max_ms);
    s.get("rir_length_ms", a.rir_length_ms);
    std::string bank = cfg.bank_dir.string();
    s.get("bank_dir", bank);
    cfg.bank_dir = bank;
    s.finish();
  }
  if (const json* j = top.child("encoder")) {
    Section s(*j, "encoder");
    auto& e = cfg.encoder;
    s.get("input_dim", e.input_dim);
    s.get("hidden", e.hidden);
    s.get("embedding_dim", e.embedding_dim);
    s.get_enum("pooling", e.pooling, parse_pooling);
    std::string activation = "relu";
    s.get("activation", activation);
    if (activation != "relu") {
      throw Error(ErrorCode::kSchemaError, "'encoder.activation' must be relu");
    }
    s.finish();
  }
  if (const json* j = top.child("pretrain")) {
    Section s(*j, "pretrain");
    auto& p = cfg.pretrain;
    s.get("batch_size", p.batch_size);
    s.get("lambda", p.lambda);
    s.get("t", p.t);
    s.get_enum("similarity", p.similarity, parse_similarity_kind);
    s.get("epochs", p.epochs);
    read_schedule(s, &p.schedule);
    s.get("crop_frames", p.crop_frames);
    s.get("wrap_pad", p.wrap_pad);
    s.get("init_w", p.init_similarity.w);
    s.get("init_b", p.init_similarity.b);
    s.get("log_wall_time", p.log_wall_time);
    s.finish();
  }
  if (const json* j = top.child("finetune")) {
    Section s(*j, "finetune");
    auto& f = cfg.finetune;
    s.get_enum("objective", f.objective, parse_objective);
    s.get("margin", f.margin.margin);
    s.get("scale", f.margin.scale);
    s.get("speakers_per_batch", f.speakers_per_batch);
    s.get("utterances_per_speaker", f.utterances_per_speaker);
    s.get("epochs", f.epochs);
    read_schedule(s, &f.schedule);
    s.get("segment_frames", f.segment_frames);
    s.get("init_w", f.init_similarity.w);
    s.get("init_b", f.init_similarity.b);
    s.get("log_wall_time", f.log_wall_time);
    s.finish();
  }
  if (const json* j = top.child("evaluate")) {
    Section s(*j, "evaluate");
    s.get("c_miss", cfg.dcf.c_miss);
    s.get("c_fa", cfg.dcf.c_fa);
    s.get("p_target", cfg.dcf.p_target);
    s.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::string& default_profile) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, path.string() + ": " + e.what());
  }
  std::string profile = default_profile;
  if (doc.is_object() && doc.contains("profile") && doc["profile"].is_string()) {
    profile = doc["profile"].get<std::string>();
  }
  return apply_config(doc, profile_config(profile));
}

json to_json(const RunConfig& c) {
  json eval = corpus_json(c.eval_corpus);
  eval["enabled"] = c.eval_corpus_enabled;
  const auto& f = c.features;
  const auto& p = c.pretrain;
  const auto& t = c.finetune;
  return {
      {"profile", c.profile},
      {"seed", c.seed},
      {"workers", c.workers},
      {"corpus", corpus_json(c.corpus)},
      {"eval_corpus", eval},
      {"features",
       {{"num_mels", f.num_mels}, {"win_length", f.win_length},
        {"hop_length", f.hop_length}, {"fft_size", f.fft_size},
        {"f_min", f.f_min}, {"f_max", f.f_max}, {"log_floor", f.log_floor},
        {"mean_norm", f.mean_norm}}},
      {"augment",
       {{"snr_min_db", c.augment.snr_min_db}, {"snr_max_db", c.augment.snr_max_db},
        {"rt60_min_ms", c.augment.rt60_min_ms}, {"rt60_max_ms", c.augment.rt60_max_ms},
        {"rir_length_ms", c.augment.rir_length_ms}, {"bank_dir", c.bank_dir.string()}}},
      {"encoder",
       {{"input_dim", c.encoder.input_dim}, {"hidden", c.encoder.hidden},
        {"embedding_dim", c.encoder.embedding_dim},
        {"pooling", pooling_name(c.encoder.pooling)}, {"activation", "relu"}}},
      {"pretrain",
       {{"batch_size", p.batch_size}, {"lambda", p.lambda}, {"t", p.t},
        {"similarity", similarity_kind_name(p.similarity)}, {"epochs", p.epochs},
        {"lr", p.schedule.initial_lr}, {"decay_fraction", p.schedule.decay_fraction},
        {"period_epochs", p.schedule.period_epochs}, {"crop_frames", p.crop_frames},
        {"wrap_pad", p.wrap_pad}, {"init_w", p.init_similarity.w},
        {"init_b", p.init_similarity.b}, {"log_wall_time", p.log_wall_time}}},
      {"finetune",
       {{"objective", objective_name(t.objective)}, {"margin", t.margin.margin},
        {"scale", t.margin.scale}, {"speakers_per_batch", t.speakers_per_batch},
        {"utterances_per_speaker", t.utterances_per_speaker}, {"epochs", t.epochs},
        {"lr", t.schedule.initial_lr}, {"decay_fraction", t.schedule.decay_fraction},
        {"period_epochs", t.schedule.period_epochs},
        {"segment_frames", t.segment_frames}, {"init_w", t.init_similarity.w},
        {"init_b", t.init_similarity.b}, {"log_wall_time", t.log_wall_time}}},
      {"evaluate",
       {{"c_miss", c.dcf.c_miss}, {"c_fa", c.dcf.c_fa}, {"p_target", c.dcf.p_target}}},
  };
}

void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kConfigEchoName;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace cel
