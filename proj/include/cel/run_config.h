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

#ifndef CEL_RUN_CONFIG_H_
#define CEL_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "cel/evaluation.h"
#include "cel/synth_corpus.h"
#include "cel/trainer.h"

namespace cel {

// Everything a CLI run needs. Sections mirror the JSON document:
//
//   { "profile": "desk", "seed": 1, "workers": 1,
//     "corpus": {...}, "eval_corpus": {...}, "features": {...},
//     "augment": {...}, "encoder": {...}, "pretrain": {...},
//     "finetune": {...}, "evaluate": {...} }
//
// Every key is optional; absent keys keep the profile value. Unknown keys
// raise kSchemaError naming the key path.
struct RunConfig {
  std::string profile = "desk";
  uint64_t seed = 1;
  int workers = 1;
  CorpusConfig corpus;
  CorpusConfig eval_corpus;
  bool eval_corpus_enabled = true;
  FeatureConfig features;
  AugmentConfig augment;
  std::filesystem::path bank_dir;
  EncoderConfig encoder;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  DcfParams dcf;

  // Section configs with the shared fields (seed, workers, features,
  // encoder, augmentation) filled in.
  PretrainConfig pretrain_config() const;
  FinetuneConfig finetune_config() const;
  CorpusConfig corpus_config() const;
  CorpusConfig eval_corpus_config() const;

  void validate() const;
};

// "desk": small, fast defaults for one CPU core. "paper": full-scale
// recipe (K = 200, 500 / 250 epochs).
RunConfig profile_config(const std::string& name);

// Applies `doc` on top of `base`.
RunConfig apply_config(const nlohmann::json& doc, RunConfig base);

// Reads a JSON file. A top-level "profile" key selects the base profile,
// otherwise `default_profile` is used.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::string& default_profile = "desk");

nlohmann::json to_json(const RunConfig& cfg);

inline constexpr const char* kConfigEchoName = "config.json";

// Writes the fully resolved configuration to dir/config.json.
void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg);

}  // namespace cel

#endif  // CEL_RUN_CONFIG_H_
