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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cel/error.h"

namespace cel {
namespace {

using nlohmann::json;

std::string schema_message(const json& doc) {
  try {
    apply_config(doc, profile_config("desk"));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaError);
    return e.what();
  }
  ADD_FAILURE() << "accepted " << doc.dump();
  return {};
}

TEST(RunConfigTest, Profiles) {
  const RunConfig desk = profile_config("desk");
  EXPECT_EQ(desk.pretrain.batch_size, 8);
  EXPECT_NO_THROW(desk.validate());
  const RunConfig paper = profile_config("paper");
  EXPECT_EQ(paper.pretrain.batch_size, 200);
  EXPECT_EQ(paper.pretrain.epochs, 500);
  EXPECT_EQ(paper.finetune.epochs, 250);
  EXPECT_EQ(paper.pretrain.lambda, 1.0);
  EXPECT_EQ(paper.pretrain.t, 2.0);
  EXPECT_EQ(paper.finetune.margin.margin, 0.2);
  EXPECT_EQ(paper.finetune.margin.scale, 30.0);
  EXPECT_EQ(paper.finetune.segment_frames, 300);
  EXPECT_EQ(paper.dcf.p_target, 0.05);
  EXPECT_THROW(profile_config("laptop"), Error);
}

TEST(RunConfigTest, UnknownKeysAreNamed) {
  EXPECT_NE(schema_message({{"pretrain", {{"foo", 1}}}}).find("pretrain.foo"),
            std::string::npos);
  EXPECT_NE(schema_message({{"bogus", 1}}).find("bogus"), std::string::npos);
  EXPECT_NE(schema_message({{"features", {{"mel", 40}}}}).find("features.mel"),
            std::string::npos);
}

TEST(RunConfigTest, BadValues) {
  EXPECT_NE(schema_message({{"pretrain", {{"batch_size", "eight"}}}}).find("pretrain.batch_size"),
            std::string::npos);
  EXPECT_NE(schema_message({{"finetune", {{"objective", "softmax"}}}}).find("finetune.objective"),
            std::string::npos);
  const RunConfig tiny_batch =
      apply_config({{"pretrain", {{"batch_size", 1}}}}, profile_config("desk"));
  try {
    tiny_batch.validate();
    ADD_FAILURE() << "K = 1 accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaError);
  }
  schema_message({{"profile", "paper"}});
}

TEST(RunConfigTest, OverridesAndSharedFields) {
  const json doc = {{"seed", 7},
                    {"workers", 2},
                    {"features", {{"num_mels", 24}}},
                    {"encoder", {{"input_dim", 24}, {"hidden", {32}}, {"pooling", "mean+std"}}},
                    {"pretrain", {{"lambda", 0.5}, {"similarity", "acont"}}},
                    {"finetune", {{"objective", "arcface"}, {"margin", 0.3}}}};
  const RunConfig cfg = apply_config(doc, profile_config("desk"));
  const PretrainConfig p = cfg.pretrain_config();
  EXPECT_EQ(p.seed, 7u);
  EXPECT_EQ(p.workers, 2);
  EXPECT_EQ(p.features.num_mels, 24);
  EXPECT_EQ(p.encoder.hidden, std::vector<int>{32});
  EXPECT_EQ(p.encoder.pooling, Pooling::kMeanStd);
  EXPECT_EQ(p.lambda, 0.5);
  EXPECT_EQ(p.similarity, SimilarityKind::kAngularContrastive);
  const FinetuneConfig f = cfg.finetune_config();
  EXPECT_EQ(f.objective, FinetuneObjective::kArcFace);
  EXPECT_EQ(f.margin.margin, 0.3);
  EXPECT_EQ(f.encoder, p.encoder);
  EXPECT_EQ(cfg.corpus_config().seed, 7u);
  EXPECT_NE(cfg.eval_corpus_config().seed, 7u);
  EXPECT_EQ(cfg.eval_corpus_config().speaker_prefix, "evl");
}

TEST(RunConfigTest, EchoRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "cel_run_config_test";
  std::filesystem::remove_all(dir);
  RunConfig cfg = profile_config("desk");
  cfg.seed = 99;
  cfg.finetune.objective = FinetuneObjective::kGe2e;
  cfg.finetune.utterances_per_speaker = 3;
  write_config_echo(dir, cfg);
  const RunConfig back = load_run_config(dir / kConfigEchoName);
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.seed, 99u);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_run_config(dir / "broken.json"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace cel
