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

#include "cel/checkpoint.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "cel/error.h"
#include "cel/wav_io.h"

namespace cel {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cel_ckpt_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
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

Checkpoint sample() {
  Checkpoint c;
  c.config = "input=40;hidden=64;embedding=64;pooling=mean;activation=relu";
  c.put("encoder", {1.0, -0.0, 3.141592653589793, 1e-300,
                    std::numeric_limits<double>::denorm_min()});
  c.put("similarity", {10.0, -5.0});
  c.put("empty", {});
  return c;
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  const Checkpoint c = sample();
  const Checkpoint d = Checkpoint::deserialize(c.serialize());
  EXPECT_EQ(d.config, c.config);
  ASSERT_EQ(d.blocks.size(), 3u);
  for (size_t i = 0; i < c.blocks.size(); ++i) {
    EXPECT_EQ(d.blocks[i].first, c.blocks[i].first);
    ASSERT_EQ(d.blocks[i].second.size(), c.blocks[i].second.size());
    for (size_t j = 0; j < c.blocks[i].second.size(); ++j) {
      EXPECT_EQ(std::signbit(d.blocks[i].second[j]), std::signbit(c.blocks[i].second[j]));
      EXPECT_EQ(d.blocks[i].second[j], c.blocks[i].second[j]);
    }
  }
  EXPECT_EQ(d.serialize(), c.serialize());
}

TEST(CheckpointTest, FileRoundTripAndConfigCheck) {
  const fs::path dir = temp_dir("file");
  const Checkpoint c = sample();
  save_checkpoint(dir / "a.ckpt", c);
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt").serialize(), c.serialize());
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt", c.config).at("similarity")[0], 10.0);
  EXPECT_EQ(code_of([&] { load_checkpoint(dir / "a.ckpt", "input=13"); }),
            ErrorCode::kCheckpointMismatch);
  EXPECT_EQ(code_of([&] { load_checkpoint(dir / "missing.ckpt"); }), ErrorCode::kIoError);
  fs::remove_all(dir);
}

TEST(CheckpointTest, MissingBlock) {
  const Checkpoint c = sample();
  EXPECT_EQ(c.find("optim"), nullptr);
  EXPECT_EQ(code_of([&] { c.at("optim"); }), ErrorCode::kCheckpointMismatch);
}

TEST(CheckpointTest, PutReplacesExistingBlock) {
  Checkpoint c = sample();
  c.put("similarity", {11.0, -6.0});
  EXPECT_EQ(c.blocks.size(), 3u);
  EXPECT_EQ(c.at("similarity")[1], -6.0);
}

TEST(CheckpointTest, CorruptInputs) {
  const std::string bytes = sample().serialize();
  EXPECT_EQ(bytes.substr(0, 8), "CELCKPT1");
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { Checkpoint::deserialize(bad); }), ErrorCode::kParseError);
  for (size_t cut : {size_t{4}, size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(code_of([&] { Checkpoint::deserialize(bytes.substr(0, cut)); }),
              ErrorCode::kParseError);
  }
  EXPECT_EQ(code_of([&] { Checkpoint::deserialize(bytes + "x"); }), ErrorCode::kParseError);
}

TEST(WavTest, RoundTripQuantization) {
  const fs::path dir = temp_dir("wav");
  Waveform w;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(std::sin(0.01 * i) * 0.7);
  w.samples.push_back(1.5);
  w.samples.push_back(-1.5);
  write_wav(dir / "a.wav", w);
  EXPECT_EQ(fs::file_size(dir / "a.wav"), 44u + 2u * w.size());
  const Waveform r = read_wav(dir / "a.wav");
  ASSERT_EQ(r.size(), w.size());
  EXPECT_EQ(r.sample_rate, 16000);
  for (size_t i = 0; i < 1000; ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 0.5 / 32767 + 1e-12);
  EXPECT_NEAR(r.samples[1000], 1.0, 1e-12);
  EXPECT_NEAR(r.samples[1001], -1.0, 1e-12);
  // Quantized values survive a second round trip unchanged.
  write_wav(dir / "b.wav", r);
  EXPECT_EQ(read_wav(dir / "b.wav").samples, r.samples);
  fs::remove_all(dir);
}

TEST(WavTest, RejectsOtherFormats) {
  const fs::path dir = temp_dir("wavfmt");
  Waveform w;
  w.samples.assign(100, 0.1);
  write_wav(dir / "a.wav", w);
  std::string bytes;
  {
    std::ifstream in(dir / "a.wav", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(dir / "b.wav", std::ios::binary | std::ios::trunc);
    out << b;
  };
  std::string stereo = bytes;
  stereo[22] = 2;  // channel count
  write(stereo);
  EXPECT_EQ(code_of([&] { read_wav(dir / "b.wav"); }), ErrorCode::kWavFormat);
  std::string rate = bytes;
  rate[24] = 0x44;  // 8000 Hz little-endian low byte is 0x40; any change breaks 16 kHz
  rate[25] = 0xAC;
  write(rate);
  EXPECT_EQ(code_of([&] { read_wav(dir / "b.wav"); }), ErrorCode::kWavFormat);
  std::string bits = bytes;
  bits[34] = 8;
  write(bits);
  EXPECT_EQ(code_of([&] { read_wav(dir / "b.wav"); }), ErrorCode::kWavFormat);
  write("RIFX");
  EXPECT_EQ(code_of([&] { read_wav(dir / "b.wav"); }), ErrorCode::kWavFormat);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace cel
