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

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cel/error.h"

namespace cel {

namespace {

constexpr char kMagic[] = "CELCKPT1";
constexpr size_t kMagicSize = 8;

void put_u64(std::string* out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, size_t start) : bytes_(bytes), pos_(start) {}

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string str(uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(uint64_t n) const {
    if (n > bytes_.size() - pos_) {
      throw Error(ErrorCode::kParseError, "checkpoint is truncated");
    }
  }

  const std::string& bytes_;
  size_t pos_;
};

}  // namespace

const std::vector<double>* Checkpoint::find(const std::string& name) const {
  for (const auto& [key, values] : blocks) {
    if (key == name) return &values;
  }
  return nullptr;
}

const std::vector<double>& Checkpoint::at(const std::string& name) const {
  const auto* values = find(name);
  if (values == nullptr) {
    throw Error(ErrorCode::kCheckpointMismatch, "checkpoint has no block " + name);
  }
  return *values;
}

void Checkpoint::put(const std::string& name, std::vector<double> values) {
  for (auto& [key, existing] : blocks) {
    if (key == name) {
      existing = std::move(values);
      return;
    }
  }
  blocks.emplace_back(name, std::move(values));
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, kMagicSize);
  put_u64(&out, config.size());
  out += config;
  put_u64(&out, blocks.size());
  for (const auto& [name, values] : blocks) {
    put_u64(&out, name.size());
    out += name;
    put_u64(&out, values.size());
    for (double v : values) put_u64(&out, std::bit_cast<uint64_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < kMagicSize || bytes.compare(0, kMagicSize, kMagic) != 0) {
    throw Error(ErrorCode::kParseError, "not a checkpoint (bad magic)");
  }
  Reader in(bytes, kMagicSize);
  Checkpoint ckpt;
  ckpt.config = in.str(in.u64());
  const uint64_t count = in.u64();
  for (uint64_t b = 0; b < count; ++b) {
    std::string name = in.str(in.u64());
    const uint64_t n = in.u64();
    std::vector<double> values;
    values.reserve(n);
    for (uint64_t i = 0; i < n; ++i) values.push_back(std::bit_cast<double>(in.u64()));
    ckpt.blocks.emplace_back(std::move(name), std::move(values));
  }
  if (!in.done()) {
    throw Error(ErrorCode::kParseError, "trailing bytes after checkpoint blocks");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  const std::string bytes = ckpt.serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return Checkpoint::deserialize(buf.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::string& expected_config) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config != expected_config) {
    throw Error(ErrorCode::kCheckpointMismatch,
                path.string() + " was written for \"" + ckpt.config +
                    "\", expected \"" + expected_config + "\"");
  }
  return ckpt;
}

}  // namespace cel
