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

#ifndef CEL_CHECKPOINT_H_
#define CEL_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cel {

// Named blocks of little-endian float64 values plus the config string they
// were produced under.
//
// File layout:
//   "CELCKPT1"
//   u64 config length, config bytes
//   u64 block count
//   per block: u64 name length, name bytes, u64 value count, f64 values
// All integers and floats little-endian.
struct Checkpoint {
  std::string config;
  std::vector<std::pair<std::string, std::vector<double>>> blocks;

  const std::vector<double>* find(const std::string& name) const;
  const std::vector<double>& at(const std::string& name) const;
  void put(const std::string& name, std::vector<double> values);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// As above, but raises kCheckpointMismatch unless the stored config equals
// `expected_config`.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::string& expected_config);

}  // namespace cel

#endif  // CEL_CHECKPOINT_H_
