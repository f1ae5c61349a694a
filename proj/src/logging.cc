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

#include "cel/logging.h"

#include <cstdlib>
#include <string>

#include <spdlog/spdlog.h>

namespace cel {

void init_logging() {
  const char* env = std::getenv("CEL_LOG");
  const std::string level = env != nullptr ? env : "info";
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  if (level == "quiet") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("unknown CEL_LOG value '{}', using info", level);
  }
}

}  // namespace cel
