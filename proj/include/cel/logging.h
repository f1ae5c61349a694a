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

#ifndef CEL_LOGGING_H_
#define CEL_LOGGING_H_

namespace cel {

// Sets the spdlog level from CEL_LOG: "quiet" (errors only), "info"
// (default) or "debug". Unknown values fall back to info with a warning.
void init_logging();

}  // namespace cel

#endif  // CEL_LOGGING_H_
