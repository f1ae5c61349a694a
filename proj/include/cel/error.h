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

#ifndef CEL_ERROR_H_
#define CEL_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace cel {

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kBatchTooSmall,
  kBatchShapeInvalid,
  kLabelOutOfRange,
  kSingleClass,
  kInvalidParam,
  kInvalidRange,
  kTooShort,
  kUtteranceTooShort,
  kEmptyImpulse,
  kShapeMismatch,
  kNormalizationDegenerate,
  kStaleCache,
  kCorpusTooSmall,
  kCheckpointMismatch,
  kDegenerateTrials,
  kUnknownId,
  kParseError,
  kIoError,
  kSchemaError,
  kWavFormat,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this exception; `code()` names
// the failure class so callers and tests can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cel

#endif  // CEL_ERROR_H_
