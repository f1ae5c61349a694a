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

#include "cel/error.h"

namespace cel {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kBatchShapeInvalid: return "BatchShapeInvalid";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kInvalidParam: return "InvalidParam";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kUtteranceTooShort: return "UtteranceTooShort";
    case ErrorCode::kEmptyImpulse: return "EmptyImpulse";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNormalizationDegenerate: return "NormalizationDegenerate";
    case ErrorCode::kStaleCache: return "StaleCache";
    case ErrorCode::kCorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::kCheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::kDegenerateTrials: return "DegenerateTrials";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kWavFormat: return "WavFormat";
  }
  return "Unknown";
}

}  // namespace cel
