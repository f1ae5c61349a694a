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

#ifndef CEL_WAV_IO_H_
#define CEL_WAV_IO_H_

#include <filesystem>

#include "cel/audio_features.h"

namespace cel {

// Reads a mono 16-bit signed little-endian PCM WAV at 16 kHz. Any other
// encoding raises kWavFormat with the offending field in the message.
Waveform read_wav(const std::filesystem::path& path);

// Writes `wave` as mono 16-bit PCM. Samples are clipped to [-1, 1] and
// rounded to the nearest 1/32767 step.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

}  // namespace cel

#endif  // CEL_WAV_IO_H_
