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

#include "cel/wav_io.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cel/error.h"

namespace cel {

namespace {

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>* out, uint16_t v) {
  out->push_back(static_cast<unsigned char>(v & 0xff));
  out->push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>* out, const char* tag) {
  out->insert(out->end(), tag, tag + 4);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kWavFormat, "missing RIFF/WAVE header" + where);
  }

  bool have_fmt = false;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = read_u32(chunk + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw Error(ErrorCode::kWavFormat, "truncated chunk" + where);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::kWavFormat, "short fmt chunk" + where);
      const unsigned char* f = bytes.data() + body;
      const uint16_t format = read_u16(f);
      const uint16_t channels = read_u16(f + 2);
      const uint32_t rate = read_u32(f + 4);
      const uint16_t bits = read_u16(f + 14);
      if (format != 1) {
        throw Error(ErrorCode::kWavFormat,
                    "audio format " + std::to_string(format) +
                        " is not integer PCM" + where);
      }
      if (channels != 1) {
        throw Error(ErrorCode::kWavFormat,
                    std::to_string(channels) + " channels, expected mono" + where);
      }
      if (rate != static_cast<uint32_t>(kSampleRate)) {
        throw Error(ErrorCode::kWavFormat,
                    "sample rate " + std::to_string(rate) + ", expected 16000" +
                        where);
      }
      if (bits != 16) {
        throw Error(ErrorCode::kWavFormat,
                    std::to_string(bits) + " bits per sample, expected 16" +
                        where);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw Error(ErrorCode::kWavFormat, "no fmt chunk" + where);
  if (data == nullptr) throw Error(ErrorCode::kWavFormat, "no data chunk" + where);

  Waveform wave;
  wave.samples.resize(data_size / 2);
  for (size_t i = 0; i < wave.samples.size(); ++i) {
    const auto v = static_cast<int16_t>(read_u16(data + 2 * i));
    // Same 1/32767 step as write_wav, so written files read back exactly.
    wave.samples[i] = std::max(-1.0, static_cast<double>(v) / 32767.0);
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) {
    throw Error(ErrorCode::kWavFormat, "only 16 kHz output is supported");
  }
  const auto data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(&out, "RIFF");
  put_u32(&out, 36 + data_bytes);
  put_tag(&out, "WAVE");
  put_tag(&out, "fmt ");
  put_u32(&out, 16);
  put_u16(&out, 1);  // PCM
  put_u16(&out, 1);  // mono
  put_u32(&out, kSampleRate);
  put_u32(&out, kSampleRate * 2);
  put_u16(&out, 2);
  put_u16(&out, 16);
  put_tag(&out, "data");
  put_u32(&out, data_bytes);
  for (double s : wave.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<int16_t>(std::lround(clipped * 32767.0));
    put_u16(&out, static_cast<uint16_t>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  }
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace cel
