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

#ifndef CEL_AUDIO_FEATURES_H_
#define CEL_AUDIO_FEATURES_H_

#include <cstddef>
#include <vector>

#include "cel/embedding_space.h"

namespace cel {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
};

struct FeatureConfig {
  int sample_rate = kSampleRate;
  int num_mels = 40;
  int win_length = 400;  // 25 ms
  int hop_length = 160;  // 10 ms
  int fft_size = 512;
  double f_min = 20.0;
  double f_max = 7600.0;
  double log_floor = 1e-6;
  bool mean_norm = true;  // subtract the per-band mean over time
};

// num_mels x T log filter energies; rows are mel bands, columns frames.
struct FeatureMatrix {
  Matrix values;

  Eigen::Index bands() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Number of full frames in a signal of `length` samples, 0 if none fit.
size_t frame_count(size_t length, const FeatureConfig& cfg);

// Samples spanned by `frames` consecutive frames.
size_t samples_for_frames(size_t frames, const FeatureConfig& cfg);

// Triangular filters with centers equally spaced in mel between f_min and
// f_max, evaluated at the fft_size / 2 + 1 bin frequencies.
Matrix mel_filterbank(int num_filters, int fft_size, int sample_rate,
                      double f_min, double f_max);

// Center frequencies (Hz) of the filters built by mel_filterbank.
std::vector<double> mel_center_frequencies(int num_filters, double f_min,
                                           double f_max);

// Reusable extractor holding the window and filterbank for one config.
// compute() is const and reentrant.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(FeatureConfig cfg = {});

  const FeatureConfig& config() const { return cfg_; }
  const Matrix& filterbank() const { return filterbank_; }

  FeatureMatrix compute(const Waveform& wave) const;

  // Mel filter energies (before the log) of one frame starting at `offset`.
  Vector frame_energies(const Waveform& wave, size_t offset) const;

 private:
  FeatureConfig cfg_;
  std::vector<double> window_;
  Matrix filterbank_;
};

FeatureMatrix logmel(const Waveform& wave, const FeatureConfig& cfg = {});

}  // namespace cel

#endif  // CEL_AUDIO_FEATURES_H_
