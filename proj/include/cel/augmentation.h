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

#ifndef CEL_AUGMENTATION_H_
#define CEL_AUGMENTATION_H_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cel/audio_features.h"
#include "cel/rng.h"

namespace cel {

struct CropPair {
  Waveform crop1;
  Waveform crop2;
  size_t offset1 = 0;
  size_t offset2 = 0;
  std::string source_id;
};

// Samples covered by `frames` frames at the default 25 ms / 10 ms framing:
// (frames - 1) * 160 + 400.
size_t crop_samples(size_t frames, const FeatureConfig& cfg = {});

// Two independent uniform crops of `frames` frames each. With `wrap_pad`
// a short utterance is extended by repeating itself; otherwise it raises
// kUtteranceTooShort.
CropPair crop_two(const Waveform& utterance, size_t frames, Rng& rng,
                  bool wrap_pad = false, const FeatureConfig& cfg = {});

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct NoiseResult {
  Waveform output;
  double noise_gain = 0.0;         // scale applied to the noise slice
  double clipped_fraction = 0.0;   // share of samples clipped to [-1, 1]
  bool silent_signal = false;      // signal power was zero; no noise added
};

// Mixes noise[offset, offset + len) into `signal` so that the signal to
// scaled-noise power ratio equals snr_db. snr_db = +inf returns the input.
NoiseResult add_noise(const Waveform& signal, const Waveform& noise,
                      double snr_db, size_t offset);

// Full convolution truncated to the input length, then rescaled to the
// input's peak if the convolution raised it. Short responses are convolved
// directly; long ones go through an FFT.
Waveform apply_rir(const Waveform& signal, const std::vector<double>& rir);

// Direct O(N * L) convolution truncated to N samples, without any peak
// handling.
std::vector<double> convolve_direct(const std::vector<double>& x,
                                    const std::vector<double>& h);

// Same as convolve_direct, computed with an FFT.
std::vector<double> convolve_fft(const std::vector<double>& x,
                                 const std::vector<double>& h);

// Decay envelope exp(-ln(1000) * t / rt60): 60 dB down at t = rt60.
double rir_envelope(double t_ms, double rt60_ms);

// Exponentially decaying white noise of length_ms at 16 kHz, first tap 1.
std::vector<double> synth_rir(double rt60_ms, double length_ms, Rng& rng,
                              int sample_rate = kSampleRate);

enum class AugmentKind { kNone, kNoise, kReverb, kNoiseReverb };

std::string augment_kind_name(AugmentKind kind);

struct AugmentSpec {
  AugmentKind kind = AugmentKind::kNone;
  double snr_db = kNoNoise;
  size_t noise_index = 0;
  size_t noise_offset = 0;
  uint64_t rir_seed = 0;
  double rt60_ms = 0.0;

  bool operator==(const AugmentSpec&) const = default;
};

struct AugmentConfig {
  double snr_min_db = 0.0;
  double snr_max_db = 15.0;
  double rt60_min_ms = 100.0;
  double rt60_max_ms = 500.0;
  double rir_length_ms = 250.0;
};

// Noise signals and impulse responses to draw from. Either synthesized from
// a seed or loaded from a directory with noise/ and rir/ subdirectories.
struct AugmentBank {
  std::vector<Waveform> noises;
  std::vector<std::vector<double>> rirs;  // empty: synthesize per crop

  // White, pink and babble noise, each `seconds` long.
  static AugmentBank synthetic(uint64_t seed, double seconds = 8.0);
  // WAV files in lexicographic filename order.
  static AugmentBank load(const std::filesystem::path& root);
};

AugmentSpec sample_augment(const AugmentBank& bank, const AugmentConfig& cfg,
                           size_t signal_length, Rng& rng);

// Draws specs for the two crops of one utterance, redrawing the second
// until it differs from the first.
std::pair<AugmentSpec, AugmentSpec> sample_augment_pair(
    const AugmentBank& bank, const AugmentConfig& cfg, size_t signal_length,
    Rng& rng);

// Reverb (when requested) is applied before noise.
Waveform apply_augment(const Waveform& signal, const AugmentSpec& spec,
                       const AugmentBank& bank, const AugmentConfig& cfg);

}  // namespace cel

#endif  // CEL_AUGMENTATION_H_
