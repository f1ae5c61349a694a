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

#include "cel/augmentation.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include <unsupported/Eigen/FFT>

#include "cel/error.h"
#include "cel/synth_corpus.h"
#include "cel/wav_io.h"

namespace cel {

namespace {

// Responses up to this many taps are convolved directly, which keeps short
// filters (including the unit impulse) exact.
constexpr size_t kDirectTaps = 64;

double mean_power(const std::vector<double>& x, size_t begin, size_t len) {
  double acc = 0.0;
  for (size_t i = 0; i < len; ++i) acc += x[begin + i] * x[begin + i];
  return acc / static_cast<double>(len);
}

double peak(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

// Smallest n >= target whose only prime factors are 2, 3 and 5.
size_t smooth_fft_size(size_t target) {
  for (size_t n = std::max<size_t>(target, 1);; ++n) {
    size_t m = n;
    for (size_t p : {2, 3, 5}) {
      while (m % p == 0) m /= p;
    }
    if (m == 1) return n;
  }
}

void normalize_rms(std::vector<double>* x) {
  const double rms = std::sqrt(mean_power(*x, 0, x->size()));
  if (rms > 0.0) {
    for (double& v : *x) v /= rms;
  }
}

std::vector<std::filesystem::path> sorted_wavs(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) return files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) {
              return a.filename().string() < b.filename().string();
            });
  return files;
}

}  // namespace

size_t crop_samples(size_t frames, const FeatureConfig& cfg) {
  return samples_for_frames(frames, cfg);
}

CropPair crop_two(const Waveform& utterance, size_t frames, Rng& rng,
                  bool wrap_pad, const FeatureConfig& cfg) {
  const size_t len = crop_samples(frames, cfg);
  if (frames == 0) {
    throw Error(ErrorCode::kInvalidParam, "crop needs at least one frame");
  }
  Waveform source = utterance;
  if (source.size() < len) {
    if (!wrap_pad || source.size() == 0) {
      throw Error(ErrorCode::kUtteranceTooShort,
                  "utterance has " + std::to_string(utterance.size()) +
                      " samples, crop needs " + std::to_string(len));
    }
    source.samples.resize(len);
    for (size_t i = utterance.size(); i < len; ++i) {
      source.samples[i] = utterance.samples[i % utterance.size()];
    }
  }
  std::uniform_int_distribution<size_t> offset(0, source.size() - len);
  CropPair pair;
  pair.offset1 = offset(rng);
  pair.offset2 = offset(rng);
  const auto cut = [&](size_t start) {
    Waveform w;
    w.sample_rate = source.sample_rate;
    w.samples.assign(source.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     source.samples.begin() +
                         static_cast<std::ptrdiff_t>(start + len));
    return w;
  };
  pair.crop1 = cut(pair.offset1);
  pair.crop2 = cut(pair.offset2);
  return pair;
}

NoiseResult add_noise(const Waveform& signal, const Waveform& noise,
                      double snr_db, size_t offset) {
  NoiseResult result;
  result.output = signal;
  if (snr_db == kNoNoise || signal.size() == 0) return result;
  if (noise.size() < offset + signal.size()) {
    throw Error(ErrorCode::kTooShort,
                "noise slice [" + std::to_string(offset) + ", " +
                    std::to_string(offset + signal.size()) +
                    ") exceeds noise length " + std::to_string(noise.size()));
  }
  const double p_signal = mean_power(signal.samples, 0, signal.size());
  const double p_noise = mean_power(noise.samples, offset, signal.size());
  if (p_signal == 0.0 || p_noise == 0.0) {
    result.silent_signal = p_signal == 0.0;
    return result;
  }
  // 10 log10(P_s / (g^2 P_n)) = snr_db
  result.noise_gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  size_t clipped = 0;
  for (size_t i = 0; i < signal.size(); ++i) {
    double v = signal.samples[i] + result.noise_gain * noise.samples[offset + i];
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++clipped;
    }
    result.output.samples[i] = v;
  }
  result.clipped_fraction =
      static_cast<double>(clipped) / static_cast<double>(signal.size());
  return result;
}

std::vector<double> convolve_direct(const std::vector<double>& x,
                                    const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    const size_t taps = std::min(h.size(), n + 1);
    for (size_t k = 0; k < taps; ++k) acc += h[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

std::vector<double> convolve_fft(const std::vector<double>& x,
                                 const std::vector<double>& h) {
  if (x.empty()) return {};
  const size_t n = smooth_fft_size(x.size() + h.size() - 1);
  std::vector<double> xp(n, 0.0);
  std::vector<double> hp(n, 0.0);
  std::copy(x.begin(), x.end(), xp.begin());
  std::copy(h.begin(), h.end(), hp.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> xf;
  std::vector<std::complex<double>> hf;
  fft.fwd(xf, xp);
  fft.fwd(hf, hp);
  for (size_t i = 0; i < xf.size(); ++i) xf[i] *= hf[i];
  std::vector<double> y;
  fft.inv(y, xf);
  y.resize(x.size());
  return y;
}

Waveform apply_rir(const Waveform& signal, const std::vector<double>& rir) {
  if (rir.empty()) {
    throw Error(ErrorCode::kEmptyImpulse, "impulse response has no taps");
  }
  for (double v : rir) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidParam, "impulse response is not finite");
    }
  }
  Waveform out;
  out.sample_rate = signal.sample_rate;
  out.samples = rir.size() <= kDirectTaps ? convolve_direct(signal.samples, rir)
                                          : convolve_fft(signal.samples, rir);
  const double in_peak = peak(signal.samples);
  const double out_peak = peak(out.samples);
  if (out_peak > in_peak && out_peak > 0.0) {
    const double g = in_peak / out_peak;
    for (double& v : out.samples) v *= g;
  }
  return out;
}

double rir_envelope(double t_ms, double rt60_ms) {
  return std::exp(-std::log(1000.0) * t_ms / rt60_ms);
}

std::vector<double> synth_rir(double rt60_ms, double length_ms, Rng& rng,
                              int sample_rate) {
  if (!(rt60_ms > 0.0) || !(length_ms > 0.0)) {
    throw Error(ErrorCode::kInvalidParam,
                "rt60 and length must be positive");
  }
  const auto taps = static_cast<size_t>(std::llround(length_ms * sample_rate / 1000.0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> rir(std::max<size_t>(taps, 1));
  for (size_t n = 0; n < rir.size(); ++n) {
    const double t_ms = 1000.0 * static_cast<double>(n) / sample_rate;
    rir[n] = gauss(rng) * rir_envelope(t_ms, rt60_ms);
  }
  rir[0] = 1.0;
  return rir;
}

std::string augment_kind_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kNone: return "none";
    case AugmentKind::kNoise: return "noise";
    case AugmentKind::kReverb: return "reverb";
    case AugmentKind::kNoiseReverb: return "noise+reverb";
  }
  return "?";
}

AugmentBank AugmentBank::synthetic(uint64_t seed, double seconds) {
  const auto len = static_cast<size_t>(seconds * kSampleRate);
  AugmentBank bank;
  Rng rng(derive_seed(seed, {0xa0}));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Waveform white;
  white.samples.resize(len);
  for (double& v : white.samples) v = gauss(rng);
  normalize_rms(&white.samples);

  // Kellet's pink filter.
  Waveform pink;
  pink.samples.resize(len);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (double& v : pink.samples) {
    const double w = gauss(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  normalize_rms(&pink.samples);

  // Babble: several synthetic talkers summed.
  Waveform babble;
  babble.samples.assign(len, 0.0);
  for (uint64_t talker = 0; talker < 5; ++talker) {
    Rng talker_rng(derive_seed(seed, {0xb0, talker}));
    const SpeakerProfile profile = gen_speaker(talker_rng);
    const Waveform speech =
        gen_utterance(profile, std::max(seconds, min_utterance_seconds()), talker_rng);
    for (size_t i = 0; i < len && i < speech.size(); ++i) {
      babble.samples[i] += speech.samples[i];
    }
  }
  normalize_rms(&babble.samples);

  bank.noises = {std::move(white), std::move(pink), std::move(babble)};
  return bank;
}

AugmentBank AugmentBank::load(const std::filesystem::path& root) {
  AugmentBank bank;
  for (const auto& file : sorted_wavs(root / "noise")) {
    bank.noises.push_back(read_wav(file));
  }
  for (const auto& file : sorted_wavs(root / "rir")) {
    bank.rirs.push_back(read_wav(file).samples);
  }
  if (bank.noises.empty()) {
    throw Error(ErrorCode::kIoError,
                "no noise WAVs under " + (root / "noise").string());
  }
  return bank;
}

AugmentSpec sample_augment(const AugmentBank& bank, const AugmentConfig& cfg,
                           size_t signal_length, Rng& rng) {
  static constexpr AugmentKind kKinds[] = {
      AugmentKind::kNoise, AugmentKind::kReverb, AugmentKind::kNoiseReverb};
  AugmentSpec spec;
  spec.kind = kKinds[std::uniform_int_distribution<int>(0, 2)(rng)];
  if (spec.kind != AugmentKind::kReverb) {
    if (bank.noises.empty()) {
      throw Error(ErrorCode::kInvalidParam, "noise bank is empty");
    }
    spec.snr_db =
        std::uniform_real_distribution<double>(cfg.snr_min_db, cfg.snr_max_db)(rng);
    spec.noise_index = std::uniform_int_distribution<size_t>(
        0, bank.noises.size() - 1)(rng);
    const size_t noise_len = bank.noises[spec.noise_index].size();
    if (noise_len < signal_length) {
      throw Error(ErrorCode::kTooShort, "noise shorter than the crop");
    }
    spec.noise_offset =
        std::uniform_int_distribution<size_t>(0, noise_len - signal_length)(rng);
  }
  if (spec.kind != AugmentKind::kNoise) {
    spec.rir_seed = rng();
    spec.rt60_ms = std::uniform_real_distribution<double>(cfg.rt60_min_ms,
                                                          cfg.rt60_max_ms)(rng);
  }
  return spec;
}

std::pair<AugmentSpec, AugmentSpec> sample_augment_pair(
    const AugmentBank& bank, const AugmentConfig& cfg, size_t signal_length,
    Rng& rng) {
  AugmentSpec first = sample_augment(bank, cfg, signal_length, rng);
  AugmentSpec second = sample_augment(bank, cfg, signal_length, rng);
  while (second == first) second = sample_augment(bank, cfg, signal_length, rng);
  return {first, second};
}

Waveform apply_augment(const Waveform& signal, const AugmentSpec& spec,
                       const AugmentBank& bank, const AugmentConfig& cfg) {
  Waveform out = signal;
  if (spec.kind == AugmentKind::kReverb ||
      spec.kind == AugmentKind::kNoiseReverb) {
    if (!bank.rirs.empty()) {
      out = apply_rir(out, bank.rirs[spec.rir_seed % bank.rirs.size()]);
    } else {
      Rng rir_rng(spec.rir_seed);
      out = apply_rir(out, synth_rir(spec.rt60_ms, cfg.rir_length_ms, rir_rng,
                                     signal.sample_rate));
    }
  }
  if (spec.kind == AugmentKind::kNoise ||
      spec.kind == AugmentKind::kNoiseReverb) {
    out = add_noise(out, bank.noises[spec.noise_index], spec.snr_db,
                    spec.noise_offset)
              .output;
  }
  return out;
}

}  // namespace cel
