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

#include "cel/audio_features.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "cel/error.h"

namespace cel {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

size_t frame_count(size_t length, const FeatureConfig& cfg) {
  const auto win = static_cast<size_t>(cfg.win_length);
  if (length < win) return 0;
  return (length - win) / static_cast<size_t>(cfg.hop_length) + 1;
}

size_t samples_for_frames(size_t frames, const FeatureConfig& cfg) {
  if (frames == 0) return 0;
  return (frames - 1) * static_cast<size_t>(cfg.hop_length) +
         static_cast<size_t>(cfg.win_length);
}

std::vector<double> mel_center_frequencies(int num_filters, double f_min,
                                           double f_max) {
  const double lo = hz_to_mel(f_min);
  const double hi = hz_to_mel(f_max);
  std::vector<double> centers(static_cast<size_t>(num_filters));
  for (int i = 0; i < num_filters; ++i) {
    centers[static_cast<size_t>(i)] =
        mel_to_hz(lo + (hi - lo) * (i + 1) / (num_filters + 1));
  }
  return centers;
}

Matrix mel_filterbank(int num_filters, int fft_size, int sample_rate,
                      double f_min, double f_max) {
  if (num_filters < 1 || fft_size < 2 || sample_rate <= 0 || !(f_min >= 0.0) ||
      !(f_min < f_max) || f_max > sample_rate / 2.0) {
    throw Error(ErrorCode::kInvalidRange,
                "need 0 <= f_min < f_max <= sample_rate / 2 and at least one "
                "filter");
  }
  const double lo = hz_to_mel(f_min);
  const double hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<size_t>(num_filters) + 2);
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  (num_filters + 1));
  }
  const int bins = fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(num_filters, bins);
  for (int f = 0; f < num_filters; ++f) {
    const double left = edges[static_cast<size_t>(f)];
    const double center = edges[static_cast<size_t>(f) + 1];
    const double right = edges[static_cast<size_t>(f) + 2];
    bool support = false;
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / fft_size;
      const double up = (hz - left) / (center - left);
      const double down = (right - hz) / (right - center);
      const double w = std::max(0.0, std::min(up, down));
      fb(f, k) = w;
      support = support || w > 0.0;
    }
    if (!support) {
      throw Error(ErrorCode::kInvalidRange,
                  "mel filter " + std::to_string(f) +
                      " covers no FFT bin; use fewer filters or a larger FFT");
    }
  }
  return fb;
}

LogMelExtractor::LogMelExtractor(FeatureConfig cfg)
    : cfg_(cfg) {
  if (cfg_.win_length < 1 || cfg_.hop_length < 1 ||
      cfg_.win_length > cfg_.fft_size) {
    throw Error(ErrorCode::kInvalidParam,
                "need 1 <= win_length <= fft_size and hop_length >= 1");
  }
  window_.resize(static_cast<size_t>(cfg_.win_length));
  for (int n = 0; n < cfg_.win_length; ++n) {
    window_[static_cast<size_t>(n)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n /
                               (cfg_.win_length - 1));
  }
  filterbank_ = mel_filterbank(cfg_.num_mels, cfg_.fft_size, cfg_.sample_rate,
                               cfg_.f_min, cfg_.f_max);
}

Vector LogMelExtractor::frame_energies(const Waveform& wave,
                                       size_t offset) const {
  const auto win = static_cast<size_t>(cfg_.win_length);
  std::vector<double> frame(static_cast<size_t>(cfg_.fft_size), 0.0);
  for (size_t n = 0; n < win; ++n) {
    frame[n] = wave.samples[offset + n] * window_[n];
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, frame);
  Vector power(filterbank_.cols());
  for (Eigen::Index k = 0; k < power.size(); ++k) {
    power[k] = std::norm(spectrum[static_cast<size_t>(k)]);
  }
  return filterbank_ * power;
}

FeatureMatrix LogMelExtractor::compute(const Waveform& wave) const {
  if (wave.sample_rate != cfg_.sample_rate) {
    throw Error(ErrorCode::kInvalidParam,
                "waveform sample rate " + std::to_string(wave.sample_rate) +
                    " differs from feature config " +
                    std::to_string(cfg_.sample_rate));
  }
  const size_t frames = frame_count(wave.size(), cfg_);
  if (frames == 0) {
    throw Error(ErrorCode::kTooShort,
                "waveform of " + std::to_string(wave.size()) +
                    " samples is shorter than one frame");
  }
  const auto win = static_cast<size_t>(cfg_.win_length);
  const auto fft_size = static_cast<size_t>(cfg_.fft_size);
  const Eigen::Index bins = filterbank_.cols();

  Eigen::FFT<double> fft;
  std::vector<double> frame(fft_size, 0.0);
  std::vector<std::complex<double>> spectrum;
  Matrix power(bins, static_cast<Eigen::Index>(frames));
  for (size_t t = 0; t < frames; ++t) {
    const size_t offset = t * static_cast<size_t>(cfg_.hop_length);
    for (size_t n = 0; n < win; ++n) {
      frame[n] = wave.samples[offset + n] * window_[n];
    }
    fft.fwd(spectrum, frame);
    for (Eigen::Index k = 0; k < bins; ++k) {
      power(k, static_cast<Eigen::Index>(t)) =
          std::norm(spectrum[static_cast<size_t>(k)]);
    }
  }
  FeatureMatrix out;
  out.values = ((filterbank_ * power).array() + cfg_.log_floor).log();
  if (cfg_.mean_norm) {
    out.values.colwise() -= out.values.rowwise().mean();
  }
  return out;
}

FeatureMatrix logmel(const Waveform& wave, const FeatureConfig& cfg) {
  return LogMelExtractor(cfg).compute(wave);
}

}  // namespace cel
