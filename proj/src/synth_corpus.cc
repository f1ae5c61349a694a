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

#include "cel/synth_corpus.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "cel/augmentation.h"
#include "cel/error.h"
#include "cel/wav_io.h"

namespace cel {

namespace {

constexpr int kMaxHarmonics = 24;
constexpr double kTopHz = 7000.0;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Two-pole resonator y[n] = x[n] + a1 y[n-1] + a2 y[n-2], unit gain at its
// center frequency.
void resonate(std::vector<double>* x, double center_hz, double bandwidth_hz) {
  const double r = std::exp(-std::numbers::pi * bandwidth_hz / kSampleRate);
  const double omega = 2.0 * std::numbers::pi * center_hz / kSampleRate;
  const double a1 = 2.0 * r * std::cos(omega);
  const double a2 = -r * r;
  const double gain = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * omega) + r * r);
  double y1 = 0.0;
  double y2 = 0.0;
  for (double& v : *x) {
    const double y = gain * v + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void normalize_peak(std::vector<double>* x) {
  double peak = 0.0;
  for (double v : *x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : *x) v *= 0.5 / peak;
  }
}

}  // namespace

SpeakerProfile gen_speaker(Rng& rng) {
  SpeakerProfile p;
  p.f0_hz = std::exp(uniform(rng, std::log(80.0), std::log(300.0)));
  const double tilt = uniform(rng, 0.6, 1.6);
  p.harmonic_amps.resize(kMaxHarmonics);
  for (int h = 0; h < kMaxHarmonics; ++h) {
    p.harmonic_amps[static_cast<size_t>(h)] =
        std::pow(h + 1.0, -tilt) * uniform(rng, 0.5, 1.5);
  }
  p.formant1_hz = uniform(rng, 320.0, 1000.0);
  p.bandwidth1_hz = uniform(rng, 60.0, 160.0);
  p.formant2_hz = uniform(rng, std::max(900.0, p.formant1_hz + 300.0), 3000.0);
  p.bandwidth2_hz = uniform(rng, 80.0, 250.0);
  p.vibrato_depth = uniform(rng, 0.005, 0.03);
  p.vibrato_rate_hz = uniform(rng, 3.0, 7.0);
  p.drift_depth = uniform(rng, 0.01, 0.05);
  p.syllable_rate_hz = uniform(rng, 2.5, 6.0);
  p.breathiness = uniform(rng, 0.01, 0.08);
  return p;
}

double min_utterance_seconds() {
  return 2.0 * static_cast<double>(crop_samples(180)) / kSampleRate;
}

Waveform gen_utterance(const SpeakerProfile& speaker, double duration_s,
                       Rng& rng) {
  if (!(duration_s >= min_utterance_seconds())) {
    throw Error(ErrorCode::kTooShort,
                fmt::format("utterance of {} s is shorter than the {} s "
                            "needed for two crops",
                            duration_s, min_utterance_seconds()));
  }
  const auto n = static_cast<size_t>(std::llround(duration_s * kSampleRate));
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Slow f0 wander: Gaussian knots every 100 ms, linearly interpolated.
  const size_t knot_step = kSampleRate / 10;
  std::vector<double> knots(n / knot_step + 2);
  for (double& k : knots) k = gauss(rng) * speaker.drift_depth;
  const double vib_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double syl_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double syl_rate = speaker.syllable_rate_hz * uniform(rng, 0.9, 1.1);
  const double f0_offset = uniform(rng, -0.05, 0.05);

  const int harmonics = std::clamp(
      static_cast<int>(kTopHz / (speaker.f0_hz * 1.2)), 1, kMaxHarmonics);

  Waveform wave;
  wave.samples.resize(n);
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const size_t knot = i / knot_step;
    const double frac = static_cast<double>(i % knot_step) / knot_step;
    const double drift = knots[knot] * (1.0 - frac) + knots[knot + 1] * frac;
    const double f0 =
        speaker.f0_hz *
        (1.0 + f0_offset + drift +
         speaker.vibrato_depth *
             std::sin(2.0 * std::numbers::pi * speaker.vibrato_rate_hz * t + vib_phase));
    phase += 2.0 * std::numbers::pi * f0 / kSampleRate;
    if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;

    const std::complex<double> z(std::cos(phase), std::sin(phase));
    std::complex<double> zh = z;
    double source = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      source += speaker.harmonic_amps[static_cast<size_t>(h)] * zh.imag();
      zh *= z;
    }
    const double env = std::pow(
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * syl_rate * t + syl_phase),
        1.5);
    wave.samples[i] = env * (source + speaker.breathiness * gauss(rng));
  }
  resonate(&wave.samples, speaker.formant1_hz, speaker.bandwidth1_hz);
  resonate(&wave.samples, speaker.formant2_hz, speaker.bandwidth2_hz);

  normalize_peak(&wave.samples);
  return wave;
}

Waveform record_session(const Waveform& wave, const SessionConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return wave;
  const double rt60 = uniform(rng, cfg.rt60_min_ms, cfg.rt60_max_ms);
  Rng rir_rng(rng());
  Waveform out = apply_rir(wave, synth_rir(rt60, 250.0, rir_rng));

  // Coloured noise: white noise through y[n] = x[n] + a y[n-1].
  const double a = uniform(rng, -0.8, 0.95);
  std::normal_distribution<double> gauss;
  Waveform noise;
  noise.samples.resize(out.size());
  double y = 0.0;
  for (double& v : noise.samples) {
    y = gauss(rng) + a * y;
    v = y;
  }
  const double snr = uniform(rng, cfg.snr_min_db, cfg.snr_max_db);
  out = add_noise(out, noise, snr, 0).output;
  normalize_peak(&out.samples);
  return out;
}

bool Corpus::has_speakers() const {
  return !utterances.empty() &&
         std::none_of(utterances.begin(), utterances.end(),
                      [](const Utterance& u) { return u.speaker_id == "-"; });
}

std::vector<std::string> Corpus::speakers() const {
  std::set<std::string> ids;
  for (const auto& u : utterances) ids.insert(u.speaker_id);
  return {ids.begin(), ids.end()};
}

Corpus generate_corpus(const CorpusConfig& cfg) {
  if (cfg.num_speakers < 1 || cfg.utterances_per_speaker < 1) {
    throw Error(ErrorCode::kInvalidParam,
                "corpus needs at least one speaker and one utterance");
  }
  Corpus corpus;
  for (int s = 0; s < cfg.num_speakers; ++s) {
    Rng speaker_rng(derive_seed(cfg.seed, {static_cast<uint64_t>(s)}));
    const SpeakerProfile profile = gen_speaker(speaker_rng);
    const std::string speaker_id = fmt::format("{}{:03d}", cfg.speaker_prefix, s);
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      Rng utt_rng(derive_seed(cfg.seed, {static_cast<uint64_t>(s),
                                         static_cast<uint64_t>(u) + 1}));
      Utterance utt;
      utt.speaker_id = speaker_id;
      utt.utterance_id = fmt::format("{}_u{:02d}", speaker_id, u);
      utt.path = fmt::format("wav/{}/{}.wav", speaker_id, utt.utterance_id);
      utt.wave = record_session(gen_utterance(profile, cfg.duration_s, utt_rng),
                                cfg.session, utt_rng);
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + root.string());
  std::ofstream manifest(root / kManifestName, std::ios::trunc);
  if (!manifest) {
    throw Error(ErrorCode::kIoError, "cannot write manifest under " + root.string());
  }
  for (const auto& utt : corpus.utterances) {
    const auto path = root / utt.path;
    std::filesystem::create_directories(path.parent_path(), ec);
    write_wav(path, utt.wave);
    manifest << utt.speaker_id << '\t' << utt.utterance_id << '\t' << utt.path
             << '\n';
  }
}

Corpus load_corpus(const std::filesystem::path& root) {
  std::ifstream manifest(root / kManifestName);
  if (!manifest) {
    throw Error(ErrorCode::kIoError,
                "no manifest at " + (root / kManifestName).string());
  }
  Corpus corpus;
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Utterance utt;
    if (!std::getline(fields, utt.speaker_id, '\t') ||
        !std::getline(fields, utt.utterance_id, '\t') ||
        !std::getline(fields, utt.path, '\t') || utt.path.empty()) {
      throw Error(ErrorCode::kParseError,
                  fmt::format("{}:{}: expected speaker_id, utterance_id and "
                              "path separated by tabs",
                              (root / kManifestName).string(), line_no));
    }
    if (!seen.insert(utt.utterance_id).second) {
      throw Error(ErrorCode::kParseError,
                  fmt::format("{}:{}: duplicate utterance id {}",
                              (root / kManifestName).string(), line_no,
                              utt.utterance_id));
    }
    utt.wave = read_wav(root / utt.path);
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace cel
