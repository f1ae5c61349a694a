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

#ifndef CEL_SYNTH_CORPUS_H_
#define CEL_SYNTH_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cel/audio_features.h"
#include "cel/rng.h"

namespace cel {

// Source-filter caricature of a talker: a harmonic source with f0 contour
// jitter and syllable-rate amplitude bursts, shaped by two resonators.
struct SpeakerProfile {
  double f0_hz = 120.0;
  std::vector<double> harmonic_amps;
  double formant1_hz = 500.0;
  double bandwidth1_hz = 100.0;
  double formant2_hz = 1500.0;
  double bandwidth2_hz = 150.0;
  double vibrato_depth = 0.01;   // relative f0 deviation
  double vibrato_rate_hz = 5.0;
  double drift_depth = 0.02;     // relative slow f0 wander
  double syllable_rate_hz = 4.0;
  double breathiness = 0.02;     // aspiration noise relative to voicing

  bool operator==(const SpeakerProfile&) const = default;
};

SpeakerProfile gen_speaker(Rng& rng);

// Shortest utterance the generator accepts: two default 180-frame crops.
double min_utterance_seconds();

// Throws kTooShort below min_utterance_seconds().
Waveform gen_utterance(const SpeakerProfile& speaker, double duration_s,
                       Rng& rng);

struct Utterance {
  std::string speaker_id;  // "-" when unknown
  std::string utterance_id;
  std::string path;        // relative to the corpus root
  Waveform wave;
};

struct Corpus {
  std::vector<Utterance> utterances;

  bool has_speakers() const;
  std::vector<std::string> speakers() const;  // sorted, unique
};

// Per-utterance recording conditions: a synthetic room and a coloured
// background noise, drawn independently for every file.
struct SessionConfig {
  bool enabled = true;
  double snr_min_db = 5.0;
  double snr_max_db = 20.0;
  double rt60_min_ms = 150.0;
  double rt60_max_ms = 600.0;
};

// Applies one recording session to `wave` and restores peak 0.5.
Waveform record_session(const Waveform& wave, const SessionConfig& cfg, Rng& rng);

struct CorpusConfig {
  int num_speakers = 32;
  int utterances_per_speaker = 6;
  double duration_s = 4.0;
  uint64_t seed = 1;
  std::string speaker_prefix = "spk";
  SessionConfig session;
};

Corpus generate_corpus(const CorpusConfig& cfg);

inline constexpr const char* kManifestName = "manifest.tsv";

// Writes every utterance as a WAV under `root` plus the manifest:
// one "speaker_id<TAB>utterance_id<TAB>relative_path" line per utterance.
void write_corpus(const Corpus& corpus, const std::filesystem::path& root);

// Reads `root`/manifest.tsv and the WAVs it lists.
Corpus load_corpus(const std::filesystem::path& root);

}  // namespace cel

#endif  // CEL_SYNTH_CORPUS_H_
