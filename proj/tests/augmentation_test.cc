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

#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "cel/error.h"

namespace cel {
namespace {

Waveform random_wave(size_t n, Rng& rng, double amp = 0.3) {
  std::normal_distribution<double> gauss(0.0, amp);
  Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) v = gauss(rng);
  return w;
}

double power(const std::vector<double>& x, size_t begin, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[begin + i] * x[begin + i];
  return s / static_cast<double>(n);
}

std::vector<double> oracle_convolve(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (size_t n = 0; n < x.size(); ++n) {
    for (size_t k = 0; k < h.size() && k <= n; ++k) y[n] += h[k] * x[n - k];
  }
  return y;
}

TEST(CropTest, LengthsAndOffsets) {
  EXPECT_EQ(crop_samples(180), 29040u);
  Rng rng(1);
  const Waveform u = random_wave(64000, rng);
  Rng a(5), b(5);
  const CropPair p = crop_two(u, 180, a), q = crop_two(u, 180, b);
  EXPECT_EQ(p.crop1.size(), 29040u);
  EXPECT_EQ(p.crop2.size(), 29040u);
  EXPECT_EQ(p.offset1, q.offset1);
  EXPECT_EQ(p.offset2, q.offset2);
  EXPECT_EQ(p.crop1.samples, q.crop1.samples);
  for (size_t i = 0; i < 100; ++i) EXPECT_EQ(p.crop1.samples[i], u.samples[p.offset1 + i]);
}

TEST(CropTest, ExactLengthUtterance) {
  Rng rng(2);
  const Waveform u = random_wave(29040, rng);
  const CropPair p = crop_two(u, 180, rng);
  EXPECT_EQ(p.offset1, 0u);
  EXPECT_EQ(p.offset2, 0u);
  EXPECT_EQ(p.crop1.samples, u.samples);
  EXPECT_EQ(p.crop2.samples, u.samples);
}

TEST(CropTest, TooShortUnlessWrapPadded) {
  Rng rng(3);
  const Waveform u = random_wave(20000, rng);
  try {
    crop_two(u, 180, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUtteranceTooShort);
  }
  const CropPair p = crop_two(u, 180, rng, true);
  EXPECT_EQ(p.crop1.size(), 29040u);
  EXPECT_EQ(p.crop1.samples[20000], u.samples[0]);
}

TEST(CropTest, OffsetsAreUniform) {
  // Chi-square over 10 bins, 1e5 draws; critical value for 9 dof at 0.001.
  constexpr double kCritical = 27.877;
  Rng rng(4);
  Waveform u;
  u.samples.assign(29040 + 9999, 0.0);
  std::vector<int> bins(10, 0);
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws / 2; ++i) {
    const CropPair p = crop_two(u, 180, rng);
    ++bins[p.offset1 / 1000];
    ++bins[p.offset2 / 1000];
  }
  double chi2 = 0.0;
  for (int c : bins) chi2 += (c - kDraws / 10.0) * (c - kDraws / 10.0) / (kDraws / 10.0);
  EXPECT_LT(chi2, kCritical);
}

TEST(AddNoiseTest, ZeroDbMatchesPower) {
  Rng rng(5);
  const Waveform s = random_wave(8000, rng, 0.1), n = random_wave(20000, rng, 0.2);
  const NoiseResult r = add_noise(s, n, 0.0, 1234);
  const double scaled = r.noise_gain * r.noise_gain * power(n.samples, 1234, s.size());
  EXPECT_NEAR(scaled / power(s.samples, 0, s.size()), 1.0, 1e-10);
  EXPECT_EQ(r.clipped_fraction, 0.0);
}

TEST(AddNoiseTest, InfiniteSnrIsIdentity) {
  Rng rng(6);
  const Waveform s = random_wave(8000, rng), n = random_wave(8000, rng);
  EXPECT_EQ(add_noise(s, n, kNoNoise, 0).output.samples, s.samples);
}

TEST(AddNoiseTest, TenDbGain) {
  Waveform s, n;
  s.samples.assign(1000, 1.0 / 8);
  n.samples.assign(1000, 1.0 / 8);
  // Unit-power reference: scale both to power 1 via gain arithmetic.
  s.samples.assign(1000, 1.0);
  n.samples.assign(1000, -1.0);
  const NoiseResult r = add_noise(s, n, 10.0, 0);
  EXPECT_NEAR(r.noise_gain, 0.316228, 1e-6);
  EXPECT_NEAR(r.noise_gain, std::pow(10.0, -0.5), 1e-15);
}

TEST(AddNoiseTest, MeasuredSnrWithinHundredthDb) {
  Rng rng(7);
  std::uniform_real_distribution<double> snr(-5.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Waveform s = random_wave(4000, rng, 0.05), n = random_wave(9000, rng, 0.3);
    const double want = snr(rng);
    const size_t offset = static_cast<size_t>(trial) * 17 % 5000;
    const NoiseResult r = add_noise(s, n, want, offset);
    std::vector<double> added(s.size());
    for (size_t i = 0; i < s.size(); ++i) added[i] = r.noise_gain * n.samples[offset + i];
    const double measured =
        10.0 * std::log10(power(s.samples, 0, s.size()) / power(added, 0, added.size()));
    EXPECT_NEAR(measured, want, 0.01);
  }
}

TEST(AddNoiseTest, SilentSignalAndClipping) {
  Waveform silent, n;
  silent.samples.assign(100, 0.0);
  n.samples.assign(100, 0.5);
  const NoiseResult r = add_noise(silent, n, 5.0, 0);
  EXPECT_TRUE(r.silent_signal);
  EXPECT_EQ(r.output.samples, silent.samples);

  Waveform loud;
  loud.samples.assign(100, 0.9);
  const NoiseResult c = add_noise(loud, n, -10.0, 0);
  EXPECT_GT(c.clipped_fraction, 0.0);
  for (double v : c.output.samples) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_THROW(add_noise(loud, n, 0.0, 50), Error);
}

TEST(RirTest, UnitImpulseIsIdentity) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Waveform s = random_wave(1000 + trial * 37, rng);
    EXPECT_EQ(apply_rir(s, {1.0}).samples, s.samples);
  }
}

TEST(RirTest, DelayByOne) {
  Rng rng(9);
  const Waveform s = random_wave(500, rng);
  const Waveform y = apply_rir(s, {0.0, 1.0});
  EXPECT_EQ(y.samples[0], 0.0);
  for (size_t i = 1; i < s.size(); ++i) EXPECT_EQ(y.samples[i], s.samples[i - 1]);
}

TEST(RirTest, MatchesDirectOracle) {
  Rng rng(10);
  const Waveform s = random_wave(6000, rng);
  for (double rt60 : {100.0, 300.0, 600.0}) {
    const std::vector<double> h = synth_rir(rt60, 250.0, rng);
    const std::vector<double> direct = oracle_convolve(s.samples, h);
    const std::vector<double> fast = convolve_fft(s.samples, h);
    ASSERT_EQ(fast.size(), s.size());
    for (size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(fast[i], direct[i], 1e-10);
    double e_direct = 0.0, e_fast = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      e_direct += direct[i] * direct[i];
      e_fast += fast[i] * fast[i];
    }
    EXPECT_NEAR(e_fast, e_direct, 1e-10 * e_direct);
    const std::vector<double> small(h.begin(), h.begin() + 40);
    EXPECT_EQ(convolve_direct(s.samples, small), oracle_convolve(s.samples, small));
    // Peak never rises above the input peak.
    const Waveform y = apply_rir(s, h);
    double in_peak = 0.0, out_peak = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      in_peak = std::max(in_peak, std::abs(s.samples[i]));
      out_peak = std::max(out_peak, std::abs(y.samples[i]));
    }
    EXPECT_LE(out_peak, in_peak * (1.0 + 1e-12));
  }
}

TEST(RirTest, Errors) {
  Rng rng(11);
  const Waveform s = random_wave(100, rng);
  try {
    apply_rir(s, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyImpulse);
  }
  EXPECT_THROW(apply_rir(s, {1.0, NAN}), Error);
  try {
    synth_rir(0.0, 300.0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidParam);
  }
}

TEST(SynthRirTest, EnvelopeLengthAndSeed) {
  EXPECT_NEAR(rir_envelope(200.0, 200.0), 1e-3, 1e-15);
  EXPECT_EQ(rir_envelope(0.0, 200.0), 1.0);
  Rng a(12), b(12);
  const auto h1 = synth_rir(200.0, 300.0, a), h2 = synth_rir(200.0, 300.0, b);
  EXPECT_EQ(h1.size(), 4800u);
  EXPECT_EQ(h1[0], 1.0);
  EXPECT_EQ(h1, h2);
}

TEST(AugmentSamplingTest, KindsSnrRangeAndDistinctPairs) {
  const AugmentBank bank = AugmentBank::synthetic(3, 3.0);
  ASSERT_EQ(bank.noises.size(), 3u);
  const AugmentConfig cfg;
  Rng rng(13);
  std::set<AugmentKind> kinds;
  for (int i = 0; i < 500; ++i) {
    const auto [a, b] = sample_augment_pair(bank, cfg, 29040, rng);
    EXPECT_FALSE(a == b);
    for (const auto& s : {a, b}) {
      kinds.insert(s.kind);
      EXPECT_NE(s.kind, AugmentKind::kNone);
      if (s.kind != AugmentKind::kReverb) {
        EXPECT_GE(s.snr_db, cfg.snr_min_db);
        EXPECT_LE(s.snr_db, cfg.snr_max_db);
      } else {
        EXPECT_EQ(s.snr_db, kNoNoise);
      }
    }
  }
  EXPECT_EQ(kinds.size(), 3u);
}

TEST(AugmentSamplingTest, ApplyIsDeterministic) {
  const AugmentBank bank = AugmentBank::synthetic(4, 3.0);
  Rng rng(14);
  const Waveform s = random_wave(29040, rng, 0.1);
  Rng r1(99), r2(99);
  const AugmentSpec a = sample_augment(bank, {}, s.size(), r1);
  const AugmentSpec b = sample_augment(bank, {}, s.size(), r2);
  ASSERT_TRUE(a == b);
  EXPECT_EQ(apply_augment(s, a, bank, {}).samples, apply_augment(s, b, bank, {}).samples);
  AugmentSpec none;
  EXPECT_EQ(apply_augment(s, none, bank, {}).samples, s.samples);
}

TEST(AugmentBankTest, SyntheticNoisesHaveUnitRms) {
  const AugmentBank bank = AugmentBank::synthetic(5, 2.0);
  for (const auto& n : bank.noises) {
    EXPECT_EQ(n.size(), 32000u);
    EXPECT_NEAR(power(n.samples, 0, n.size()), 1.0, 1e-9);
  }
  const AugmentBank again = AugmentBank::synthetic(5, 2.0);
  EXPECT_EQ(again.noises[2].samples, bank.noises[2].samples);
}

TEST(AugmentBankTest, MissingDirectory) {
  EXPECT_THROW(AugmentBank::load("/nonexistent/bank"), Error);
}

}  // namespace
}  // namespace cel
