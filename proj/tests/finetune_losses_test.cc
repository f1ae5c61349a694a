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

#include "cel/finetune_losses.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cel/error.h"
#include "test_util.h"

namespace cel {
namespace {

using testing::random_unit_rows;

constexpr double kLogOnePlusInvE = 0.31326168751822283;

double ocos(const Matrix& a, int i, const Matrix& b, int j) {
  return a.row(i).dot(b.row(j)) / (a.row(i).norm() * b.row(j).norm());
}

// Cross-entropy with target logit `target(c)` and s * c elsewhere.
template <typename F>
double oracle_margin(const Matrix& e, const std::vector<int>& y, const Matrix& w, double s,
                     F target) {
  double total = 0.0;
  for (int i = 0; i < e.rows(); ++i) {
    double denom = 0.0, own = 0.0;
    for (int c = 0; c < w.rows(); ++c) {
      const double logit = c == y[i] ? s * target(ocos(e, i, w, c)) : s * ocos(e, i, w, c);
      denom += std::exp(logit);
      if (c == y[i]) own = logit;
    }
    total += std::log(denom) - own;
  }
  return total / static_cast<double>(e.rows());
}

double oracle_ge2e(const Matrix& e, const std::vector<int>& y, double w, double b) {
  const int classes = *std::max_element(y.begin(), y.end()) + 1;
  double total = 0.0;
  for (int i = 0; i < e.rows(); ++i) {
    double denom = 0.0, own = 0.0;
    for (int k = 0; k < classes; ++k) {
      Vector c = Vector::Zero(e.cols());
      int count = 0;
      for (int r = 0; r < e.rows(); ++r) {
        if (y[r] == k && r != i) {
          c += e.row(r).transpose();
          ++count;
        }
      }
      c /= count;
      const double cs = e.row(i).dot(c) / (e.row(i).norm() * c.norm());
      const double logit = w * cs + b;
      denom += std::exp(logit);
      if (k == y[i]) own = logit;
    }
    total += std::log(denom) - own;
  }
  return total / static_cast<double>(e.rows());
}

std::vector<int> random_labels(int n, int classes, Rng& rng) {
  std::vector<int> y(static_cast<size_t>(n));
  for (auto& v : y) v = std::uniform_int_distribution<int>(0, classes - 1)(rng);
  return y;
}

TEST(Ge2eLossTest, OrthogonalExample) {
  Matrix e(4, 2);
  e << 1, 0, 1, 0, 0, 1, 0, 1;
  const LabeledBatch batch{e, {0, 0, 1, 1}, 2};
  EXPECT_NEAR(ge2e_loss(batch, {1.0, 0.0}).value, kLogOnePlusInvE, 1e-10);
}

TEST(Ge2eLossTest, IdenticalEmbeddingsGiveLogS) {
  const Matrix e = Matrix::Ones(6, 3);
  const LabeledBatch batch{e, {0, 0, 1, 1, 2, 2}, 3};
  EXPECT_NEAR(ge2e_loss(batch, {10.0, -5.0}).value, std::log(3.0), 1e-12);
}

TEST(Ge2eLossTest, MatchesCentroidExclusionOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int s = 2 + trial % 3, u = 2 + trial % 2;
    const Matrix e = random_unit_rows(s * u, 5, rng);
    std::vector<int> y;
    for (int k = 0; k < s; ++k) y.insert(y.end(), u, k);
    const SimilarityParams p{2.0 + trial % 4, -1.0};
    const double v = ge2e_loss({e, y, s}, p).value;
    EXPECT_NEAR(v, oracle_ge2e(e, y, p.w, p.b), 1e-12);
    EXPECT_GE(v, 0.0);
  }
}

TEST(Ge2eLossTest, PermutationInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 3, u = 3;
    const Matrix e = random_unit_rows(s * u, 6, rng);
    std::vector<int> y;
    for (int k = 0; k < s; ++k) y.insert(y.end(), u, k);
    const auto perm = testing::random_permutation(s * u, rng);
    std::vector<int> y2(y.size());
    for (size_t i = 0; i < perm.size(); ++i) y2[i] = y[static_cast<size_t>(perm[i])];
    // Relabel speakers too.
    std::vector<int> relabel = testing::random_permutation(s, rng);
    for (auto& v : y2) v = relabel[static_cast<size_t>(v)];
    const SimilarityParams p{5.0, -2.0};
    EXPECT_NEAR(ge2e_loss({e, y, s}, p).value,
                ge2e_loss({testing::permute_rows(e, perm), y2, s}, p).value, 1e-12);
  }
}

TEST(Ge2eLossTest, ShapeErrors) {
  const Matrix e = Matrix::Ones(4, 3);
  for (const std::vector<int>& y : {std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 1, 2, 3},
                                    std::vector<int>{0, 0, 0, 1}}) {
    try {
      ge2e_loss({e, y, 4}, {});
      FAIL();
    } catch (const Error& err) {
      EXPECT_EQ(err.code(), ErrorCode::kBatchShapeInvalid);
    }
  }
}

TEST(CosFaceLossTest, PaperExample) {
  Matrix e(1, 2), w(2, 2);
  e << 1, 0;
  w << 1, 0, 0, 1;
  const MarginConfig cfg;  // m = 0.2, s = 30
  EXPECT_EQ(cfg.margin, 0.2);
  EXPECT_EQ(cfg.scale, 30.0);
  const double v = cosface_loss({e, {0}, 2}, {w}, cfg).value;
  EXPECT_NEAR(v, std::log1p(std::exp(-24.0)), 1e-20);
}

TEST(CosFaceLossTest, ZeroMarginIsScaledSoftmax) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 10, c = 2 + trial % 5;
    const Matrix e = random_unit_rows(n, 7, rng), w = random_unit_rows(c, 7, rng);
    const auto y = random_labels(n, c, rng);
    const double v = cosface_loss({e, y, c}, {w}, {0.0, 12.0}).value;
    EXPECT_NEAR(v, oracle_margin(e, y, w, 12.0, [](double x) { return x; }), 1e-12);
  }
}

TEST(CosFaceLossTest, MatchesOracleAndMonotoneInMargin) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 10, c = 2 + trial % 5;
    const Matrix e = random_unit_rows(n, 5, rng), w = random_unit_rows(c, 5, rng);
    const auto y = random_labels(n, c, rng);
    const double v = cosface_loss({e, y, c}, {w}, {0.2, 30.0}).value;
    EXPECT_NEAR(v, oracle_margin(e, y, w, 30.0, [](double x) { return x - 0.2; }), 1e-12);
    double last = -1.0;
    for (double m = 0.0; m <= 0.8; m += 0.1) {
      const double vm = cosface_loss({e, y, c}, {w}, {m, 30.0}).value;
      EXPECT_GE(vm, last);
      last = vm;
    }
  }
}

TEST(CosFaceLossTest, Errors) {
  const Matrix e = Matrix::Ones(2, 3), w = Matrix::Ones(2, 3);
  try {
    cosface_loss({e, {0, 2}, 2}, {w}, {});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kLabelOutOfRange);
  }
  EXPECT_THROW(cosface_loss({e, {0, -1}, 2}, {w}, {}), Error);
  EXPECT_THROW(cosface_loss({e, {0, 1}, 2}, {w}, {-0.1, 30.0}), Error);
}

TEST(ArcFaceLossTest, PaperExample) {
  Matrix e(1, 2), w(2, 2);
  e << 1, 0;
  w << 1, 0, 0, 1;
  const double target = 30.0 * std::cos(0.2);
  EXPECT_NEAR(target, 29.4020, 1e-4);
  const double v = arcface_loss({e, {0}, 2}, {w}, {0.2, 30.0}).value;
  EXPECT_NEAR(v, std::log1p(std::exp(-target)), 1e-20);
}

TEST(ArcFaceLossTest, MatchesOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 10, c = 2 + trial % 5;
    const Matrix e = random_unit_rows(n, 6, rng), w = random_unit_rows(c, 6, rng);
    const auto y = random_labels(n, c, rng);
    const double v = arcface_loss({e, y, c}, {w}, {0.2, 30.0}).value;
    EXPECT_NEAR(v,
                oracle_margin(e, y, w, 30.0, [](double x) { return std::cos(std::acos(x) + 0.2); }),
                1e-10);
    EXPECT_GE(v, 0.0);
  }
}

TEST(MarginLossTest, ZeroMarginReductionsAgree) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 11, c = 2 + trial % 5;
    const Matrix e = random_unit_rows(n, 4, rng), w = random_unit_rows(c, 4, rng);
    const auto y = random_labels(n, c, rng);
    const double cf = cosface_loss({e, y, c}, {w}, {0.0, 30.0}).value;
    const double af = arcface_loss({e, y, c}, {w}, {0.0, 30.0}).value;
    EXPECT_NEAR(cf, af, 1e-10);
    EXPECT_NEAR(cf, oracle_margin(e, y, w, 30.0, [](double x) { return x; }), 1e-10);
  }
}

TEST(AdaCosTest, InitialScale) {
  EXPECT_NEAR(AdaCosState::initial(10).scale, std::numbers::sqrt2 * std::log(9.0), 1e-15);
  const AdaCosState two = AdaCosState::initial(2);
  EXPECT_EQ(two.scale, AdaCosState::kMinScale);
  EXPECT_TRUE(two.floored);
  try {
    AdaCosState::initial(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingleClass);
  }
}

TEST(AdaCosTest, FrozenScaleEqualsCosFaceWithoutMargin) {
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 8, c = 3 + trial % 6;
    const Matrix e = random_unit_rows(n, 8, rng), w = random_unit_rows(c, 8, rng);
    const auto y = random_labels(n, c, rng);
    AdaCosState state = AdaCosState::initial(c);
    state.update = false;
    const double s = state.scale;
    EXPECT_NEAR(adacos_loss({e, y, c}, {w}, &state).value,
                cosface_loss({e, y, c}, {w}, {0.0, s}).value, 1e-12);
    EXPECT_EQ(state.scale, s);
  }
}

TEST(AdaCosTest, DynamicUpdateMatchesOracle) {
  Rng rng(18);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 4 + trial % 9, c = 10;
    const Matrix e = random_unit_rows(n, 8, rng), w = random_unit_rows(c, 8, rng);
    const auto y = random_labels(n, c, rng);
    AdaCosState state = AdaCosState::initial(c);
    const double s_old = state.scale;
    const double loss = adacos_loss({e, y, c}, {w}, &state).value;
    // The loss uses the scale from before the update.
    EXPECT_NEAR(loss, cosface_loss({e, y, c}, {w}, {0.0, s_old}).value, 1e-12);

    // Step-by-step transcription of the dynamic rule.
    double b = 0.0;
    std::vector<double> theta;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < c; ++k) {
        if (k != y[i]) b += std::exp(s_old * ocos(e, i, w, k));
      }
      theta.push_back(std::acos(ocos(e, i, w, y[i])));
    }
    b /= n;
    std::sort(theta.begin(), theta.end());
    const double med = n % 2 ? theta[n / 2] : 0.5 * (theta[n / 2 - 1] + theta[n / 2]);
    const double expected = std::log(b) / std::cos(std::min(std::numbers::pi / 4, med));
    EXPECT_TRUE(std::isfinite(state.scale));
    EXPECT_GT(state.scale, 0.0);
    EXPECT_NEAR(state.scale, expected, 1e-10);
  }
}

TEST(FinetuneLossTest, AllNonNegative) {
  Rng rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + trial % 4;
    const Matrix e = random_unit_rows(2 * c, 5, rng), w = random_unit_rows(c, 5, rng);
    std::vector<int> y;
    for (int k = 0; k < c; ++k) y.insert(y.end(), 2, k);
    EXPECT_GE(ge2e_loss({e, y, c}, {}).value, 0.0);
    EXPECT_GE(cosface_loss({e, y, c}, {w}, {}).value, 0.0);
    EXPECT_GE(arcface_loss({e, y, c}, {w}, {}).value, 0.0);
    AdaCosState st = AdaCosState::initial(std::max(c, 3));
    EXPECT_GE(adacos_loss({e, y, c}, {w}, &st).value, 0.0);
  }
}

TEST(ClassifierWeightsTest, SeededAndShaped) {
  const auto a = ClassifierWeights::random(5, 8, 42), b = ClassifierWeights::random(5, 8, 42);
  EXPECT_EQ(a.weights.rows(), 5);
  EXPECT_EQ(a.weights.cols(), 8);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.weights, ClassifierWeights::random(5, 8, 43).weights);
}

}  // namespace
}  // namespace cel
