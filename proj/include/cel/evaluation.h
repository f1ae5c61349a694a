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

#ifndef CEL_EVALUATION_H_
#define CEL_EVALUATION_H_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cel/embedding_space.h"

namespace cel {

struct Trial {
  std::string enroll_id;
  std::string test_id;
  bool is_target = false;
  std::optional<double> score;
};

// Cosine score of every trial, in input order. Embeddings are normalized
// here, so any positive scaling of them leaves the scores unchanged.
// Raises kUnknownId for an id missing from `embeddings`.
std::vector<Trial> score_trials(const std::map<std::string, Vector>& embeddings,
                                std::vector<Trial> trials);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct DcfParams {
  double c_miss = 1.0;
  double c_fa = 1.0;
  double p_target = 0.05;

  void validate() const;
};

struct MinDcfResult {
  double min_dcf = 0.0;
  double threshold = 0.0;  // +inf when rejecting everything is optimal
};

struct DetPoint {
  double threshold = 0.0;
  double p_fa = 0.0;
  double p_miss = 0.0;
};

// Accept iff score >= threshold. The thresholds are the distinct scores in
// ascending order followed by +inf (reject all), so the curve runs from
// (p_fa, p_miss) = (1, 0) to (0, 1) with one point per distinct score plus
// one.
std::vector<DetPoint> det_points(const std::vector<double>& target_scores,
                                 const std::vector<double>& nontarget_scores);

// Equal error rate on the det_points staircase. If FAR == FRR at a
// threshold, that threshold is the answer; otherwise the crossing between
// the two adjacent thresholds is linearly interpolated in (FAR - FRR).
EerResult eer(const std::vector<double>& target_scores,
              const std::vector<double>& nontarget_scores);

// Minimum over the det_points thresholds of
// c_miss * p_target * P_miss + c_fa * (1 - p_target) * P_fa, divided by
// min(c_miss * p_target, c_fa * (1 - p_target)).
MinDcfResult min_dcf(const std::vector<double>& target_scores,
                     const std::vector<double>& nontarget_scores,
                     const DcfParams& params = {});

// Convenience overloads on scored trials.
std::vector<DetPoint> det_points(const std::vector<Trial>& trials);
EerResult eer(const std::vector<Trial>& trials);
MinDcfResult min_dcf(const std::vector<Trial>& trials,
                     const DcfParams& params = {});

// Trial list: "label enroll test" per line, label 1 for target, 0 otherwise.
std::vector<Trial> read_trial_list(const std::filesystem::path& path);
void write_trial_list(const std::filesystem::path& path,
                      const std::vector<Trial>& trials);
// Same lines with the score appended.
void write_scores(const std::filesystem::path& path,
                  const std::vector<Trial>& trials);
// CSV with header "p_fa,p_miss".
void write_det_csv(const std::filesystem::path& path,
                   const std::vector<DetPoint>& points);

// Every unordered pair of the given items, target iff the groups match.
std::vector<Trial> all_pair_trials(const std::vector<std::string>& ids,
                                   const std::vector<std::string>& groups);

}  // namespace cel

#endif  // CEL_EVALUATION_H_
