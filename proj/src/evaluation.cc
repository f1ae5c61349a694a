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

#include "cel/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "cel/error.h"

namespace cel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_both_classes(size_t targets, size_t nontargets) {
  if (targets == 0 || nontargets == 0) {
    throw Error(ErrorCode::kDegenerateTrials,
                fmt::format("need target and nontarget trials, got {} and {}",
                            targets, nontargets));
  }
}

void split_scores(const std::vector<Trial>& trials, std::vector<double>* tgt,
                  std::vector<double>* non) {
  for (const auto& t : trials) {
    if (!t.score) {
      throw Error(ErrorCode::kInvalidParam,
                  "trial " + t.enroll_id + " " + t.test_id + " is not scored");
    }
    (t.is_target ? tgt : non)->push_back(*t.score);
  }
}

}  // namespace

void DcfParams::validate() const {
  if (!(c_miss > 0.0) || !(c_fa > 0.0) || !(p_target > 0.0 && p_target < 1.0)) {
    throw Error(ErrorCode::kInvalidParam,
                "DCF needs positive costs and p_target in (0, 1)");
  }
}

std::vector<Trial> score_trials(const std::map<std::string, Vector>& embeddings,
                                std::vector<Trial> trials) {
  std::map<std::string, EmbeddingVector> unit;
  auto lookup = [&](const std::string& id) -> const EmbeddingVector& {
    auto it = unit.find(id);
    if (it != unit.end()) return it->second;
    auto raw = embeddings.find(id);
    if (raw == embeddings.end()) {
      throw Error(ErrorCode::kUnknownId, "no embedding for " + id);
    }
    return unit.emplace(id, normalize(raw->second)).first->second;
  };
  for (auto& t : trials) t.score = cosine(lookup(t.enroll_id), lookup(t.test_id));
  return trials;
}

std::vector<DetPoint> det_points(const std::vector<double>& target_scores,
                                 const std::vector<double>& nontarget_scores) {
  require_both_classes(target_scores.size(), nontarget_scores.size());
  std::vector<double> tgt = target_scores;
  std::vector<double> non = nontarget_scores;
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  thresholds.reserve(tgt.size() + non.size());
  std::merge(tgt.begin(), tgt.end(), non.begin(), non.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double nt = static_cast<double>(tgt.size());
  const double nn = static_cast<double>(non.size());
  std::vector<DetPoint> points;
  points.reserve(thresholds.size() + 1);
  size_t miss = 0;  // targets below the threshold
  size_t rejected = 0;  // nontargets below the threshold
  for (double th : thresholds) {
    while (miss < tgt.size() && tgt[miss] < th) ++miss;
    while (rejected < non.size() && non[rejected] < th) ++rejected;
    points.push_back({th, static_cast<double>(non.size() - rejected) / nn,
                      static_cast<double>(miss) / nt});
  }
  points.push_back({kInf, 0.0, 1.0});
  return points;
}

EerResult eer(const std::vector<double>& target_scores,
              const std::vector<double>& nontarget_scores) {
  const auto points = det_points(target_scores, nontarget_scores);
  // FAR - FRR starts at 1 and ends at -1 and never increases.
  for (size_t k = 0; k < points.size(); ++k) {
    const double d = points[k].p_fa - points[k].p_miss;
    if (d == 0.0) return {points[k].p_fa, points[k].threshold};
    if (d < 0.0) {
      const DetPoint& a = points[k - 1];
      const DetPoint& b = points[k];
      const double da = a.p_fa - a.p_miss;
      const double alpha = da / (da - d);
      const double rate = a.p_miss + alpha * (b.p_miss - a.p_miss);
      const double threshold =
          std::isinf(b.threshold) ? a.threshold
                                  : a.threshold + alpha * (b.threshold - a.threshold);
      return {rate, threshold};
    }
  }
  return {points.back().p_fa, points.back().threshold};
}

MinDcfResult min_dcf(const std::vector<double>& target_scores,
                     const std::vector<double>& nontarget_scores,
                     const DcfParams& params) {
  params.validate();
  const auto points = det_points(target_scores, nontarget_scores);
  const double w_miss = params.c_miss * params.p_target;
  const double w_fa = params.c_fa * (1.0 - params.p_target);
  MinDcfResult best{kInf, kInf};
  for (const auto& p : points) {
    const double cost = w_miss * p.p_miss + w_fa * p.p_fa;
    if (cost < best.min_dcf) best = {cost, p.threshold};
  }
  best.min_dcf /= std::min(w_miss, w_fa);
  return best;
}

std::vector<DetPoint> det_points(const std::vector<Trial>& trials) {
  std::vector<double> tgt, non;
  split_scores(trials, &tgt, &non);
  return det_points(tgt, non);
}

EerResult eer(const std::vector<Trial>& trials) {
  std::vector<double> tgt, non;
  split_scores(trials, &tgt, &non);
  return eer(tgt, non);
}

MinDcfResult min_dcf(const std::vector<Trial>& trials, const DcfParams& params) {
  std::vector<double> tgt, non;
  split_scores(trials, &tgt, &non);
  return min_dcf(tgt, non, params);
}

std::vector<Trial> read_trial_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<Trial> trials;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string label;
    Trial t;
    std::string extra;
    if (!(fields >> label >> t.enroll_id >> t.test_id) || (fields >> extra) ||
        (label != "0" && label != "1")) {
      throw Error(ErrorCode::kParseError,
                  fmt::format("{}:{}: expected \"<0|1> <enroll> <test>\"",
                              path.string(), line_no));
    }
    t.is_target = label == "1";
    trials.push_back(std::move(t));
  }
  if (trials.empty()) {
    throw Error(ErrorCode::kParseError, path.string() + " contains no trials");
  }
  return trials;
}

void write_trial_list(const std::filesystem::path& path,
                      const std::vector<Trial>& trials) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& t : trials) {
    out << (t.is_target ? 1 : 0) << ' ' << t.enroll_id << ' ' << t.test_id << '\n';
  }
}

void write_scores(const std::filesystem::path& path,
                  const std::vector<Trial>& trials) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& t : trials) {
    out << fmt::format("{} {} {} {:.17g}\n", t.is_target ? 1 : 0, t.enroll_id,
                       t.test_id, t.score.value_or(std::nan("")));
  }
}

void write_det_csv(const std::filesystem::path& path,
                   const std::vector<DetPoint>& points) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "p_fa,p_miss\n";
  for (const auto& p : points) out << fmt::format("{:.17g},{:.17g}\n", p.p_fa, p.p_miss);
}

std::vector<Trial> all_pair_trials(const std::vector<std::string>& ids,
                                   const std::vector<std::string>& groups) {
  if (ids.size() != groups.size()) {
    throw Error(ErrorCode::kShapeMismatch, "ids and groups differ in length");
  }
  std::vector<Trial> trials;
  for (size_t i = 0; i < ids.size(); ++i) {
    for (size_t j = i + 1; j < ids.size(); ++j) {
      trials.push_back({ids[i], ids[j], groups[i] == groups[j], std::nullopt});
    }
  }
  return trials;
}

}  // namespace cel
