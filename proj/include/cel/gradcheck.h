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

#ifndef CEL_GRADCHECK_H_
#define CEL_GRADCHECK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cel {

enum class GradScope {
  kAll,
  kUniformity,
  kAngularPrototypical,
  kAngularContrastive,
  kTotal,
  kGe2e,
  kCosFace,
  kArcFace,
  kAdaCos,
  kEncoder,
};

// Scope names: all, unif, aprot, acont, total, ge2e, cosface, arcface,
// adacos, encoder.
std::string scope_name(GradScope scope);
GradScope parse_scope(const std::string& name);

// Central differences of f at x with step h; x is restored on return.
std::vector<double> numeric_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::vector<double> x, double h);

// max_i |a_i - n_i| / max(|a|_inf, |n|_inf, 1e-12).
double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric,
                      size_t* worst_index = nullptr);

struct GradCheckConfig {
  uint64_t seed = 20260501;
  int instances = 20;
  double step = 1e-5;
  double tolerance = 1e-5;          // loss-level checks
  double encoder_tolerance = 1e-4;  // full pipeline through the encoder
};

struct GradCheckRow {
  std::string loss;
  int instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int worst_instance = -1;
  std::string worst_coordinate;  // e.g. "view1[2,5]" or "w"
  bool passed = false;
};

std::vector<GradCheckRow> run_gradcheck(GradScope scope,
                                        const GradCheckConfig& cfg = {});

// Fixed-width table, one row per loss.
std::string format_gradcheck(const std::vector<GradCheckRow>& rows);

}  // namespace cel

#endif  // CEL_GRADCHECK_H_
