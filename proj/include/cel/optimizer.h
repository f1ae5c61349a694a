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

#ifndef CEL_OPTIMIZER_H_
#define CEL_OPTIMIZER_H_

#include <cstdint>
#include <span>
#include <vector>

namespace cel {

// Adam moments for one flat parameter vector.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState for_size(size_t n, double lr = 1e-3);
};

// One bias-corrected Adam update of `params` in place.
void adam_step(OptimizerState& state, std::span<double> params,
               std::span<const double> grads);

// Step decay: initial_lr * (1 - decay_fraction)^floor(epoch / period_epochs).
struct LrSchedule {
  double initial_lr = 1e-3;
  double decay_fraction = 0.05;
  int period_epochs = 10;

  void validate() const;
};

// `epoch` is zero-based.
double lr_at(const LrSchedule& schedule, int epoch);

}  // namespace cel

#endif  // CEL_OPTIMIZER_H_
