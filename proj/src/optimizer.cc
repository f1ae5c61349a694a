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

#include "cel/optimizer.h"

#include <cmath>
#include <string>

#include "cel/error.h"

namespace cel {

OptimizerState OptimizerState::for_size(size_t n, double lr) {
  OptimizerState state;
  state.m.assign(n, 0.0);
  state.v.assign(n, 0.0);
  state.lr = lr;
  return state;
}

void adam_step(OptimizerState& state, std::span<double> params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "adam_step: " + std::to_string(params.size()) + " parameters, " +
                    std::to_string(grads.size()) + " gradients, " +
                    std::to_string(state.m.size()) + " moments");
  }
  if (!(state.lr > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "learning rate must be positive");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void LrSchedule::validate() const {
  if (!(initial_lr > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "initial learning rate must be positive");
  }
  if (!(decay_fraction > 0.0 && decay_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidParam, "decay fraction must lie in (0, 1)");
  }
  if (period_epochs < 1) {
    throw Error(ErrorCode::kInvalidParam, "decay period must be at least one epoch");
  }
}

double lr_at(const LrSchedule& schedule, int epoch) {
  const int decays = epoch < 0 ? 0 : epoch / schedule.period_epochs;
  return schedule.initial_lr * std::pow(1.0 - schedule.decay_fraction, decays);
}

}  // namespace cel
