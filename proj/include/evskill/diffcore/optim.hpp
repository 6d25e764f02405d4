// Copyright 2026 The evskill Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evskill/diffcore/tape.hpp"

namespace evskill::diffcore {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const ParamSet& params);

// One Adam update from the gradients stored in `params`. Frozen sets are
// left untouched, state included. Throws NumericalError naming the first
// tensor with a non-finite gradient; nothing is modified in that case.
void adam_step(ParamSet& params, OptimizerState& state, const AdamHyper& hyper);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  std::string worst;  // "<tensor>[row,col]" of the largest error
  bool passed = true;
};

// Evaluates the loss; when `with_grad` is set it must also leave
// d loss / d param in every Param::grad (zeroed beforehand by the caller).
using LossFn = std::function<double(bool with_grad)>;

// Central differences on a seeded random subsample of unfrozen coordinates.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport grad_check(const LossFn& loss_fn, std::span<ParamSet* const> params, double eps,
                           double tol, std::size_t samples = 64, std::uint64_t seed = 0,
                           double floor = 1e-4);

}  // namespace evskill::diffcore
