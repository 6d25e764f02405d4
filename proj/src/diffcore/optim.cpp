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

#include "evskill/diffcore/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "evskill/errors.hpp"

namespace evskill::diffcore {

OptimizerState make_optimizer_state(const ParamSet& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.first.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.second.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

void adam_step(ParamSet& params, OptimizerState& state, const AdamHyper& hyper) {
  if (params.frozen()) return;
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ContractViolation("optimizer state does not match parameter set");
  }
  for (const auto& p : params) {
    if (!p.grad.allFinite()) {
      throw NumericalError("non-finite gradient in tensor '" + p.name + "' (|grad|max=" +
                           std::to_string(p.grad.cwiseAbs().maxCoeff()) + ")");
    }
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * p.grad;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        hyper.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.eps);
  }
}

GradCheckReport grad_check(const LossFn& loss_fn, std::span<ParamSet* const> params, double eps,
                           double tol, std::size_t samples, std::uint64_t seed, double floor) {
  struct Coord {
    Param* param;
    Eigen::Index index;
  };
  std::vector<Coord> all;
  for (ParamSet* ps : params) {
    if (ps->frozen()) continue;
    for (auto& p : *ps) {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) all.push_back({&p, i});
    }
  }
  GradCheckReport report;
  if (all.empty()) return report;

  for (ParamSet* ps : params) ps->zero_grad();
  loss_fn(true);
  std::vector<double> analytic;

  std::mt19937_64 rng(seed);
  std::vector<Coord> picked;
  if (all.size() <= samples) {
    picked = all;
  } else {
    std::sample(all.begin(), all.end(), std::back_inserter(picked), samples, rng);
  }
  for (const Coord& c : picked) analytic.push_back(c.param->grad.data()[c.index]);

  for (std::size_t k = 0; k < picked.size(); ++k) {
    double& x = picked[k].param->value.data()[picked[k].index];
    const double saved = x;
    x = saved + eps;
    const double up = loss_fn(false);
    x = saved - eps;
    const double down = loss_fn(false);
    x = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[k];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    ++report.coordinates;
    if (rel > tol) ++report.failures;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      const Eigen::Index rows = picked[k].param->value.rows();
      report.worst = picked[k].param->name + "[" + std::to_string(picked[k].index % rows) + "," +
                     std::to_string(picked[k].index / rows) + "]";
    }
  }
  report.passed = report.failures == 0;
  return report;
}

}  // namespace evskill::diffcore
