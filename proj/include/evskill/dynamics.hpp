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

// Long-horizon dynamics models.
//
// Baselines predict one step at a time from (s_t, a_t):
//   PNN  Gaussian MLP trained by negative log-likelihood
//   DNN  deterministic MLP trained by squared error
//   DE   B bootstrap DNNs, prediction = member mean
//   PE   B bootstrap PNNs, moment-matched Gaussian
// and are rolled out autoregressively. V2S maps the whole action sequence
// through the frozen backbone and adapters to a state sequence in one pass.
//
// All methods are scored in the same normalised state space, fitted on the
// training split.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evskill/diffcore/tape.hpp"
#include "evskill/homomorphism.hpp"
#include "evskill/synthworld.hpp"

namespace evskill::dynamics {

using diffcore::Matrix;
using synthworld::RobotTrajectory;

enum class ModelKind { kPnn, kDnn, kDe, kPe, kV2s };
const char* kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);  // throws InvalidInput
bool is_probabilistic(ModelKind k);
bool is_ensemble(ModelKind k);

inline constexpr int kFullHorizon = 0;

// Per-dimension affine normalisation of states and one-step deltas.
struct Normalizer {
  Eigen::VectorXd state_mean, state_std;
  Eigen::VectorXd delta_mean, delta_std;

  static Normalizer fit(std::span<const RobotTrajectory> data);
  Eigen::VectorXd state(const Eigen::VectorXd& s) const;
  Matrix states(const Matrix& s) const;  // row-wise
};

struct BaselineSpec {
  ModelKind kind = ModelKind::kDnn;
  int ensemble_size = 5;
  int hidden = 64;
  int batch = 64;
  double lr = 1e-3;
  double var_floor = 1e-4;

  void validate() const;
};

struct Mlp {
  int in_dim = 0;
  int hidden = 0;
  int out_dim = 0;
  diffcore::ParamSet params;
};

Mlp init_mlp(int in_dim, int hidden, int out_dim, std::uint64_t seed);
Matrix mlp_forward(const Mlp& m, const Matrix& x);  // rows are samples

struct BaselineModel {
  BaselineSpec spec;
  Normalizer norm;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Mlp> members;  // one for PNN/DNN
};

struct StepPrediction {
  Eigen::VectorXd mean;
  std::optional<Eigen::VectorXd> variance;  // probabilistic kinds only
};

struct TrainedBaseline {
  BaselineModel model;                       // after the last epoch
  std::map<int, BaselineModel> snapshots;    // epoch -> model after it
  std::vector<double> epoch_loss;            // member-mean training loss
};

// Trains on all (s_t, a_t, s_{t+1}) tuples of `data`. Ensemble members see
// independent trajectory-level bootstrap resamples drawn with distinct seeds.
TrainedBaseline train_baseline(const BaselineSpec& spec, std::span<const RobotTrajectory> data,
                               int epochs, std::uint64_t seed,
                               std::span<const int> snapshot_epochs = {});

StepPrediction predict_step(const BaselineModel& model, const Eigen::VectorXd& s,
                            const Eigen::VectorXd& a);

// Per-sample training loss of one member on normalised inputs and targets;
// exposed for closed-form checks.
double member_loss(const BaselineModel& model, std::size_t member, const Matrix& x,
                   const Matrix& target);

struct PredictedRollout {
  Matrix mean;                      // (H+1) x ds, row 0 = s_0
  std::optional<Matrix> variance;   // (H+1) x ds, row 0 = var_floor
  bool truncated = false;           // non-finite state met; rows stop there
};

// Feeds each predicted mean back as the next input.
PredictedRollout rollout_autoregressive(const BaselineModel& model, const Eigen::VectorXd& s0,
                                        const Matrix& actions);

// Whole-sequence V2S prediction.
PredictedRollout rollout_v2s(const homomorphism::AdapterParams& adapters,
                             const backbone::BackboneParams& backbone, const Eigen::VectorXd& s0,
                             const Matrix& actions);

using Predictor = std::function<PredictedRollout(const Eigen::VectorXd& s0, const Matrix& actions)>;
Predictor baseline_predictor(const BaselineModel& model);
Predictor v2s_predictor(const homomorphism::AdapterParams& adapters,
                        const backbone::BackboneParams& backbone);

// RMSE over predicted steps 1..H from s_0 of every trajectory, in normalised
// state space. kFullHorizon means each trajectory's full length. A truncated
// rollout scores its missing steps with the last finite prediction.
std::vector<double> multistep_rmse(const Predictor& predictor,
                                   std::span<const RobotTrajectory> eval_data,
                                   std::span<const int> horizons, const Normalizer& norm);

}  // namespace evskill::dynamics
