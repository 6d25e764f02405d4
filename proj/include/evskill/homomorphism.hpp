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

// Adapters between the robot domain and a frozen backbone.
//
//   f_s : states  (T x ds)     -> frame space (m x Dv)
//   f_a : actions (T-1 x da)   -> token-embedding space (n x Dw)
//   g_s : decoded frames + s_0 -> states  (T x ds)
//   g_a : token log-probabilities -> actions (T-1 x da), bounded to [-1, 1]
//
// Cycle wiring, crossing modalities as the backbone does:
//   S' = g_s(dec_video(enc_text(f_a(A))), s_0)
//   A' = g_a(log dec_text(enc_video(f_s(S))))

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "evskill/backbone.hpp"

namespace evskill::homomorphism {

using backbone::BackboneParams;
using backbone::EventLatents;
using diffcore::Matrix;
using synthworld::RobotTrajectory;

struct AdapterConfig {
  int state_dim = synthworld::kStateDim;
  int action_dim = synthworld::kActionDim;
  int width = 32;
  int depth = 0;  // 0 means max(1, backbone depth / 2)
  int heads = 2;
  int ffn_mult = 2;
  double gamma = 0.1;
  double aux_weight = 1.0;  // alignment sdtw(Z_s, Z_a); 0 disables
  int video_len = 0;        // f_s output rows; 0 means backbone decode_frames
  int text_len = 8;         // f_a output rows
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;

  void validate() const;
  nlohmann::json to_json() const;
  static AdapterConfig from_json(const nlohmann::json& j);
};

struct AdapterParams {
  AdapterConfig config;
  // Shapes of the modality spaces the adapters target.
  int frame_dim = 0;
  int token_dim = 0;
  int vocab = 0;
  int video_len = 0;  // m
  int text_len = 0;   // n
  diffcore::SeqModel f_s, f_a, g_s, g_a;

  std::vector<diffcore::ParamSet*> param_sets();
  std::vector<const diffcore::ParamSet*> param_sets() const;
};

AdapterParams init_adapters(const AdapterConfig& config, const backbone::BackboneConfig& bb,
                            std::uint64_t seed);

struct ModalityInputs {
  Matrix v_hat;  // m x Dv
  Matrix w_hat;  // n x Dw
};
ModalityInputs f_map(const AdapterParams& ad, const Matrix& s, const Matrix& a);

struct RobotReconstruction {
  Matrix s;  // T x ds, row 0 = s_0
  Matrix a;  // (T-1) x da in [-1, 1]
};
// `w_prime` holds token log-probabilities (rows of log dec_text). `s0`
// conditions the state inverse; `steps` is the action count T-1.
RobotReconstruction g_map(const AdapterParams& ad, const Matrix& v_prime, const Matrix& w_prime,
                          const Eigen::VectorXd& s0, int steps);

struct CycleLoss {
  double total = 0.0;  // state_term + action_term
  double state_term = 0.0;
  double action_term = 0.0;
  double align_term = 0.0;  // sdtw(Z_s, Z_a), reported separately
};

// Requires backbone.frozen. With `with_grad`, accumulates gradients of
// total + aux_weight * align_term into the adapter parameters.
CycleLoss cycle_loss(AdapterParams& ad, BackboneParams& backbone, const Matrix& s, const Matrix& a,
                     bool with_grad = false);
CycleLoss cycle_loss(AdapterParams& ad, BackboneParams& backbone,
                     std::span<const RobotTrajectory> batch, bool with_grad = false);

struct DistillRow {
  int epoch = 0;
  double total = 0.0;  // L_distil = state + action
  double state_term = 0.0;
  double action_term = 0.0;
  double align_term = 0.0;
  double objective = 0.0;  // total + aux_weight * align
};

struct DistillResult {
  AdapterParams adapters;
  double initial_loss = 0.0;  // L_distil at init, full data
  std::vector<DistillRow> curve;
  std::map<int, AdapterParams> snapshots;  // epoch -> adapters after it
};

using DistillCallback = std::function<void(const DistillRow&)>;

DistillResult distill(std::span<const RobotTrajectory> dataset, BackboneParams& frozen_backbone,
                      const AdapterConfig& config, std::uint64_t seed,
                      std::span<const int> snapshot_epochs = {},
                      const DistillCallback& on_epoch = {});

void write_curve_csv(const std::filesystem::path& path, std::span<const DistillRow> curve);

// Skill latents enc_video(f_s(s)).
EventLatents embed_robot_skills(const AdapterParams& ad, const BackboneParams& backbone,
                                const Matrix& s, const Matrix& a);
// The action-pathway analog enc_text(f_a(a)).
EventLatents embed_robot_actions(const AdapterParams& ad, const BackboneParams& backbone,
                                 const Matrix& a);

// Whole-sequence state prediction from s_0 and an action sequence:
// g_s(dec_video(enc_text(f_a(a))), s_0). Rows = actions + 1, row 0 = s_0.
Matrix predict_states(const AdapterParams& ad, const BackboneParams& backbone,
                      const Eigen::VectorXd& s0, const Matrix& a);

// Actions decoded from event latents: g_a(log dec_text(z)).
Matrix actions_from_latents(const AdapterParams& ad, const BackboneParams& backbone,
                            const EventLatents& z, int steps);

diffcore::Checkpoint to_checkpoint(const AdapterParams& ad, std::uint64_t seed,
                                   const nlohmann::json& extra = nlohmann::json::object());
AdapterParams from_checkpoint(const diffcore::Checkpoint& ckpt);

}  // namespace evskill::homomorphism
