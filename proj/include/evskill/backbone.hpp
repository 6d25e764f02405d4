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

// Event-representation backbone.
//
// Two encoders map a frame sequence V and a token sequence W to K event
// latents each; two cross-modal decoders regenerate the other modality:
//
//   Z_v = enc_video(V)           W' = dec_text(Z_v)    (token distributions)
//   Z_w = enc_text(embed(W))     V' = dec_video(Z_w)   (Gaussian mean, var)
//
// Training minimises
//   sdtw(V, V') + alpha * sdtw(Z_v, Z_w) + beta * sdtw_ce(W, W')
//
// where sdtw_ce aligns target tokens with predicted distributions under the
// cost -log W'_j[w_i].
// with no access to motif labels.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evskill/diffcore/checkpoint.hpp"
#include "evskill/diffcore/seq2seq.hpp"
#include "evskill/synthworld.hpp"

namespace evskill::backbone {

using diffcore::Matrix;
using synthworld::DemoTrajectory;

enum class Source { kVideo, kText, kRobot };
const char* source_name(Source s);

struct EventLatents {
  Matrix z;  // K x latent_dim
  Source source = Source::kVideo;
};

struct BackboneConfig {
  int frame_dim = 16;
  int vocab = synthworld::tokens::kVocab;
  int token_dim = 16;
  int latent_dim = 32;
  int events = 4;  // K
  int decode_frames = 40;
  int decode_tokens = 24;
  int width = 32;
  int depth = 2;
  int heads = 2;
  int ffn_mult = 2;
  double gamma = 0.1;
  double alpha = 1.0;  // alignment term
  double beta = 1.0;   // text term
  double var_floor = 1e-4;
  // Optional latent noise (z = mean + scale * eps) during training only.
  double latent_noise = 0.0;

  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;

  void validate() const;
  nlohmann::json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

struct BackboneParams {
  BackboneConfig config;
  diffcore::ParamSet embed;  // "tok.emb": vocab x token_dim
  diffcore::SeqModel enc_video, enc_text, dec_text, dec_video;
  bool frozen = false;

  void set_frozen(bool f);
  std::vector<diffcore::ParamSet*> param_sets();
  std::vector<const diffcore::ParamSet*> param_sets() const;
};

BackboneParams init_backbone(const BackboneConfig& config, std::uint64_t seed);

// Inference (no gradient tracking).
EventLatents encode_video(const BackboneParams& p, const Matrix& v);
EventLatents encode_text(const BackboneParams& p, std::span<const int> w);
Matrix decode_text(const BackboneParams& p, const EventLatents& z);  // n' x vocab
Matrix decode_text_logp(const BackboneParams& p, const EventLatents& z);

struct VideoPrediction {
  Matrix mean;      // m' x frame_dim
  Matrix variance;  // m' x frame_dim, >= var_floor
};
VideoPrediction decode_video(const BackboneParams& p, const EventLatents& z, int length = 0);

// Sum over entries of the diagonal Gaussian negative log-likelihood.
double gaussian_nll(const Matrix& x, const Matrix& mean, const Matrix& variance);

// Tape-level pieces shared with the adapter stage.
struct BoundBackbone {
  BoundBackbone(diffcore::Tape& tape, BackboneParams& p);  // tracked unless frozen
  diffcore::Tape& tape;
  const BackboneConfig& config;
  diffcore::Var embed;
  diffcore::BoundModel enc_video, enc_text, dec_text, dec_video;
};

diffcore::Var token_inputs(const BoundBackbone& b, std::span<const int> w);
diffcore::Var bb_encode_video(const BoundBackbone& b, diffcore::Var v);
diffcore::Var bb_encode_text(const BoundBackbone& b, diffcore::Var embedded);
diffcore::Var bb_decode_text(const BoundBackbone& b, diffcore::Var z, int length = 0);
diffcore::Var bb_decode_text_logp(const BoundBackbone& b, diffcore::Var z, int length = 0);
// Entry (i, j) = -log W'_j[w_i]: cross-entropy of target token i under
// predicted row j. Rows of `one_hot` select the target tokens.
diffcore::Var token_cost(diffcore::Var one_hot, diffcore::Var logp);
// Returns the two halves (mean, variance) side by side: m' x 2*frame_dim.
diffcore::Var bb_decode_video(const BoundBackbone& b, diffcore::Var z, int length = 0);
diffcore::Var video_mean(const BoundBackbone& b, diffcore::Var decoded);

// One-hot rows of the non-PAD tokens of w. Throws InvalidInput if none.
Matrix one_hot_tokens(std::span<const int> w, int vocab);

struct LossComponents {
  double video = 0.0;
  double align = 0.0;
  double text = 0.0;
};

struct PretrainLoss {
  double total = 0.0;
  LossComponents components;
};

// Batch-mean loss. With `with_grad`, accumulates d total / d param into the
// unfrozen parameter gradients.
PretrainLoss pretrain_loss(BackboneParams& p, std::span<const DemoTrajectory> batch, double alpha,
                           double beta, bool with_grad = false);

struct CurveRow {
  int epoch = 0;
  double total = 0.0;
  LossComponents components;
};

struct PretrainResult {
  BackboneParams params;
  double initial_loss = 0.0;  // full-data loss at initialisation
  std::vector<CurveRow> curve;
};

using EpochCallback = std::function<void(const CurveRow&)>;

// Trains from a seeded init. `dataset` is copied with hidden_motifs stripped.
// Throws NumericalError on NaN or when the epoch loss exceeds 10x the
// initial loss for 3 consecutive epochs.
PretrainResult pretrain(std::span<const DemoTrajectory> dataset, const BackboneConfig& config,
                        std::uint64_t seed, const EpochCallback& on_epoch = {});

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> curve);

// Frame intervals [start, end) recovered from decoder cross-attention.
struct Interval {
  int start = 0;
  int end = 0;
  bool operator==(const Interval&) const = default;
};
std::vector<Interval> segment_events(const BackboneParams& p, const Matrix& v);

// Checkpoints.
diffcore::Checkpoint to_checkpoint(const BackboneParams& p, std::uint64_t seed,
                                   const nlohmann::json& extra = nlohmann::json::object());
BackboneParams from_checkpoint(const diffcore::Checkpoint& ckpt);

}  // namespace evskill::backbone
