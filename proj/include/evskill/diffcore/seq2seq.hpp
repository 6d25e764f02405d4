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

// Attention encoder-decoder mapping a T x in_dim sequence to a K x out_dim
// sequence for any requested K.
//
// Encoder: linear input projection plus sinusoidal positions, then `depth`
// pre-norm blocks of multi-head self-attention and a GELU feed-forward.
// Decoder: K query rows seeded from the positional table, then `depth`
// pre-norm blocks of cross-attention over the encoder memory and a
// feed-forward, followed by a final norm and linear head.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evskill/diffcore/tape.hpp"

namespace evskill::diffcore {

struct SeqModelConfig {
  int in_dim = 1;
  int out_dim = 1;
  int width = 32;
  int depth = 2;
  int heads = 2;
  int ffn_mult = 2;

  // Throws ConfigError when dims are non-positive or width % heads != 0.
  void validate(const std::string& where) const;
};

struct SeqModel {
  SeqModelConfig config;
  ParamSet params;
};

SeqModel init_seq_model(const SeqModelConfig& config, std::uint64_t seed);

// Fixed sinusoidal table, rows = positions.
Matrix positional_table(Eigen::Index length, int width);

// Parameters of one model bound to a tape, looked up by name.
class BoundModel {
 public:
  BoundModel(Tape& tape, SeqModel& model);             // tracked unless frozen
  BoundModel(Tape& tape, const SeqModel& model, bool);  // always constant
  Var operator()(const std::string& name) const;
  const SeqModelConfig& config() const { return *config_; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  const SeqModelConfig* config_;
  std::vector<std::pair<std::string, Var>> vars_;
};

struct ForwardTrace {
  Matrix cross_attention;  // out_len x T, last decoder block, head-averaged
};

Var seq2seq_forward(const BoundModel& model, Var input, int out_len, ForwardTrace* trace = nullptr);

// Convenience path with no gradient tracking.
Matrix seq2seq_forward(const SeqModel& model, const Matrix& input, int out_len,
                       ForwardTrace* trace = nullptr);

}  // namespace evskill::diffcore
