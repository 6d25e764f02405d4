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

// Checkpoint container.
//
//   bytes 0..7   magic "EVSKCKPT"
//   u32          format version (1)
//   u32 + bytes  JSON header (kind, seed, config, free-form metadata)
//   u32          tensor count
//   per tensor:  u32 + bytes name, u32 rows, u32 cols, rows*cols f32
//                (row-major)
//
// All integers and floats are little-endian.

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evskill/diffcore/seq2seq.hpp"

namespace evskill::diffcore {

inline constexpr char kCheckpointMagic[] = "EVSKCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws ParseError with the byte offset on any structural defect.
Checkpoint read_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(std::vector<std::uint8_t> bytes);

void export_params(Checkpoint& ckpt, const std::string& prefix, const ParamSet& params);
// Overwrites values of `params`; every tensor must be present with the same shape.
void import_params(const Checkpoint& ckpt, const std::string& prefix, ParamSet& params);

nlohmann::json to_json(const SeqModelConfig& c);
SeqModelConfig seq_model_config_from_json(const nlohmann::json& j);

// Rounds every value through float32, matching what a checkpoint stores.
void round_to_storage(ParamSet& params);

}  // namespace evskill::diffcore
