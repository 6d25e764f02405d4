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

// Run configuration: every module's settings under one dotted namespace.
//
// File format, one setting per line:
//
//   # comment
//   seed = 3
//   [backbone]
//   epochs = 40
//   dynamics.horizons = 2, 5, full
//
// A key inside a [section] is prefixed with the section name unless it
// already starts with a known section. Unknown keys are rejected.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evskill/backbone.hpp"
#include "evskill/dynamics.hpp"
#include "evskill/evalkit.hpp"
#include "evskill/homomorphism.hpp"
#include "evskill/synthworld.hpp"

namespace evskill::cli {

struct DynamicsSettings {
  std::vector<std::string> methods = {"PNN", "DNN", "DE", "PE", "V2S"};
  std::vector<int> epochs = {1, 5, 10};
  std::vector<int> horizons = {2, 5, dynamics::kFullHorizon};
  int seeds = 3;  // runs at seed, seed + 1, ...
  int ensemble_size = 5;
  int hidden = 64;
  int batch = 64;
  double lr = 1e-3;
  double var_floor = 1e-4;
};

struct EvalSettings {
  int eval_count = 50;        // held-out robot trajectories
  int probes_per_motif = 10;  // labelled single-motif probes per domain
  int shuffles = 20;          // shuffled-label permutations
  std::string similarity = "cosine";
  double quality_gamma = 0.01;
  double latent_sigma = 0.0;  // Gaussian perturbation of demo-event latents
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  synthworld::DemoConfig demo;
  synthworld::RobotConfig robot;
  backbone::BackboneConfig backbone;
  homomorphism::AdapterConfig adapters;
  DynamicsSettings dynamics;
  EvalSettings eval;

  void validate() const;  // throws ConfigError naming the key
  // Every setting except out_dir.
  nlohmann::json to_json() const;
  std::uint64_t hash() const;
};

// Applies a named preset to `cfg`; throws ConfigError for unknown names.
void apply_preset(RunConfig& cfg, const std::string& preset);

// Parsed "key = value" lines, keys fully qualified, in file order.
using Assignments = std::vector<std::pair<std::string, std::string>>;
Assignments parse_config_text(const std::string& text);
Assignments read_config_file(const std::filesystem::path& path);

// Sets one fully qualified key.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> known_keys();

// Preset (from `preset_override`, else the file's `preset` key, else desk),
// then file assignments in order, then validation.
RunConfig build_config(const Assignments& assignments,
                       const std::optional<std::string>& preset_override = std::nullopt);

evalkit::Similarity similarity_from_name(const std::string& name);

}  // namespace evskill::cli
