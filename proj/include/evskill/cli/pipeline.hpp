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

// Pipeline stages. Stages talk only through files under RunConfig::out_dir
// and each writes manifests/<stage>.json listing its inputs and outputs.
//
//   gen-data       data/*.evc (+ label sidecars)
//   pretrain       checkpoints/backbone.ckpt, curves/pretrain.csv
//   distill        checkpoints/adapters_seed<S>[_epoch<E>].ckpt, curves/distill_seed<S>.csv
//   eval-dynamics  report.csv, report.json
//   analogies      analogies.csv, analogies.json
//   gen-skills     skills/
//   report         embedding.csv, embedding.svg, summary.json

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "evskill/cli/config.hpp"

namespace evskill::cli {

const std::vector<std::string>& stage_names();
bool is_stage(const std::string& name);

struct PipelineOptions {
  std::set<std::string> skip;  // stages not run; later stages still check inputs
  bool resume = false;         // skip stages whose manifest matches (config, seed)
  std::ostream* log = nullptr;
};

// Runs one stage. Throws MissingDependency naming the upstream stage when
// an input artifact is absent.
void run_stage(const std::string& stage, const RunConfig& cfg, const PipelineOptions& opts = {});

// All stages in order.
void run_pipeline(const RunConfig& cfg, const PipelineOptions& opts = {});

// Paths relative to out_dir.
std::filesystem::path manifest_path(const RunConfig& cfg, const std::string& stage);
nlohmann::json read_manifest(const RunConfig& cfg, const std::string& stage);

std::string revision();

// FNV-1a over the file's bytes.
std::uint64_t file_hash(const std::filesystem::path& path);

// Human-readable summary of a checkpoint or corpus file; labels only when
// asked for.
nlohmann::json inspect_artifact(const std::filesystem::path& path, bool with_labels);

}  // namespace evskill::cli
