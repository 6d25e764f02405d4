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

// Synthetic two-domain world with known ground truth.
//
// Demonstration domain: each trajectory chains 2-4 motifs (stir, slide, lift,
// ...) rendered as smooth 16-d frame embeddings through a fixed linear camera
// plus per-trajectory affine jitter, paired with a commentary token sequence.
//
// Robot domain: a planar kinematic effector with a gripper and two objects,
// driven by proportional controllers that track the same motif programs.
// Only a subset of motifs has a robot controller in the corpus.
//
// Motif labels never travel inside a corpus file; they live in a sidecar.

#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace evskill::synthworld {

using Matrix = Eigen::MatrixXd;

enum Motif : int {
  kStirCw = 0,
  kStirCcw,
  kSlideH,
  kSlideV,
  kLift,
  kPress,
  kPourTilt,
  kHold,
  kMotifCount
};

const char* motif_name(int motif);
int motif_from_name(const std::string& name);  // -1 if unknown

namespace tokens {
inline constexpr int kPad = 0;
inline constexpr int kStart = 1;
inline constexpr int kStop = 2;
inline constexpr int kFirstMotif = 3;
inline constexpr int kFirstFiller = kFirstMotif + kMotifCount;
inline constexpr int kVocab = 32;
}  // namespace tokens

// [start, end) frame or step range of one motif.
struct MotifSegment {
  int motif = 0;
  int start = 0;
  int end = 0;
  bool operator==(const MotifSegment&) const = default;
};

struct DemoTrajectory {
  Matrix v;                 // m x frame_dim
  std::vector<int> w;       // token ids, no padding
  std::vector<MotifSegment> hidden_motifs;  // evaluation only
};

struct RobotTrajectory {
  Matrix s;  // T x 8
  Matrix a;  // (T-1) x 4
  std::vector<MotifSegment> hidden_motifs;  // evaluation only
};

inline constexpr int kStateDim = 8;
inline constexpr int kActionDim = 4;

struct EnvState {
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();  // [-1, 1]^2
  double angle = 0.0;                               // [-pi, pi]
  double gripper = 0.0;                             // [0, 1]
  std::array<Eigen::Vector2d, 2> objects{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};

  Eigen::VectorXd to_vector() const;
  static EnvState from_vector(const Eigen::VectorXd& v);
};

struct EnvParams {
  double pos_scale = 0.05;
  double angle_scale = 0.1;
  double grip_scale = 0.25;
  double grasp_radius = 0.15;
};

struct StepResult {
  EnvState state;
  bool clipped = false;  // some action component was outside [-1, 1]
};

// Deterministic kinematic update; every field is rounded to float32 so that
// stored trajectories replay exactly.
StepResult step_env(const EnvState& state, const Eigen::VectorXd& action,
                    const EnvParams& params = {});

// Effector pose used by motif programs: x, y, angle, gripper.
using Pose = Eigen::Vector4d;

// Target pose at phase u in (0, 1] of `motif` started from `start`.
Pose motif_target(int motif, const Pose& start, double u);

struct DemoConfig {
  int count = 200;
  int frames = 40;
  int frame_dim = 16;
  int min_motifs = 2;
  int max_motifs = 4;
  int event_budget = 4;  // K; max_motifs may not exceed it
  int max_tokens = 24;
  double noise = 0.02;
  double jitter = 0.1;
  double filler_prob = 0.3;
  double appearance = 1.0;  // strength of the per-motif tool channel
  std::uint64_t camera_seed = 7;
  std::vector<int> motifs = {kStirCw, kStirCcw, kSlideH, kSlideV, kLift, kPress, kPourTilt, kHold};

  void validate() const;
  nlohmann::json to_json() const;
};

struct RobotConfig {
  int count = 200;
  int length = 60;
  int min_motifs = 2;
  int max_motifs = 3;
  double controller_noise = 0.05;
  std::vector<int> motifs = {kSlideH, kSlideV, kLift, kPress, kHold};
  EnvParams env;

  void validate() const;
  nlohmann::json to_json() const;
};

std::vector<DemoTrajectory> gen_demo_corpus(const DemoConfig& config, std::uint64_t seed);
std::vector<RobotTrajectory> gen_robot_corpus(const RobotConfig& config, std::uint64_t seed);

// Single-motif trajectories, `per_motif` for each listed motif. Used as
// labelled probes for analogy retrieval and skill generation.
std::vector<DemoTrajectory> gen_demo_probes(const DemoConfig& config, std::span<const int> motifs,
                                            int per_motif, std::uint64_t seed);
std::vector<RobotTrajectory> gen_robot_probes(const RobotConfig& config,
                                              std::span<const int> motifs, int per_motif,
                                              std::uint64_t seed);

// Runs one motif controller for `steps` actions from `start`.
RobotTrajectory run_controller(int motif, const EnvState& start, int steps, double noise,
                               std::uint64_t seed, const EnvParams& env = {});

// ----- corpus files -----

struct CorpusMeta {
  std::uint32_t version = 1;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

template <typename T>
struct Corpus {
  CorpusMeta meta;
  std::vector<T> items;
};

using DemoCorpus = Corpus<DemoTrajectory>;
using RobotCorpus = Corpus<RobotTrajectory>;

// Writes `path` (data) and `labels_path(path)` (sidecar motif labels).
void write_corpus(const DemoCorpus& corpus, const std::filesystem::path& path);
void write_corpus(const RobotCorpus& corpus, const std::filesystem::path& path);

// Training loaders: read only the data file; hidden_motifs stay empty.
DemoCorpus read_demo_corpus(const std::filesystem::path& path);
RobotCorpus read_robot_corpus(const std::filesystem::path& path);

std::filesystem::path labels_path(const std::filesystem::path& corpus_path);
// Sidecar reader; result is keyed by trajectory index.
std::vector<std::vector<MotifSegment>> read_labels(const std::filesystem::path& corpus_path);
// Evaluation-side join of sidecar labels onto loaded trajectories.
template <typename T>
void attach_labels(std::vector<T>& items, const std::vector<std::vector<MotifSegment>>& labels) {
  for (std::size_t i = 0; i < items.size() && i < labels.size(); ++i) {
    items[i].hidden_motifs = labels[i];
  }
}

// Header summary of either corpus kind without reading labels.
nlohmann::json inspect_corpus(const std::filesystem::path& path);

std::uint64_t config_hash(const nlohmann::json& config);

}  // namespace evskill::synthworld
