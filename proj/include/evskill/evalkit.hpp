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

// Evaluations over trained checkpoints: the multi-step dynamics table,
// cross-domain analogy retrieval, zero-shot skill generation and scoring,
// and a 2-D latent export.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evskill/dynamics.hpp"

namespace evskill::evalkit {

using diffcore::Matrix;

// ----- dynamics report -----

struct EvalRow {
  std::string method;
  int epochs = 0;
  int horizon = 0;  // dynamics::kFullHorizon for the full sequence
  double rmse_mean = 0.0;
  double rmse_stderr = 0.0;
  int seed_count = 0;
  std::vector<double> per_seed;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  const EvalRow& at(const std::string& method, int epochs, int horizon) const;
};

// Supplies the predictor for one (method, epochs, seed) cell. Throws
// MissingDependency when the cell's model is unavailable.
using PredictorSource =
    std::function<dynamics::Predictor(const std::string& method, int epochs, std::uint64_t seed)>;

struct ReportGrid {
  std::vector<std::string> methods;
  std::vector<int> epochs;
  std::vector<int> horizons;
  std::vector<std::uint64_t> seeds;
};

// Scores every cell of the grid on `eval_data` in the state space of `norm`.
// Rows are ordered method-major, then epochs, then horizon.
EvalReport dynamics_report(const ReportGrid& grid, const PredictorSource& source,
                           std::span<const dynamics::RobotTrajectory> eval_data,
                           const dynamics::Normalizer& norm);

std::string horizon_label(int horizon);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
nlohmann::json report_to_json(const EvalReport& report);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);

double mean(std::span<const double> xs);
double stderr_of_mean(std::span<const double> xs);  // sample std / sqrt(n); 0 for n < 2

// ----- analogy retrieval -----

enum class Similarity { kCosine, kEuclidean };

// One K x d latent set per trajectory and its single motif label.
struct LabeledLatents {
  std::vector<Matrix> latents;
  std::vector<int> labels;
};

struct AnalogyResult {
  double accuracy = 0.0;            // per-trajectory mean event vector
  double per_event_accuracy = 0.0;  // each robot event against every demo event
  double chance = 0.0;              // 1 / |shared motifs|
  std::vector<int> motifs;          // shared motifs, confusion row/col order
  Eigen::MatrixXi confusion;        // truth x prediction
  int count = 0;                    // scored robot trajectories
};

// Robot trajectories whose motif has no demo counterpart are skipped.
AnalogyResult analogy_retrieval(const LabeledLatents& demo, const LabeledLatents& robot,
                                Similarity metric = Similarity::kCosine);

struct ShuffledControl {
  double mean_accuracy = 0.0;
  double chance = 0.0;
  double binomial_stderr = 0.0;  // sqrt(p (1 - p) / n) at p = chance
  std::vector<double> accuracies;
};

// Demo labels permuted `permutations` times from `seed`.
ShuffledControl shuffled_control(const LabeledLatents& demo, const LabeledLatents& robot,
                                 Similarity metric, std::uint64_t seed, int permutations = 20);

void write_analogies_csv(const AnalogyResult& result, const ShuffledControl& control,
                         const std::filesystem::path& path);

// ----- skill generation -----

struct GeneratedSkill {
  Matrix actions;  // steps x da, entries in [-1, 1]
  Matrix states;   // (steps + 1) x ds from step_env
  bool truncated = false;
};

// z -> decode_text -> g_a -> clipped actions, executed from s0.
GeneratedSkill generate_skill(const homomorphism::AdapterParams& adapters,
                              const backbone::BackboneParams& backbone,
                              const backbone::EventLatents& z, const synthworld::EnvState& s0,
                              int steps, const synthworld::EnvParams& env = {});

backbone::EventLatents perturb_latents(const backbone::EventLatents& z, double sigma,
                                       std::uint64_t seed);
backbone::EventLatents random_latents(int events, int latent_dim, std::uint64_t seed);

// Distance between first and last effector position over effector path
// length; near 0 for a closed loop. Returns 1 for a stationary path.
double loop_closure(const Matrix& states);

// ----- skill quality -----

struct SequenceScaler {
  Eigen::RowVectorXd mean, std;
  static SequenceScaler fit(std::span<const Matrix> corpus);
  Matrix apply(const Matrix& x) const;
};

struct QualityStats {
  std::vector<double> distances;  // per skill, min over the corpus
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

// Min soft-DTW (euclidean metric) from each skill to any corpus sequence,
// after scaling both with `scaler`.
QualityStats skill_quality(std::span<const Matrix> skills, std::span<const Matrix> corpus,
                           double gamma, const SequenceScaler& scaler);

double quantile(std::vector<double> xs, double q);  // linear interpolation

// ----- 2-D embedding -----

struct Embedding2d {
  Matrix coords;  // n x 2
  std::vector<std::string> tags;
  std::vector<int> labels;
  bool degenerate = false;
  double silhouette = 0.0;  // over labels; 0 when fewer than two labels
};

// PCA to two components. Each axis' sign makes its largest-magnitude
// loading positive.
Embedding2d embed_2d(const Matrix& latents, std::vector<std::string> tags,
                     std::vector<int> labels = {});

double silhouette_score(const Matrix& points, std::span<const int> labels);

void write_embedding_csv(const Embedding2d& e, const std::filesystem::path& path);
void write_embedding_svg(const Embedding2d& e, const std::filesystem::path& path);
void write_path_svg(const Matrix& states, const std::filesystem::path& path);
void write_matrix_csv(const Matrix& m, std::span<const std::string> header,
                      const std::filesystem::path& path);

}  // namespace evskill::evalkit
