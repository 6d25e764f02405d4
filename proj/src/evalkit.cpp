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

#include "evskill/evalkit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "evskill/errors.hpp"
#include "evskill/softdtw.hpp"

namespace evskill::evalkit {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

// ----- dynamics report -----

const EvalRow& EvalReport::at(const std::string& method, int epochs, int horizon) const {
  for (const auto& r : rows) {
    if (r.method == method && r.epochs == epochs && r.horizon == horizon) return r;
  }
  throw InvalidInput("report has no cell (" + method + ", " + std::to_string(epochs) + ", " +
                     horizon_label(horizon) + ")");
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stderr_of_mean(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double n = static_cast<double>(xs.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

std::string horizon_label(int horizon) {
  return horizon == dynamics::kFullHorizon ? "full" : std::to_string(horizon);
}

EvalReport dynamics_report(const ReportGrid& grid, const PredictorSource& source,
                           std::span<const dynamics::RobotTrajectory> eval_data,
                           const dynamics::Normalizer& norm) {
  if (grid.methods.empty() || grid.epochs.empty() || grid.horizons.empty() || grid.seeds.empty()) {
    throw InvalidInput("dynamics_report: every grid axis needs at least one entry");
  }
  if (eval_data.empty()) throw InvalidInput("dynamics_report: empty eval split");
  EvalReport report;
  for (const auto& method : grid.methods) {
    for (int epochs : grid.epochs) {
      // cell -> per-seed values, horizons scored together per seed
      std::vector<std::vector<double>> values(grid.horizons.size());
      for (std::uint64_t seed : grid.seeds) {
        dynamics::Predictor p;
        try {
          p = source(method, epochs, seed);
        } catch (const MissingDependency& e) {
          throw MissingDependency(e.stage(), "dynamics_report: missing cell (" + method + ", " +
                                                 std::to_string(epochs) + " epochs, seed " +
                                                 std::to_string(seed) + "): " + e.what());
        }
        if (!p) {
          throw InvalidInput("dynamics_report: no predictor for (" + method + ", " +
                             std::to_string(epochs) + ", seed " + std::to_string(seed) + ")");
        }
        const auto rmse = dynamics::multistep_rmse(p, eval_data, grid.horizons, norm);
        for (std::size_t k = 0; k < rmse.size(); ++k) values[k].push_back(rmse[k]);
      }
      for (std::size_t k = 0; k < grid.horizons.size(); ++k) {
        EvalRow row;
        row.method = method;
        row.epochs = epochs;
        row.horizon = grid.horizons[k];
        row.per_seed = values[k];
        row.rmse_mean = mean(values[k]);
        row.rmse_stderr = stderr_of_mean(values[k]);
        row.seed_count = static_cast<int>(values[k].size());
        report.rows.push_back(std::move(row));
      }
    }
  }
  report.metadata["seeds"] = grid.seeds;
  return report;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "method,epochs,horizon,rmse_mean,rmse_stderr,seed_count\n";
  for (const auto& r : report.rows) {
    out << r.method << ',' << r.epochs << ',' << horizon_label(r.horizon) << ',' << r.rmse_mean
        << ',' << r.rmse_stderr << ',' << r.seed_count << '\n';
  }
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"method", r.method},
                    {"epochs", r.epochs},
                    {"horizon", horizon_label(r.horizon)},
                    {"rmse_mean", r.rmse_mean},
                    {"rmse_stderr", r.rmse_stderr},
                    {"seed_count", r.seed_count},
                    {"per_seed", r.per_seed}});
  }
  return {{"rows", rows}, {"metadata", report.metadata}};
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << report_to_json(report).dump(2) << '\n';
}

// ----- analogy retrieval -----

namespace {

double similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, Similarity m) {
  if (m == Similarity::kEuclidean) return -(a - b).squaredNorm();
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

void check_latents(const LabeledLatents& l, const char* what) {
  if (l.latents.empty()) throw InvalidInput(std::string("analogy_retrieval: empty ") + what);
  if (l.latents.size() != l.labels.size()) {
    throw InvalidInput(std::string("analogy_retrieval: ") + what + " latents and labels differ in count");
  }
  const Eigen::Index d = l.latents[0].cols();
  for (const auto& z : l.latents) {
    if (z.rows() < 1 || z.cols() != d) {
      throw InvalidInput(std::string("analogy_retrieval: inconsistent ") + what + " latent shapes");
    }
  }
}

}  // namespace

AnalogyResult analogy_retrieval(const LabeledLatents& demo, const LabeledLatents& robot,
                                Similarity metric) {
  check_latents(demo, "demo");
  check_latents(robot, "robot");
  if (demo.latents[0].cols() != robot.latents[0].cols()) {
    throw InvalidInput("analogy_retrieval: demo and robot latent widths differ");
  }
  const std::set<int> demo_set(demo.labels.begin(), demo.labels.end());
  std::set<int> shared;
  for (int l : robot.labels) {
    if (demo_set.count(l)) shared.insert(l);
  }
  if (shared.empty()) throw InvalidInput("analogy_retrieval: no shared motifs");

  AnalogyResult r;
  r.motifs.assign(shared.begin(), shared.end());
  r.chance = 1.0 / static_cast<double>(shared.size());
  std::map<int, int> index;
  for (std::size_t i = 0; i < r.motifs.size(); ++i) index[r.motifs[i]] = static_cast<int>(i);
  r.confusion = Eigen::MatrixXi::Zero(static_cast<int>(shared.size()),
                                      static_cast<int>(shared.size()));

  // Candidates are restricted to shared motifs so chance is 1 / |shared|.
  std::vector<Eigen::RowVectorXd> demo_means;
  std::vector<int> demo_labels;
  std::vector<Eigen::RowVectorXd> demo_events;
  std::vector<int> event_labels;
  for (std::size_t i = 0; i < demo.latents.size(); ++i) {
    if (!shared.count(demo.labels[i])) continue;
    demo_means.push_back(demo.latents[i].colwise().mean());
    demo_labels.push_back(demo.labels[i]);
    for (Eigen::Index k = 0; k < demo.latents[i].rows(); ++k) {
      demo_events.push_back(demo.latents[i].row(k));
      event_labels.push_back(demo.labels[i]);
    }
  }

  int hits = 0, event_hits = 0, events = 0;
  for (std::size_t i = 0; i < robot.latents.size(); ++i) {
    const int truth = robot.labels[i];
    if (!shared.count(truth)) continue;
    const Eigen::RowVectorXd q = robot.latents[i].colwise().mean();
    std::size_t best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < demo_means.size(); ++j) {
      const double s = similarity(q, demo_means[j], metric);
      if (s > best_s) {
        best_s = s;
        best = j;
      }
    }
    const int pred = demo_labels[best];
    r.confusion(index[truth], index[pred]) += 1;
    hits += pred == truth;
    ++r.count;
    for (Eigen::Index k = 0; k < robot.latents[i].rows(); ++k) {
      const Eigen::RowVectorXd e = robot.latents[i].row(k);
      std::size_t b = 0;
      double bs = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < demo_events.size(); ++j) {
        const double s = similarity(e, demo_events[j], metric);
        if (s > bs) {
          bs = s;
          b = j;
        }
      }
      event_hits += event_labels[b] == truth;
      ++events;
    }
  }
  r.accuracy = static_cast<double>(hits) / r.count;
  r.per_event_accuracy = static_cast<double>(event_hits) / events;
  return r;
}

ShuffledControl shuffled_control(const LabeledLatents& demo, const LabeledLatents& robot,
                                 Similarity metric, std::uint64_t seed, int permutations) {
  if (permutations < 1) throw InvalidInput("shuffled_control: permutations must be >= 1");
  std::mt19937_64 rng(seed);
  ShuffledControl c;
  LabeledLatents shuffled = demo;
  for (int p = 0; p < permutations; ++p) {
    shuffled.labels = demo.labels;
    std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), rng);
    const AnalogyResult r = analogy_retrieval(shuffled, robot, metric);
    c.accuracies.push_back(r.accuracy);
    c.chance = r.chance;
    c.binomial_stderr = std::sqrt(r.chance * (1.0 - r.chance) / r.count);
  }
  c.mean_accuracy = mean(c.accuracies);
  return c;
}

void write_analogies_csv(const AnalogyResult& result, const ShuffledControl& control,
                         const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# protocol: cross-domain nearest-neighbour motif retrieval on per-trajectory mean "
         "event vectors\n";
  out << "metric,value\n";
  out << "accuracy," << result.accuracy << '\n';
  out << "per_event_accuracy," << result.per_event_accuracy << '\n';
  out << "chance," << result.chance << '\n';
  out << "count," << result.count << '\n';
  out << "shuffled_accuracy," << control.mean_accuracy << '\n';
  out << "shuffled_binomial_stderr," << control.binomial_stderr << '\n';
  out << "truth,prediction,count\n";
  for (std::size_t i = 0; i < result.motifs.size(); ++i) {
    for (std::size_t j = 0; j < result.motifs.size(); ++j) {
      out << synthworld::motif_name(result.motifs[i]) << ','
          << synthworld::motif_name(result.motifs[j]) << ','
          << result.confusion(static_cast<int>(i), static_cast<int>(j)) << '\n';
    }
  }
}

// ----- skill generation -----

GeneratedSkill generate_skill(const homomorphism::AdapterParams& adapters,
                              const backbone::BackboneParams& backbone,
                              const backbone::EventLatents& z, const synthworld::EnvState& s0,
                              int steps, const synthworld::EnvParams& env) {
  if (steps < 1) throw InvalidInput("generate_skill: steps must be >= 1");
  GeneratedSkill g;
  g.actions = homomorphism::actions_from_latents(adapters, backbone, z, steps);
  for (Eigen::Index t = 0; t < g.actions.rows(); ++t) {
    if (!g.actions.row(t).allFinite()) {
      g.truncated = true;
      g.actions.conservativeResize(t, Eigen::NoChange);
      break;
    }
  }
  g.actions = g.actions.cwiseMax(-1.0).cwiseMin(1.0);
  g.states.resize(g.actions.rows() + 1, synthworld::kStateDim);
  synthworld::EnvState s = s0;
  g.states.row(0) = s.to_vector().transpose();
  for (Eigen::Index t = 0; t < g.actions.rows(); ++t) {
    s = synthworld::step_env(s, g.actions.row(t).transpose(), env).state;
    g.states.row(t + 1) = s.to_vector().transpose();
  }
  return g;
}

backbone::EventLatents perturb_latents(const backbone::EventLatents& z, double sigma,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  backbone::EventLatents out = z;
  for (Eigen::Index i = 0; i < out.z.size(); ++i) out.z.data()[i] += n(rng);
  return out;
}

backbone::EventLatents random_latents(int events, int latent_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  backbone::EventLatents out;
  out.z.resize(events, latent_dim);
  for (Eigen::Index i = 0; i < out.z.size(); ++i) out.z.data()[i] = n(rng);
  return out;
}

double loop_closure(const Matrix& states) {
  if (states.rows() < 2 || states.cols() < 2) return 1.0;
  double length = 0.0;
  for (Eigen::Index t = 1; t < states.rows(); ++t) {
    length += (states.row(t).head(2) - states.row(t - 1).head(2)).norm();
  }
  if (length <= 0.0) return 1.0;
  return (states.row(states.rows() - 1).head(2) - states.row(0).head(2)).norm() / length;
}

// ----- skill quality -----

SequenceScaler SequenceScaler::fit(std::span<const Matrix> corpus) {
  if (corpus.empty()) throw InvalidInput("SequenceScaler: empty corpus");
  const Eigen::Index d = corpus[0].cols();
  Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(d), s2 = Eigen::RowVectorXd::Zero(d);
  double n = 0;
  for (const auto& x : corpus) {
    if (x.cols() != d) throw InvalidInput("SequenceScaler: inconsistent widths");
    s1 += x.colwise().sum();
    s2 += x.cwiseAbs2().colwise().sum();
    n += static_cast<double>(x.rows());
  }
  SequenceScaler s;
  s.mean = s1 / n;
  s.std = (s2 / n - s.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  return s;
}

Matrix SequenceScaler::apply(const Matrix& x) const {
  Matrix out = x.rowwise() - mean;
  return out.array().rowwise() / std.array();
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw InvalidInput("quantile of an empty set");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

QualityStats skill_quality(std::span<const Matrix> skills, std::span<const Matrix> corpus,
                           double gamma, const SequenceScaler& scaler) {
  if (corpus.empty()) throw InvalidInput("skill_quality: empty corpus");
  if (skills.empty()) throw InvalidInput("skill_quality: no skills");
  std::vector<Matrix> scaled;
  scaled.reserve(corpus.size());
  for (const auto& c : corpus) scaled.push_back(scaler.apply(c));
  QualityStats q;
  for (const auto& s : skills) {
    if (s.rows() < 1) throw InvalidInput("skill_quality: empty skill");
    const Matrix x = scaler.apply(s);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : scaled) {
      const auto cost = softdtw::pairwise_cost(x, c, softdtw::Metric::kEuclidean);
      best = std::min(best, softdtw::softdtw_value(cost, gamma));
    }
    q.distances.push_back(best);
  }
  q.median = quantile(q.distances, 0.5);
  q.q1 = quantile(q.distances, 0.25);
  q.q3 = quantile(q.distances, 0.75);
  return q;
}

// ----- 2-D embedding -----

double silhouette_score(const Matrix& points, std::span<const int> labels) {
  const Eigen::Index n = points.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw InvalidInput("silhouette_score: label count mismatch");
  }
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> by_label;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      auto& e = by_label[labels[j]];
      e.first += (points.row(i) - points.row(j)).norm();
      e.second += 1;
    }
    const auto own = by_label.find(labels[i]);
    if (own == by_label.end() || own->second.second == 0) continue;  // singleton cluster: 0
    const double a = own->second.first / own->second.second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, e] : by_label) {
      if (l != labels[i]) b = std::min(b, e.first / e.second);
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

Embedding2d embed_2d(const Matrix& latents, std::vector<std::string> tags,
                     std::vector<int> labels) {
  const Eigen::Index n = latents.rows();
  if (n < 3) throw InvalidInput("embed_2d: need at least 3 latents");
  if (static_cast<std::size_t>(n) != tags.size()) throw InvalidInput("embed_2d: tag count mismatch");
  if (!labels.empty() && labels.size() != tags.size()) {
    throw InvalidInput("embed_2d: label count mismatch");
  }
  Embedding2d e;
  e.tags = std::move(tags);
  e.labels = std::move(labels);
  e.coords = Matrix::Zero(n, 2);
  const Matrix centered = latents.rowwise() - latents.colwise().mean();
  if (centered.cwiseAbs().maxCoeff() <= 1e-12) {
    e.degenerate = true;
    return e;
  }
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Eigen::Index d = cov.rows();
  for (int k = 0; k < 2 && k < d; ++k) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    e.coords.col(k) = centered * axis;
  }
  if (!e.labels.empty()) e.silhouette = silhouette_score(e.coords, e.labels);
  return e;
}

void write_embedding_csv(const Embedding2d& e, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# degenerate=" << (e.degenerate ? 1 : 0) << " silhouette=" << e.silhouette << '\n';
  out << "x,y,source,motif\n";
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    out << e.coords(i, 0) << ',' << e.coords(i, 1) << ',' << e.tags[static_cast<std::size_t>(i)]
        << ',';
    if (!e.labels.empty()) out << synthworld::motif_name(e.labels[static_cast<std::size_t>(i)]);
    out << '\n';
  }
}

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return 20.0 + 360.0 * (x - x0) / std::max(x1 - x0, 1e-12); }
  double py(double y) const { return 380.0 - 360.0 * (y - y0) / std::max(y1 - y0, 1e-12); }
};

Frame frame_of(const Matrix& xy) {
  return {xy.col(0).minCoeff(), xy.col(0).maxCoeff(), xy.col(1).minCoeff(), xy.col(1).maxCoeff()};
}

}  // namespace

void write_embedding_svg(const Embedding2d& e, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\">\n"
      << "<rect width=\"400\" height=\"400\" fill=\"white\"/>\n";
  const Frame f = frame_of(e.coords);
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const char* color = kPalette[(e.labels.empty() ? 0 : e.labels[k]) % 8];
    const double x = f.px(e.coords(i, 0)), y = f.py(e.coords(i, 1));
    if (e.tags[k] == "video") {
      out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    } else {
      out << "<rect x=\"" << x - 4 << "\" y=\"" << y - 4
          << "\" width=\"8\" height=\"8\" fill=\"none\" stroke=\"" << color << "\"/>\n";
    }
  }
  out << "</svg>\n";
}

void write_path_svg(const Matrix& states, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\">\n"
      << "<rect width=\"400\" height=\"400\" fill=\"white\"/>\n<polyline fill=\"none\" "
         "stroke=\"#1f77b4\" points=\"";
  const Frame f{-1.0, 1.0, -1.0, 1.0};
  for (Eigen::Index t = 0; t < states.rows(); ++t) {
    out << f.px(states(t, 0)) << ',' << f.py(states(t, 1)) << ' ';
  }
  out << "\"/>\n</svg>\n";
}

void write_matrix_csv(const Matrix& m, std::span<const std::string> header,
                      const std::filesystem::path& path) {
  if (!header.empty() && static_cast<Eigen::Index>(header.size()) != m.cols()) {
    throw InvalidInput("write_matrix_csv: header width mismatch");
  }
  auto out = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  if (!header.empty()) out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

}  // namespace evskill::evalkit
