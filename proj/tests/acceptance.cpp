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

// Acceptance run: one PASS/FAIL line per criterion. Runs the desk pipeline
// at seed 0 (all stages) and seeds 1..N-1 (through gen-skills), plus a
// reduced pipeline for the reproducibility check.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evskill/backbone.hpp"
#include "evskill/cli/config.hpp"
#include "evskill/cli/pipeline.hpp"
#include "evskill/diffcore/checkpoint.hpp"
#include "evskill/dynamics.hpp"
#include "evskill/evalkit.hpp"
#include "evskill/homomorphism.hpp"
#include "evskill/softdtw.hpp"
#include "evskill/synthworld.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
namespace bb = evskill::backbone;
namespace cli = evskill::cli;
namespace dy = evskill::dynamics;
namespace ek = evskill::evalkit;
namespace hm = evskill::homomorphism;
namespace sd = evskill::softdtw;
namespace sw = evskill::synthworld;
using oracle::Mat;

namespace {

// Pinned tolerances and limits.
constexpr double kEnumTol = 1e-3;
constexpr double kEnumGamma = 1e-6;
constexpr double kEnumSeconds = 10.0;
constexpr double kGradRelTol = 1e-3;
constexpr double kGradFloor = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradCoords = 50;
constexpr double kGradSeconds = 120.0;
constexpr double kBoundSlack = 1e-9;
constexpr double kLossRatio = 0.5;
constexpr double kStageSeconds = 15 * 60.0;
constexpr double kDynamicsSeconds = 45 * 60.0;
constexpr int kRatioEpochs = 10;
constexpr double kEnsembleTol = 1e-9;
constexpr double kAnalogyFactor = 2.0;
constexpr double kControlStderrs = 3.0;
constexpr double kQualityRatio = 0.8;
constexpr double kSelfMatchTol = 1e-4;
constexpr double kReproTol = 1e-9;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Line {
  int id;
  bool pass;
  std::string text;
};
std::vector<Line> g_lines;

void report(int id, bool pass, const std::string& text) {
  g_lines.push_back({id, pass, text});
  std::cout << (pass ? "PASS" : "FAIL") << "  C" << id << "  " << text << std::endl;
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

double last_total(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line, last;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  const auto a = last.find(',');
  const auto b = last.find(',', a + 1);
  return std::stod(last.substr(a + 1, b - a - 1));
}

std::vector<std::vector<double>> tensor_bytes(const bb::BackboneParams& p) {
  std::vector<std::vector<double>> out;
  for (const auto* ps : p.param_sets()) {
    for (const auto& prm : *ps) out.emplace_back(prm.value.data(), prm.value.data() + prm.value.size());
  }
  return out;
}

// Central differences of `objective` on one coordinate per tensor, cycling
// until `want` coordinates are drawn. Returns (max rel error, count).
std::pair<double, int> fd_sweep(std::vector<evskill::diffcore::ParamSet*> sets,
                                const std::function<double()>& objective, int want, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<evskill::diffcore::Param*> tensors;
  for (auto* ps : sets) {
    for (auto& prm : *ps) tensors.push_back(&prm);
  }
  double worst = 0.0;
  int count = 0;
  for (std::size_t i = 0; count < want; i = (i + 1) % tensors.size()) {
    auto& prm = *tensors[i];
    std::uniform_int_distribution<Eigen::Index> pick(0, prm.value.size() - 1);
    const Eigen::Index k = pick(rng);
    const double x0 = prm.value.data()[k];
    prm.value.data()[k] = x0 + kGradStep;
    const double up = objective();
    prm.value.data()[k] = x0 - kGradStep;
    const double down = objective();
    prm.value.data()[k] = x0;
    const double num = (up - down) / (2 * kGradStep);
    worst = std::max(worst, oracle::rel_error(prm.grad.data()[k], num, kGradFloor));
    ++count;
  }
  return {worst, count};
}

void criterion_enumeration() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> len(1, 6);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Mat x = oracle::random_matrix(len(rng), 3, rng);
    const Mat y = oracle::random_matrix(len(rng), 3, rng);
    const double v = sd::softdtw_value(sd::pairwise_cost(x, y), kEnumGamma);
    worst = std::max(worst, std::abs(v - oracle::brute_softdtw(oracle::sq_euclid_cost(x, y), kEnumGamma)));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= kEnumTol && secs < kEnumSeconds,
         "soft-DTW vs path enumeration, 200 pairs: max |err| " + fmt(worst) + " (tol " + fmt(kEnumTol) +
             "), " + fmt(secs, 3) + " s (limit " + fmt(kEnumSeconds) + " s)");
}

void criterion_gradients(const cli::RunConfig& cfg) {
  const auto t0 = Clock::now();
  // Soft-DTW cost gradient.
  std::mt19937_64 rng(202);
  double sdtw_worst = 0.0;
  int sdtw_count = 0;
  std::uniform_int_distribution<int> len(2, 6);
  while (sdtw_count < kGradCoords) {
    const Mat c = oracle::random_matrix(len(rng), len(rng), rng).cwiseAbs();
    const double gamma = sdtw_count % 2 ? 0.1 : 1.0;
    sd::CostMatrix cm;
    cm.entries = c;
    const auto g = sd::softdtw_grad(cm, gamma);
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      const double num = oracle::central_diff(
          [&](const Mat& m) {
            sd::CostMatrix q;
            q.entries = m;
            return sd::softdtw_value(q, gamma);
          },
          c, k, kGradStep);
      sdtw_worst = std::max(sdtw_worst, oracle::rel_error(g.cost_grad.data()[k], num, kGradFloor));
      ++sdtw_count;
    }
  }
  // Pretrain loss at initialisation, desk shapes.
  const auto demos = sw::gen_demo_corpus(cfg.demo, 303);
  const std::vector<sw::DemoTrajectory> dbatch(demos.begin(), demos.begin() + 2);
  auto p = bb::init_backbone(cfg.backbone, 304);
  for (auto* ps : p.param_sets()) ps->zero_grad();
  bb::pretrain_loss(p, dbatch, cfg.backbone.alpha, cfg.backbone.beta, true);
  const auto [pre_worst, pre_count] = fd_sweep(
      p.param_sets(), [&] { return bb::pretrain_loss(p, dbatch, cfg.backbone.alpha, cfg.backbone.beta).total; },
      kGradCoords, 305);
  // Cycle loss at initialisation, adapters only.
  auto frozen = bb::init_backbone(cfg.backbone, 306);
  frozen.set_frozen(true);
  auto ad = hm::init_adapters(cfg.adapters, frozen.config, 307);
  const auto robots = sw::gen_robot_corpus(cfg.robot, 308);
  const std::vector<sw::RobotTrajectory> rbatch(robots.begin(), robots.begin() + 2);
  for (auto* ps : ad.param_sets()) ps->zero_grad();
  hm::cycle_loss(ad, frozen, rbatch, true);
  const double w = ad.config.aux_weight;
  const auto [cyc_worst, cyc_count] = fd_sweep(
      ad.param_sets(),
      [&] {
        const auto l = hm::cycle_loss(ad, frozen, rbatch);
        return l.total + w * l.align_term;
      },
      kGradCoords, 309);
  const double secs = seconds_since(t0);
  const bool pass = sdtw_worst < kGradRelTol && pre_worst < kGradRelTol && cyc_worst < kGradRelTol &&
                    sdtw_count >= kGradCoords && pre_count >= kGradCoords && cyc_count >= kGradCoords &&
                    secs < kGradSeconds;
  report(2, pass,
         "gradients vs central differences, max rel err: soft-DTW " + fmt(sdtw_worst) + " (" +
             std::to_string(sdtw_count) + " coords), pretrain " + fmt(pre_worst) + " (" +
             std::to_string(pre_count) + "), cycle " + fmt(cyc_worst) + " (" + std::to_string(cyc_count) +
             "); tol " + fmt(kGradRelTol) + ", " + fmt(secs, 3) + " s (limit " + fmt(kGradSeconds) + " s)");
}

void criterion_bounds() {
  std::mt19937_64 rng(404);
  int checked = 0, violations = 0;
  for (double gamma : {0.01, 0.1, 1.0}) {
    for (int n = 1; n <= 5; ++n) {
      for (int m = 1; m <= 5; ++m) {
        for (int r = 0; r < 10; ++r) {
          const Mat c = oracle::random_matrix(n, m, rng).cwiseAbs();
          sd::CostMatrix cm;
          cm.entries = c;
          const double v = sd::softdtw_value(cm, gamma);
          const double dtw = oracle::brute_dtw(c);
          const double lower = dtw - gamma * std::log(oracle::delannoy(n, m));
          if (v > dtw + kBoundSlack || v < lower - kBoundSlack) ++violations;
          ++checked;
        }
      }
    }
  }
  report(3, violations == 0,
         "DTW - gamma log P <= soft-DTW <= DTW on all length pairs <= 5, gamma in {0.01, 0.1, 1}: " +
             std::to_string(violations) + " violations in " + std::to_string(checked) + " cases");
}

void criterion_frozen(const cli::RunConfig& cfg) {
  auto b = bb::from_checkpoint(evskill::diffcore::read_checkpoint(cfg.out_dir / "checkpoints/backbone.ckpt"));
  b.set_frozen(true);
  const auto before = tensor_bytes(b);
  const auto robots = sw::read_robot_corpus(cfg.out_dir / "data/robot.evc").items;
  const std::vector<sw::RobotTrajectory> subset(robots.begin(), robots.begin() + 16);
  auto ac = cfg.adapters;
  ac.epochs = 2;
  hm::distill(subset, b, ac, 505);
  const auto after = tensor_bytes(b);
  bool same = before.size() == after.size();
  for (std::size_t i = 0; same && i < before.size(); ++i) {
    same = before[i].size() == after[i].size() &&
           std::memcmp(before[i].data(), after[i].data(), before[i].size() * sizeof(double)) == 0;
  }
  auto ad = hm::init_adapters(cfg.adapters, b.config, 506);
  for (auto* ps : b.param_sets()) {
    for (auto& prm : *ps) prm.grad.setZero(prm.value.rows(), prm.value.cols());
  }
  hm::cycle_loss(ad, b, std::span(subset).first(4), true);
  bool zero = true;
  for (const auto* ps : b.param_sets()) {
    for (const auto& prm : *ps) zero = zero && prm.grad.isZero(0.0);
  }
  report(4, same && zero,
         std::string("backbone tensors bitwise unchanged by distill: ") + (same ? "yes" : "no") +
             "; cycle-loss gradient on backbone identically zero: " + (zero ? "yes" : "no"));
}

void criterion_losses(const cli::RunConfig& cfg, const std::map<std::string, double>& secs) {
  const auto bh = evskill::diffcore::read_checkpoint(cfg.out_dir / "checkpoints/backbone.ckpt").header;
  const auto ah = evskill::diffcore::read_checkpoint(
                      cfg.out_dir / ("checkpoints/adapters_seed" + std::to_string(cfg.seed) + ".ckpt"))
                      .header;
  const double p0 = bh.at("initial_loss"), p1 = last_total(cfg.out_dir / "curves/pretrain.csv");
  const double d0 = ah.at("initial_loss"),
               d1 = last_total(cfg.out_dir / ("curves/distill_seed" + std::to_string(cfg.seed) + ".csv"));
  const double ps = secs.at("pretrain"), ds = secs.at("distill");
  // The distill stage trains one adapter set per dynamics seed; the limit
  // applies to one set.
  const double ds_one = ds / cfg.dynamics.seeds;
  const bool pass = p1 < kLossRatio * p0 && d1 < kLossRatio * d0 && ps < kStageSeconds && ds_one < kStageSeconds;
  report(5, pass,
         "desk fixture: pretrain " + fmt(p0) + " -> " + fmt(p1) + " (ratio " + fmt(p1 / p0, 3) + ", " +
             fmt(ps, 4) + " s); distill " + fmt(d0) + " -> " + fmt(d1) + " (ratio " + fmt(d1 / d0, 3) + ", " +
             fmt(ds_one, 4) + " s per seed); limits ratio " + fmt(kLossRatio) + ", " + fmt(kStageSeconds) + " s");
}

void criterion_grid(const cli::RunConfig& cfg, double secs) {
  const auto j = read_json(cfg.out_dir / "report.json");
  std::map<std::tuple<std::string, int, std::string>, nlohmann::json> rows;
  for (const auto& r : j.at("rows")) rows[{r.at("method"), r.at("epochs"), r.at("horizon")}] = r;
  bool complete = true;
  for (const char* m : {"PNN", "DNN", "DE", "PE", "V2S"}) {
    for (int e : {1, 5, 10}) {
      for (const char* h : {"2", "5", "full"}) {
        const auto it = rows.find({m, e, h});
        complete = complete && it != rows.end() && it->second.at("per_seed").size() == 3 &&
                   it->second.at("rmse_stderr").get<double>() >= 0.0;
      }
    }
  }
  if (!complete) {
    report(6, false, "dynamics grid incomplete: expected 5 methods x 3 epochs x 3 horizons over 3 seeds");
    return;
  }
  auto mean = [&](const char* m, int e, const char* h) { return rows.at({m, e, h}).at("rmse_mean").get<double>(); };
  bool decreasing = true;
  std::string v2s;
  for (const char* h : {"2", "5", "full"}) {
    decreasing = decreasing && mean("V2S", 10, h) < mean("V2S", 1, h);
    v2s += std::string(" ") + h + ":" + fmt(mean("V2S", 1, h), 3) + "->" + fmt(mean("V2S", 10, h), 3);
  }
  int wins = 0;
  std::string ratios;
  for (int s = 0; s < 3; ++s) {
    auto at = [&](const char* m, const char* h) {
      return rows.at({m, kRatioEpochs, h}).at("per_seed")[s].get<double>();
    };
    const double rv = at("V2S", "full") / at("V2S", "2");
    const double rd = at("DNN", "full") / at("DNN", "2");
    wins += rv < rd;
    ratios += " " + fmt(rv, 3) + "/" + fmt(rd, 3);
  }
  report(6, decreasing && wins >= 2 && secs < kDynamicsSeconds,
         "dynamics grid 5x3x3 over 3 seeds; V2S RMSE 1->10 epochs" + v2s +
             "; full/2-step ratio V2S/DNN at 10 epochs per seed" + ratios + " (V2S lower in " +
             std::to_string(wins) + " of 3, need 2); " + fmt(secs, 4) + " s (limit " + fmt(kDynamicsSeconds) + " s)");
}

void criterion_ensemble(const cli::RunConfig& cfg) {
  const auto robots = sw::read_robot_corpus(cfg.out_dir / "data/robot.evc").items;
  const std::vector<sw::RobotTrajectory> subset(robots.begin(), robots.begin() + 20);
  double worst = 0.0;
  for (auto kind : {dy::ModelKind::kDe, dy::ModelKind::kPe}) {
    dy::BaselineSpec spec;
    spec.kind = kind;
    spec.ensemble_size = cfg.dynamics.ensemble_size;
    spec.hidden = cfg.dynamics.hidden;
    spec.batch = cfg.dynamics.batch;
    const auto m = dy::train_baseline(spec, subset, 2, 707).model;
    for (const auto& t : subset) {
      for (Eigen::Index i = 0; i < t.a.rows(); i += 7) {
        const Eigen::VectorXd s = t.s.row(i).transpose(), a = t.a.row(i).transpose();
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(s.size());
        for (const auto& member : m.members) {
          dy::BaselineModel single = m;
          single.spec.kind = kind == dy::ModelKind::kDe ? dy::ModelKind::kDnn : dy::ModelKind::kPnn;
          single.spec.ensemble_size = 1;
          single.members = {member};
          sum += dy::predict_step(single, s, a).mean;
        }
        const Eigen::VectorXd expect = sum / static_cast<double>(m.members.size());
        worst = std::max(worst, (dy::predict_step(m, s, a).mean - expect).cwiseAbs().maxCoeff());
      }
    }
  }
  report(7, worst <= kEnsembleTol,
         "PE/DE mean vs arithmetic mean of member predictions: max |diff| " + fmt(worst) + " (tol " +
             fmt(kEnsembleTol) + ")");
}

void criterion_analogy(const std::vector<cli::RunConfig>& runs) {
  std::vector<double> acc;
  std::string per, ctrl;
  double chance = 0.0;
  bool control_ok = true;
  for (const auto& cfg : runs) {
    const auto j = read_json(cfg.out_dir / "analogies.json");
    acc.push_back(j.at("accuracy"));
    chance = j.at("chance");
    const double sm = j.at("shuffled").at("mean_accuracy"), se = j.at("shuffled").at("binomial_stderr");
    control_ok = control_ok && std::abs(sm - chance) <= kControlStderrs * se;
    per += " " + fmt(acc.back(), 3);
    ctrl += " " + fmt(sm, 3) + "+-" + fmt(se, 2);
  }
  const double m = ek::mean(acc);
  report(8, m >= kAnalogyFactor * chance && control_ok,
         "analogy retrieval mean accuracy " + fmt(m, 3) + " over " + std::to_string(runs.size()) +
             " seeds (per seed" + per + "), need >= " + fmt(kAnalogyFactor * chance, 3) + " (2 x chance " +
             fmt(chance, 3) + "); shuffled control" + ctrl + " within 3 stderr of chance: " +
             (control_ok ? "yes" : "no"));
}

void criterion_quality(const std::vector<cli::RunConfig>& runs) {
  std::vector<double> ratios;
  std::string per;
  for (const auto& cfg : runs) {
    const auto j = read_json(cfg.out_dir / "skills/quality.json");
    ratios.push_back(j.at("actions").at("median_ratio"));
    per += " " + fmt(ratios.back(), 3);
  }
  const double m = ek::mean(ratios);
  // Self-match: corpus trajectories scored against their own corpus.
  const auto robots = sw::read_robot_corpus(runs.front().out_dir / "data/robot.evc").items;
  std::vector<Mat> corpus;
  for (const auto& t : robots) corpus.push_back(t.a);
  const auto scaler = ek::SequenceScaler::fit(corpus);
  const std::vector<Mat> probe(corpus.begin(), corpus.begin() + 5);
  const auto q = ek::skill_quality(probe, corpus, kEnumGamma, scaler);
  double self = 0.0;
  for (double d : q.distances) self = std::max(self, std::abs(d));
  report(9, m <= kQualityRatio && self <= kSelfMatchTol,
         "event/random median min-soft-DTW ratio (actions) mean " + fmt(m, 3) + " over " +
             std::to_string(runs.size()) + " seeds (per seed" + per + "), need <= " + fmt(kQualityRatio) +
             "; self-match at gamma 1e-6 max |d| " + fmt(q.distances.empty() ? -1 : self) + " (tol " +
             fmt(kSelfMatchTol) + ")");
}

void criterion_labels(const cli::RunConfig& cfg) {
  bool ok = true;
  std::string why;
  auto contains_motif_name = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    for (int m = 0; m < sw::kMotifCount; ++m) {
      if (bytes.find(sw::motif_name(m)) != std::string::npos) return true;
    }
    return false;
  };
  for (const char* f : {"data/demo.evc", "data/robot.evc"}) {
    const fs::path p = cfg.out_dir / f;
    if (contains_motif_name(p)) ok = false, why += std::string(" ") + f + " names motifs;";
    if (!contains_motif_name(sw::labels_path(p))) ok = false, why += std::string(" ") + f + " sidecar lacks labels;";
  }
  for (const auto& t : sw::read_demo_corpus(cfg.out_dir / "data/demo.evc").items) {
    if (!t.hidden_motifs.empty()) ok = false, why += " demo loader returned labels;";
  }
  for (const auto& t : sw::read_robot_corpus(cfg.out_dir / "data/robot.evc").items) {
    if (!t.hidden_motifs.empty()) ok = false, why += " robot loader returned labels;";
  }
  report(10, ok,
         ok ? "training corpora carry no labels; loaders return none; labels only in sidecars"
            : "label leak:" + why);
}

// Same structure, numbers within tol, strings equal.
bool json_close(const nlohmann::json& a, const nlohmann::json& b, double tol) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>()) <= tol;
  if (a.type() != b.type() || a.size() != b.size()) return false;
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !json_close(it.value(), b.at(it.key()), tol)) return false;
    }
    return true;
  }
  if (a.is_array()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!json_close(a[i], b[i], tol)) return false;
    }
    return true;
  }
  return a == b;
}

const char* kReduced = R"(preset = desk
[synthworld]
demo_count = 24
robot_count = 24
[backbone]
epochs = 3
[homomorphism]
epochs = 3
[dynamics]
epochs = 1, 2
seeds = 2
ensemble_size = 2
[evalkit]
eval_count = 6
probes_per_motif = 3
shuffles = 5
)";

void criterion_repro(const fs::path& root) {
  auto make = [&](const std::string& name, std::uint64_t seed) {
    auto a = cli::parse_config_text(kReduced);
    a.emplace_back("out_dir", (root / name).string());
    a.emplace_back("seed", std::to_string(seed));
    auto cfg = cli::build_config(a);
    fs::remove_all(cfg.out_dir);
    cli::run_pipeline(cfg);
    return cfg;
  };
  const auto a = make("repro_a", 11), b = make("repro_b", 11), c = make("repro_c", 12);
  const char* files[] = {"report.json", "analogies.json", "skills/quality.json", "summary.json"};
  bool same = true, differs = false;
  for (const char* f : files) {
    const auto ja = read_json(a.out_dir / f), jb = read_json(b.out_dir / f), jc = read_json(c.out_dir / f);
    same = same && json_close(ja, jb, kReproTol);
    differs = differs || !json_close(ja, jc, kReproTol);
  }
  report(11, same && differs,
         std::string("reduced pipeline, same (config, seed): reports equal within 1e-9: ") + (same ? "yes" : "no") +
             "; different seed gives different reports: " + (differs ? "yes" : "no"));
}

std::map<std::string, double> run_timed(const cli::RunConfig& cfg, const std::vector<std::string>& stages,
                                        bool resume) {
  std::map<std::string, double> secs;
  cli::PipelineOptions opts;
  opts.resume = resume;
  opts.log = &std::cerr;
  for (const auto& s : stages) {
    const auto t0 = Clock::now();
    cli::run_stage(s, cfg, opts);
    secs[s] = seconds_since(t0);
    std::cerr << "[acceptance] seed " << cfg.seed << " " << s << " " << secs[s] << " s\n";
  }
  return secs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evskill acceptance run"};
  fs::path out = "acceptance_run";
  int seeds = 3;
  bool resume = false;
  app.add_option("--out", out, "working directory for pipeline runs");
  app.add_option("--seeds", seeds, "pipeline seeds for the analogy and skill-quality criteria")
      ->check(CLI::Range(1, 10));
  app.add_flag("--resume", resume, "reuse up-to-date stages (timings then reflect only reruns)");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  std::vector<cli::RunConfig> runs;
  for (int s = 0; s < seeds; ++s) {
    auto cfg = cli::build_config({{"seed", std::to_string(s)}, {"out_dir", (out / ("desk_seed" + std::to_string(s))).string()}});
    runs.push_back(cfg);
  }
  const cli::RunConfig& desk = runs.front();

  criterion_enumeration();
  criterion_gradients(desk);
  criterion_bounds();

  const auto secs = run_timed(desk, cli::stage_names(), resume);
  for (std::size_t i = 1; i < runs.size(); ++i) {
    run_timed(runs[i], {"gen-data", "pretrain", "distill", "analogies", "gen-skills"}, resume);
  }

  criterion_frozen(desk);
  criterion_losses(desk, secs);
  criterion_grid(desk, secs.at("eval-dynamics"));
  criterion_ensemble(desk);
  criterion_analogy(runs);
  criterion_quality(runs);
  criterion_labels(desk);
  criterion_repro(out);

  int passed = 0;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& l : g_lines) {
    passed += l.pass;
    summary.push_back({{"criterion", l.id}, {"pass", l.pass}, {"detail", l.text}});
  }
  std::cout << passed << " of " << g_lines.size() << " criteria pass (" << fmt(seconds_since(t0), 5)
            << " s)" << std::endl;
  std::ofstream(out / "acceptance.json") << summary.dump(2) << '\n';
  return passed == static_cast<int>(g_lines.size()) ? 0 : 1;
}
