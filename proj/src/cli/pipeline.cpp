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

#include "evskill/cli/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "evskill/diffcore/checkpoint.hpp"
#include "evskill/errors.hpp"

#ifndef EVSKILL_REVISION
#define EVSKILL_REVISION "unknown"
#endif

namespace evskill::cli {

namespace fs = std::filesystem;

namespace {

using synthworld::DemoTrajectory;
using synthworld::RobotTrajectory;
using diffcore::Matrix;

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Relative artifact paths.
const fs::path kDemo = "data/demo.evc";
const fs::path kRobot = "data/robot.evc";
const fs::path kRobotEval = "data/robot_eval.evc";
const fs::path kDemoProbes = "data/demo_probes.evc";
const fs::path kRobotProbes = "data/robot_probes.evc";
const fs::path kBackbone = "checkpoints/backbone.ckpt";
const fs::path kPretrainCurve = "curves/pretrain.csv";
const fs::path kReportCsv = "report.csv";
const fs::path kReportJson = "report.json";
const fs::path kAnalogiesCsv = "analogies.csv";
const fs::path kAnalogiesJson = "analogies.json";
const fs::path kSkillsDir = "skills";
const fs::path kQuality = "skills/quality.json";
const fs::path kEmbeddingCsv = "embedding.csv";
const fs::path kEmbeddingSvg = "embedding.svg";
const fs::path kSummary = "summary.json";

fs::path adapters_path(std::uint64_t seed, int epoch = 0) {
  std::string name = "checkpoints/adapters_seed" + std::to_string(seed);
  if (epoch > 0) name += "_epoch" + std::to_string(epoch);
  return name + ".ckpt";
}

fs::path distill_curve_path(std::uint64_t seed) {
  return "curves/distill_seed" + std::to_string(seed) + ".csv";
}

std::vector<std::uint64_t> dynamics_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < cfg.dynamics.seeds; ++i) s.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  return s;
}

std::vector<int> shared_motifs(const RunConfig& cfg) {
  std::vector<int> out;
  for (int m : cfg.robot.motifs) {
    if (std::find(cfg.demo.motifs.begin(), cfg.demo.motifs.end(), m) != cfg.demo.motifs.end()) {
      out.push_back(m);
    }
  }
  return out;
}

class Stage {
 public:
  Stage(std::string name, const RunConfig& cfg, const PipelineOptions& opts)
      : name_(std::move(name)), cfg_(cfg), opts_(opts), start_(now_utc()) {}

  fs::path in(const fs::path& rel, const std::string& producer) {
    const fs::path p = cfg_.out_dir / rel;
    if (!fs::exists(p)) throw MissingDependency(producer, "stage '" + name_ + "' needs " + p.string());
    inputs_.push_back(rel.generic_string());
    return p;
  }

  fs::path out(const fs::path& rel) {
    const fs::path p = cfg_.out_dir / rel;
    fs::create_directories(p.parent_path());
    outputs_.push_back(rel);
    return p;
  }

  std::ostream& log() {
    static std::ostream null(nullptr);
    std::ostream& os = opts_.log ? *opts_.log : null;
    os << "[" << name_ << "] ";
    return os;
  }

  void finish() {
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& rel : outputs_) {
      const fs::path p = cfg_.out_dir / rel;
      outs.push_back({{"path", rel.generic_string()},
                      {"bytes", fs::file_size(p)},
                      {"fnv1a", hex64(file_hash(p))}});
    }
    nlohmann::json m = {{"command", name_},
                        {"config_hash", hex64(cfg_.hash())},
                        {"seed", cfg_.seed},
                        {"start", start_},
                        {"end", now_utc()},
                        {"revision", revision()},
                        {"inputs", inputs_},
                        {"outputs", outs},
                        {"config", cfg_.to_json()}};
    const fs::path path = manifest_path(cfg_, name_);
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream o(tmp);
      if (!o) throw InvalidInput("cannot write " + tmp.string());
      o << m.dump(2) << '\n';
    }
    fs::rename(tmp, path);
  }

 private:
  std::string name_;
  const RunConfig& cfg_;
  const PipelineOptions& opts_;
  std::string start_;
  std::vector<std::string> inputs_;
  std::vector<fs::path> outputs_;
};

backbone::BackboneParams load_backbone(const fs::path& p) {
  auto bb = backbone::from_checkpoint(diffcore::read_checkpoint(p));
  bb.set_frozen(true);
  return bb;
}

homomorphism::AdapterParams load_adapters(const fs::path& p) {
  return homomorphism::from_checkpoint(diffcore::read_checkpoint(p));
}

template <typename T>
std::vector<T> with_labels(std::vector<T> items, const fs::path& corpus) {
  synthworld::attach_labels(items, synthworld::read_labels(corpus));
  return items;
}

int single_label(const std::vector<synthworld::MotifSegment>& segs, const fs::path& corpus) {
  if (segs.size() != 1) throw InvalidInput(corpus.string() + ": probe without a single motif label");
  return segs[0].motif;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidInput("cannot read " + p.string());
  return nlohmann::json::parse(in);
}

void write_json(const nlohmann::json& j, const fs::path& p) {
  std::ofstream o(p);
  if (!o) throw InvalidInput("cannot write " + p.string());
  o << std::setprecision(17) << j.dump(2) << '\n';
}

// ----- stages -----

void stage_gen_data(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("gen-data", cfg, opts);
  const synthworld::CorpusMeta meta{1, cfg.seed, cfg.hash()};
  synthworld::DemoCorpus demo{meta, synthworld::gen_demo_corpus(cfg.demo, derive(cfg.seed, 1))};
  synthworld::RobotCorpus robot{meta, synthworld::gen_robot_corpus(cfg.robot, derive(cfg.seed, 2))};
  synthworld::RobotConfig eval_cfg = cfg.robot;
  eval_cfg.count = cfg.eval.eval_count;
  synthworld::RobotCorpus robot_eval{meta, synthworld::gen_robot_corpus(eval_cfg, derive(cfg.seed, 3))};
  for (const auto& e : robot_eval.items) {
    for (const auto& t : robot.items) {
      if (e.s.rows() == t.s.rows() && e.s == t.s) {
        throw NumericalError("gen-data: an eval trajectory duplicates a training trajectory");
      }
    }
  }
  synthworld::DemoCorpus demo_probes{
      meta, synthworld::gen_demo_probes(cfg.demo, cfg.demo.motifs, cfg.eval.probes_per_motif,
                                        derive(cfg.seed, 4))};
  synthworld::RobotCorpus robot_probes{
      meta, synthworld::gen_robot_probes(cfg.robot, cfg.robot.motifs, cfg.eval.probes_per_motif,
                                         derive(cfg.seed, 5))};
  auto write_demo = [&](const synthworld::DemoCorpus& c, const fs::path& rel) {
    synthworld::write_corpus(c, st.out(rel));
    st.out(synthworld::labels_path(rel));
  };
  auto write_robot = [&](const synthworld::RobotCorpus& c, const fs::path& rel) {
    synthworld::write_corpus(c, st.out(rel));
    st.out(synthworld::labels_path(rel));
  };
  write_demo(demo, kDemo);
  write_robot(robot, kRobot);
  write_robot(robot_eval, kRobotEval);
  write_demo(demo_probes, kDemoProbes);
  write_robot(robot_probes, kRobotProbes);
  st.log() << demo.items.size() << " demos, " << robot.items.size() << " robot, "
           << robot_eval.items.size() << " eval trajectories\n";
  st.finish();
}

void stage_pretrain(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("pretrain", cfg, opts);
  const auto demo = synthworld::read_demo_corpus(st.in(kDemo, "gen-data"));
  auto res = backbone::pretrain(demo.items, cfg.backbone, derive(cfg.seed, 10),
                                [&](const backbone::CurveRow& r) {
                                  st.log() << "epoch " << r.epoch << " loss " << r.total << '\n';
                                });
  st.log() << "initial " << res.initial_loss << " final "
           << (res.curve.empty() ? res.initial_loss : res.curve.back().total) << '\n';
  diffcore::write_checkpoint(
      st.out(kBackbone),
      backbone::to_checkpoint(res.params, cfg.seed,
                              {{"config_hash", hex64(cfg.hash())}, {"initial_loss", res.initial_loss}}));
  backbone::write_curve_csv(st.out(kPretrainCurve), res.curve);
  st.finish();
}

void stage_distill(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("distill", cfg, opts);
  auto bb = load_backbone(st.in(kBackbone, "pretrain"));
  const auto robot = synthworld::read_robot_corpus(st.in(kRobot, "gen-data"));
  for (std::uint64_t s : dynamics_seeds(cfg)) {
    auto res = homomorphism::distill(robot.items, bb, cfg.adapters, derive(s, 20), cfg.dynamics.epochs,
                                     [&](const homomorphism::DistillRow& r) {
                                       st.log() << "seed " << s << " epoch " << r.epoch << " loss "
                                                << r.total << '\n';
                                     });
    const nlohmann::json extra = {{"config_hash", hex64(cfg.hash())},
                                  {"initial_loss", res.initial_loss}};
    diffcore::write_checkpoint(st.out(adapters_path(s)),
                               homomorphism::to_checkpoint(res.adapters, s, extra));
    for (const auto& [epoch, ad] : res.snapshots) {
      nlohmann::json e = extra;
      e["epoch"] = epoch;
      diffcore::write_checkpoint(st.out(adapters_path(s, epoch)), homomorphism::to_checkpoint(ad, s, e));
    }
    homomorphism::write_curve_csv(st.out(distill_curve_path(s)), res.curve);
  }
  st.finish();
}

void stage_eval_dynamics(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("eval-dynamics", cfg, opts);
  const auto train = synthworld::read_robot_corpus(st.in(kRobot, "gen-data"));
  const auto eval = synthworld::read_robot_corpus(st.in(kRobotEval, "gen-data"));
  const auto norm = dynamics::Normalizer::fit(train.items);
  const bool has_v2s = std::find(cfg.dynamics.methods.begin(), cfg.dynamics.methods.end(), "V2S") !=
                       cfg.dynamics.methods.end();
  backbone::BackboneParams bb;
  std::map<std::pair<std::uint64_t, int>, homomorphism::AdapterParams> adapters;
  if (has_v2s) {
    bb = load_backbone(st.in(kBackbone, "pretrain"));
    for (std::uint64_t s : dynamics_seeds(cfg)) {
      for (int e : cfg.dynamics.epochs) {
        adapters.emplace(std::make_pair(s, e), load_adapters(st.in(adapters_path(s, e), "distill")));
      }
    }
  }
  const int max_epochs = *std::max_element(cfg.dynamics.epochs.begin(), cfg.dynamics.epochs.end());
  std::map<std::pair<std::string, std::uint64_t>, dynamics::TrainedBaseline> baselines;
  auto source = [&](const std::string& method, int epochs, std::uint64_t seed) -> dynamics::Predictor {
    const auto kind = dynamics::kind_from_name(method);
    if (kind == dynamics::ModelKind::kV2s) {
      return dynamics::v2s_predictor(adapters.at({seed, epochs}), bb);
    }
    auto it = baselines.find({method, seed});
    if (it == baselines.end()) {
      const dynamics::BaselineSpec spec{kind, cfg.dynamics.ensemble_size, cfg.dynamics.hidden,
                                        cfg.dynamics.batch, cfg.dynamics.lr, cfg.dynamics.var_floor};
      st.log() << "training " << method << " seed " << seed << '\n';
      it = baselines
               .emplace(std::make_pair(method, seed),
                        dynamics::train_baseline(spec, train.items, max_epochs,
                                                 derive(seed, 30 + static_cast<int>(kind)),
                                                 cfg.dynamics.epochs))
               .first;
    }
    return dynamics::baseline_predictor(it->second.snapshots.at(epochs));
  };
  const evalkit::ReportGrid grid{cfg.dynamics.methods, cfg.dynamics.epochs, cfg.dynamics.horizons,
                                 dynamics_seeds(cfg)};
  auto report = evalkit::dynamics_report(grid, source, eval.items, norm);
  report.metadata["config_hash"] = hex64(cfg.hash());
  report.metadata["revision"] = revision();
  report.metadata["seed"] = cfg.seed;
  report.metadata["eval_trajectories"] = eval.items.size();
  report.metadata["space"] = "state normalised with training-split statistics";
  evalkit::write_report_csv(report, st.out(kReportCsv));
  evalkit::write_report_json(report, st.out(kReportJson));
  st.finish();
}

evalkit::LabeledLatents demo_latents(const backbone::BackboneParams& bb,
                                     const std::vector<DemoTrajectory>& probes, const fs::path& src) {
  evalkit::LabeledLatents l;
  for (const auto& t : probes) {
    l.latents.push_back(backbone::encode_video(bb, t.v).z);
    l.labels.push_back(single_label(t.hidden_motifs, src));
  }
  return l;
}

evalkit::LabeledLatents robot_latents(const homomorphism::AdapterParams& ad,
                                      const backbone::BackboneParams& bb,
                                      const std::vector<RobotTrajectory>& probes, const fs::path& src) {
  evalkit::LabeledLatents l;
  for (const auto& t : probes) {
    l.latents.push_back(homomorphism::embed_robot_skills(ad, bb, t.s, t.a).z);
    l.labels.push_back(single_label(t.hidden_motifs, src));
  }
  return l;
}

void stage_analogies(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("analogies", cfg, opts);
  const auto bb = load_backbone(st.in(kBackbone, "pretrain"));
  const auto ad = load_adapters(st.in(adapters_path(cfg.seed), "distill"));
  const fs::path dp = st.in(kDemoProbes, "gen-data");
  const fs::path rp = st.in(kRobotProbes, "gen-data");
  st.in(synthworld::labels_path(kDemoProbes), "gen-data");
  st.in(synthworld::labels_path(kRobotProbes), "gen-data");
  const auto demo = with_labels(synthworld::read_demo_corpus(dp).items, dp);
  const auto robot = with_labels(synthworld::read_robot_corpus(rp).items, rp);
  const auto metric = similarity_from_name(cfg.eval.similarity);
  const auto dl = demo_latents(bb, demo, dp);
  const auto rl = robot_latents(ad, bb, robot, rp);
  const auto result = evalkit::analogy_retrieval(dl, rl, metric);
  const auto control = evalkit::shuffled_control(dl, rl, metric, derive(cfg.seed, 60), cfg.eval.shuffles);
  st.log() << "accuracy " << result.accuracy << " chance " << result.chance << " shuffled "
           << control.mean_accuracy << '\n';
  evalkit::write_analogies_csv(result, control, st.out(kAnalogiesCsv));
  nlohmann::json confusion = nlohmann::json::array();
  for (int i = 0; i < result.confusion.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < result.confusion.cols(); ++j) row.push_back(result.confusion(i, j));
    confusion.push_back(row);
  }
  nlohmann::json motifs = nlohmann::json::array();
  for (int m : result.motifs) motifs.push_back(synthworld::motif_name(m));
  write_json({{"protocol", "cross-domain nearest-neighbour motif retrieval"},
              {"similarity", cfg.eval.similarity},
              {"accuracy", result.accuracy},
              {"per_event_accuracy", result.per_event_accuracy},
              {"chance", result.chance},
              {"count", result.count},
              {"motifs", motifs},
              {"confusion", confusion},
              {"shuffled", {{"mean_accuracy", control.mean_accuracy},
                            {"binomial_stderr", control.binomial_stderr},
                            {"accuracies", control.accuracies}}}},
             st.out(kAnalogiesJson));
  st.finish();
}

nlohmann::json quality_json(const evalkit::QualityStats& q) {
  return {{"median", q.median}, {"q1", q.q1}, {"q3", q.q3}, {"distances", q.distances}};
}

void stage_gen_skills(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("gen-skills", cfg, opts);
  const auto bb = load_backbone(st.in(kBackbone, "pretrain"));
  const auto ad = load_adapters(st.in(adapters_path(cfg.seed), "distill"));
  const fs::path dp = st.in(kDemoProbes, "gen-data");
  st.in(synthworld::labels_path(kDemoProbes), "gen-data");
  const auto demo = with_labels(synthworld::read_demo_corpus(dp).items, dp);
  const auto robot = synthworld::read_robot_corpus(st.in(kRobot, "gen-data"));
  if (robot.items.empty()) throw InvalidInput("gen-skills: empty robot corpus");
  const int steps = cfg.robot.length - 1;
  const auto shared = shared_motifs(cfg);

  static const std::vector<std::string> kActionHeader = {"vx", "vy", "omega", "gripper"};
  static const std::vector<std::string> kStateHeader = {"x", "y", "angle", "gripper",
                                                        "obj0_x", "obj0_y", "obj1_x", "obj1_y"};
  std::vector<Matrix> event_actions, event_states, random_actions, random_states;
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < demo.size(); ++i) {
    const int motif = single_label(demo[i].hidden_motifs, dp);
    auto z = backbone::encode_video(bb, demo[i].v);
    if (cfg.eval.latent_sigma > 0.0) z = evalkit::perturb_latents(z, cfg.eval.latent_sigma, derive(cfg.seed, 1000 + i));
    const auto s0 = synthworld::EnvState::from_vector(
        robot.items[i % robot.items.size()].s.row(0).transpose());
    const auto g = evalkit::generate_skill(ad, bb, z, s0, steps, cfg.robot.env);
    std::ostringstream stem;
    stem << "event_" << std::setw(3) << std::setfill('0') << i << "_" << synthworld::motif_name(motif);
    evalkit::write_matrix_csv(g.actions, kActionHeader, st.out(kSkillsDir / (stem.str() + "_actions.csv")));
    evalkit::write_matrix_csv(g.states, kStateHeader, st.out(kSkillsDir / (stem.str() + "_states.csv")));
    evalkit::write_path_svg(g.states, st.out(kSkillsDir / (stem.str() + "_path.svg")));
    const bool is_shared = std::find(shared.begin(), shared.end(), motif) != shared.end();
    index.push_back({{"skill", stem.str()},
                     {"motif", synthworld::motif_name(motif)},
                     {"shared", is_shared},
                     {"truncated", g.truncated},
                     {"loop_closure", evalkit::loop_closure(g.states)}});
    if (is_shared && g.actions.rows() > 0) {
      event_actions.push_back(g.actions);
      event_states.push_back(g.states);
    }
  }
  const std::size_t n_random = std::max<std::size_t>(event_actions.size(), 1);
  for (std::size_t i = 0; i < n_random; ++i) {
    const auto z = evalkit::random_latents(bb.config.events, bb.config.latent_dim, derive(cfg.seed, 5000 + i));
    const auto s0 = synthworld::EnvState::from_vector(
        robot.items[i % robot.items.size()].s.row(0).transpose());
    const auto g = evalkit::generate_skill(ad, bb, z, s0, steps, cfg.robot.env);
    std::ostringstream stem;
    stem << "random_" << std::setw(3) << std::setfill('0') << i;
    evalkit::write_matrix_csv(g.actions, kActionHeader, st.out(kSkillsDir / (stem.str() + "_actions.csv")));
    evalkit::write_matrix_csv(g.states, kStateHeader, st.out(kSkillsDir / (stem.str() + "_states.csv")));
    if (g.actions.rows() > 0) {
      random_actions.push_back(g.actions);
      random_states.push_back(g.states);
    }
  }
  std::vector<Matrix> corpus_a, corpus_s;
  for (const auto& t : robot.items) {
    corpus_a.push_back(t.a);
    corpus_s.push_back(t.s);
  }
  const auto sa = evalkit::SequenceScaler::fit(corpus_a);
  const auto ss = evalkit::SequenceScaler::fit(corpus_s);
  nlohmann::json q = {{"gamma", cfg.eval.quality_gamma}, {"skills", index}};
  if (!event_actions.empty() && !random_actions.empty()) {
    const auto ea = evalkit::skill_quality(event_actions, corpus_a, cfg.eval.quality_gamma, sa);
    const auto ra = evalkit::skill_quality(random_actions, corpus_a, cfg.eval.quality_gamma, sa);
    const auto es = evalkit::skill_quality(event_states, corpus_s, cfg.eval.quality_gamma, ss);
    const auto rs = evalkit::skill_quality(random_states, corpus_s, cfg.eval.quality_gamma, ss);
    q["actions"] = {{"event", quality_json(ea)}, {"random", quality_json(ra)},
                    {"median_ratio", ea.median / ra.median}};
    q["states"] = {{"event", quality_json(es)}, {"random", quality_json(rs)},
                   {"median_ratio", es.median / rs.median}};
    st.log() << "action median ratio " << ea.median / ra.median << '\n';
  }
  write_json(q, st.out(kQuality));
  st.finish();
}

void stage_report(const RunConfig& cfg, const PipelineOptions& opts) {
  Stage st("report", cfg, opts);
  const auto report = read_json(st.in(kReportJson, "eval-dynamics"));
  const auto analogies = read_json(st.in(kAnalogiesJson, "analogies"));
  const auto quality = read_json(st.in(kQuality, "gen-skills"));
  const auto bb = load_backbone(st.in(kBackbone, "pretrain"));
  const auto ad = load_adapters(st.in(adapters_path(cfg.seed), "distill"));
  const fs::path dp = st.in(kDemoProbes, "gen-data");
  const fs::path rp = st.in(kRobotProbes, "gen-data");
  const auto demo = with_labels(synthworld::read_demo_corpus(dp).items, dp);
  const auto robot = with_labels(synthworld::read_robot_corpus(rp).items, rp);
  const auto dl = demo_latents(bb, demo, dp);
  const auto rl = robot_latents(ad, bb, robot, rp);
  Matrix points(static_cast<Eigen::Index>(dl.latents.size() + rl.latents.size()), bb.config.latent_dim);
  std::vector<std::string> tags;
  std::vector<int> labels;
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < dl.latents.size(); ++i, ++r) {
    points.row(r) = dl.latents[i].colwise().mean();
    tags.push_back("video");
    labels.push_back(dl.labels[i]);
  }
  for (std::size_t i = 0; i < rl.latents.size(); ++i, ++r) {
    points.row(r) = rl.latents[i].colwise().mean();
    tags.push_back("robot");
    labels.push_back(rl.labels[i]);
  }
  const auto emb = evalkit::embed_2d(points, tags, labels);
  evalkit::write_embedding_csv(emb, st.out(kEmbeddingCsv));
  evalkit::write_embedding_svg(emb, st.out(kEmbeddingSvg));
  nlohmann::json summary = {{"config_hash", hex64(cfg.hash())},
                            {"revision", revision()},
                            {"seed", cfg.seed},
                            {"dynamics", report.at("rows")},
                            {"analogies", analogies},
                            {"embedding", {{"silhouette", emb.silhouette}, {"degenerate", emb.degenerate}}}};
  summary["skills"] = nlohmann::json::object();
  for (const char* k : {"actions", "states"}) {
    if (quality.contains(k)) {
      summary["skills"][k] = {{"event_median", quality[k]["event"]["median"]},
                              {"random_median", quality[k]["random"]["median"]},
                              {"median_ratio", quality[k]["median_ratio"]}};
    }
  }
  write_json(summary, st.out(kSummary));
  st.finish();
}

bool manifest_current(const RunConfig& cfg, const std::string& stage) {
  const fs::path p = manifest_path(cfg, stage);
  if (!fs::exists(p)) return false;
  try {
    const auto m = read_json(p);
    if (m.at("config_hash") != hex64(cfg.hash()) || m.at("seed") != cfg.seed) return false;
    for (const auto& o : m.at("outputs")) {
      const fs::path f = cfg.out_dir / o.at("path").get<std::string>();
      if (!fs::exists(f) || hex64(file_hash(f)) != o.at("fnv1a")) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"gen-data",  "pretrain",   "distill", "eval-dynamics",
                                                 "analogies", "gen-skills", "report"};
  return names;
}

bool is_stage(const std::string& name) {
  const auto& n = stage_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

void run_stage(const std::string& stage, const RunConfig& cfg, const PipelineOptions& opts) {
  if (stage == "gen-data") return stage_gen_data(cfg, opts);
  if (stage == "pretrain") return stage_pretrain(cfg, opts);
  if (stage == "distill") return stage_distill(cfg, opts);
  if (stage == "eval-dynamics") return stage_eval_dynamics(cfg, opts);
  if (stage == "analogies") return stage_analogies(cfg, opts);
  if (stage == "gen-skills") return stage_gen_skills(cfg, opts);
  if (stage == "report") return stage_report(cfg, opts);
  throw InvalidInput("unknown stage '" + stage + "'");
}

void run_pipeline(const RunConfig& cfg, const PipelineOptions& opts) {
  for (const auto& s : opts.skip) {
    if (!is_stage(s)) throw ConfigError("--skip", "unknown stage '" + s + "'");
  }
  for (const auto& stage : stage_names()) {
    if (opts.skip.count(stage)) continue;
    if (opts.resume && manifest_current(cfg, stage)) {
      if (opts.log) *opts.log << "[" << stage << "] up to date\n";
      continue;
    }
    run_stage(stage, cfg, opts);
  }
}

fs::path manifest_path(const RunConfig& cfg, const std::string& stage) {
  return cfg.out_dir / "manifests" / (stage + ".json");
}

nlohmann::json read_manifest(const RunConfig& cfg, const std::string& stage) {
  return read_json(manifest_path(cfg, stage));
}

std::string revision() { return EVSKILL_REVISION; }

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

nlohmann::json inspect_artifact(const fs::path& path, bool with_labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (std::string(magic, 8) == std::string(diffcore::kCheckpointMagic, 8)) {
    const auto c = diffcore::read_checkpoint(path);
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, m] : c.tensors) {
      tensors.push_back(name + " " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    return {{"type", "checkpoint"}, {"header", c.header}, {"tensors", tensors}};
  }
  nlohmann::json j = synthworld::inspect_corpus(path);
  j["type"] = "corpus";
  if (with_labels) {
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& segs : synthworld::read_labels(path)) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& s : segs) row.push_back({{"motif", synthworld::motif_name(s.motif)}, {"start", s.start}, {"end", s.end}});
      labels.push_back(row);
    }
    j["labels"] = labels;
  }
  return j;
}

}  // namespace evskill::cli
