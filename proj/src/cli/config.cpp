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

#include "evskill/cli/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "evskill/errors.hpp"

namespace evskill::cli {

namespace {

const char* const kSections[] = {"synthworld", "backbone", "homomorphism", "dynamics", "evalkit"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

int parse_int32(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key, "integer out of range");
  return static_cast<int>(x);
}

double parse_double(const std::string& key, const std::string& v) {
  if (v.empty()) throw ConfigError(key, "expected a number");
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
  return x;
}

std::vector<int> parse_motifs(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& name : split_list(v)) {
    const int m = synthworld::motif_from_name(name);
    if (m < 0) throw ConfigError(key, "unknown motif '" + name + "'");
    out.push_back(m);
  }
  return out;
}

std::vector<int> parse_horizons(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& h : split_list(v)) {
    out.push_back(h == "full" ? dynamics::kFullHorizon : parse_int32(key, h));
  }
  return out;
}

nlohmann::json motif_json(const std::vector<int>& motifs) {
  nlohmann::json j = nlohmann::json::array();
  for (int m : motifs) j.push_back(synthworld::motif_name(m));
  return j;
}

nlohmann::json horizon_json(const std::vector<int>& hs) {
  nlohmann::json j = nlohmann::json::array();
  for (int h : hs) j.push_back(evalkit::horizon_label(h));
  return j;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

template <typename Sel>
Field int_field(std::string key, Sel sel) {
  return {std::move(key),
          [sel](RunConfig& c, const std::string& k, const std::string& v) { sel(c) = parse_int32(k, v); },
          [sel](const RunConfig& c) { return nlohmann::json(sel(const_cast<RunConfig&>(c))); }};
}

template <typename Sel>
Field double_field(std::string key, Sel sel) {
  return {std::move(key),
          [sel](RunConfig& c, const std::string& k, const std::string& v) { sel(c) = parse_double(k, v); },
          [sel](const RunConfig& c) { return nlohmann::json(sel(const_cast<RunConfig&>(c))); }};
}

template <typename Sel>
Field motif_field(std::string key, Sel sel) {
  return {std::move(key),
          [sel](RunConfig& c, const std::string& k, const std::string& v) { sel(c) = parse_motifs(k, v); },
          [sel](const RunConfig& c) { return motif_json(sel(const_cast<RunConfig&>(c))); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back({"preset", [](RunConfig& c, const std::string&, const std::string& s) { c.preset = s; },
                 [](const RunConfig& c) { return nlohmann::json(c.preset); }});
    v.push_back({"seed",
                 [](RunConfig& c, const std::string& k, const std::string& s) {
                   const long long x = parse_int(k, s);
                   if (x < 0) throw ConfigError(k, "must be >= 0");
                   c.seed = static_cast<std::uint64_t>(x);
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.seed); }});
    v.push_back({"out_dir",
                 [](RunConfig& c, const std::string&, const std::string& s) { c.out_dir = s; },
                 [](const RunConfig&) { return nlohmann::json(); }});

    // synthworld
    v.push_back(int_field("synthworld.demo_count", [](RunConfig& c) -> auto& { return c.demo.count; }));
    v.push_back(int_field("synthworld.frames", [](RunConfig& c) -> auto& { return c.demo.frames; }));
    v.push_back(int_field("synthworld.frame_dim", [](RunConfig& c) -> auto& { return c.demo.frame_dim; }));
    v.push_back(int_field("synthworld.demo_min_motifs", [](RunConfig& c) -> auto& { return c.demo.min_motifs; }));
    v.push_back(int_field("synthworld.demo_max_motifs", [](RunConfig& c) -> auto& { return c.demo.max_motifs; }));
    v.push_back(int_field("synthworld.max_tokens", [](RunConfig& c) -> auto& { return c.demo.max_tokens; }));
    v.push_back(double_field("synthworld.noise", [](RunConfig& c) -> auto& { return c.demo.noise; }));
    v.push_back(double_field("synthworld.jitter", [](RunConfig& c) -> auto& { return c.demo.jitter; }));
    v.push_back(double_field("synthworld.filler_prob", [](RunConfig& c) -> auto& { return c.demo.filler_prob; }));
    v.push_back(double_field("synthworld.appearance", [](RunConfig& c) -> auto& { return c.demo.appearance; }));
    v.push_back({"synthworld.camera_seed",
                 [](RunConfig& c, const std::string& k, const std::string& s) {
                   const long long x = parse_int(k, s);
                   if (x < 0) throw ConfigError(k, "must be >= 0");
                   c.demo.camera_seed = static_cast<std::uint64_t>(x);
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.demo.camera_seed); }});
    v.push_back(motif_field("synthworld.demo_motifs", [](RunConfig& c) -> auto& { return c.demo.motifs; }));
    v.push_back(int_field("synthworld.robot_count", [](RunConfig& c) -> auto& { return c.robot.count; }));
    v.push_back(int_field("synthworld.robot_length", [](RunConfig& c) -> auto& { return c.robot.length; }));
    v.push_back(int_field("synthworld.robot_min_motifs", [](RunConfig& c) -> auto& { return c.robot.min_motifs; }));
    v.push_back(int_field("synthworld.robot_max_motifs", [](RunConfig& c) -> auto& { return c.robot.max_motifs; }));
    v.push_back(double_field("synthworld.controller_noise", [](RunConfig& c) -> auto& { return c.robot.controller_noise; }));
    v.push_back(motif_field("synthworld.robot_motifs", [](RunConfig& c) -> auto& { return c.robot.motifs; }));
    v.push_back(double_field("synthworld.pos_scale", [](RunConfig& c) -> auto& { return c.robot.env.pos_scale; }));
    v.push_back(double_field("synthworld.angle_scale", [](RunConfig& c) -> auto& { return c.robot.env.angle_scale; }));
    v.push_back(double_field("synthworld.grip_scale", [](RunConfig& c) -> auto& { return c.robot.env.grip_scale; }));
    v.push_back(double_field("synthworld.grasp_radius", [](RunConfig& c) -> auto& { return c.robot.env.grasp_radius; }));

    // backbone
    v.push_back(int_field("backbone.token_dim", [](RunConfig& c) -> auto& { return c.backbone.token_dim; }));
    v.push_back(int_field("backbone.latent_dim", [](RunConfig& c) -> auto& { return c.backbone.latent_dim; }));
    v.push_back(int_field("backbone.events", [](RunConfig& c) -> auto& { return c.backbone.events; }));
    v.push_back(int_field("backbone.decode_frames", [](RunConfig& c) -> auto& { return c.backbone.decode_frames; }));
    v.push_back(int_field("backbone.decode_tokens", [](RunConfig& c) -> auto& { return c.backbone.decode_tokens; }));
    v.push_back(int_field("backbone.width", [](RunConfig& c) -> auto& { return c.backbone.width; }));
    v.push_back(int_field("backbone.depth", [](RunConfig& c) -> auto& { return c.backbone.depth; }));
    v.push_back(int_field("backbone.heads", [](RunConfig& c) -> auto& { return c.backbone.heads; }));
    v.push_back(int_field("backbone.ffn_mult", [](RunConfig& c) -> auto& { return c.backbone.ffn_mult; }));
    v.push_back(double_field("backbone.gamma", [](RunConfig& c) -> auto& { return c.backbone.gamma; }));
    v.push_back(double_field("backbone.alpha", [](RunConfig& c) -> auto& { return c.backbone.alpha; }));
    v.push_back(double_field("backbone.beta", [](RunConfig& c) -> auto& { return c.backbone.beta; }));
    v.push_back(double_field("backbone.var_floor", [](RunConfig& c) -> auto& { return c.backbone.var_floor; }));
    v.push_back(double_field("backbone.latent_noise", [](RunConfig& c) -> auto& { return c.backbone.latent_noise; }));
    v.push_back(int_field("backbone.epochs", [](RunConfig& c) -> auto& { return c.backbone.epochs; }));
    v.push_back(int_field("backbone.batch", [](RunConfig& c) -> auto& { return c.backbone.batch; }));
    v.push_back(double_field("backbone.lr", [](RunConfig& c) -> auto& { return c.backbone.lr; }));

    // homomorphism
    v.push_back(int_field("homomorphism.width", [](RunConfig& c) -> auto& { return c.adapters.width; }));
    v.push_back(int_field("homomorphism.depth", [](RunConfig& c) -> auto& { return c.adapters.depth; }));
    v.push_back(int_field("homomorphism.heads", [](RunConfig& c) -> auto& { return c.adapters.heads; }));
    v.push_back(int_field("homomorphism.ffn_mult", [](RunConfig& c) -> auto& { return c.adapters.ffn_mult; }));
    v.push_back(double_field("homomorphism.gamma", [](RunConfig& c) -> auto& { return c.adapters.gamma; }));
    v.push_back(double_field("homomorphism.aux_weight", [](RunConfig& c) -> auto& { return c.adapters.aux_weight; }));
    v.push_back(int_field("homomorphism.video_len", [](RunConfig& c) -> auto& { return c.adapters.video_len; }));
    v.push_back(int_field("homomorphism.text_len", [](RunConfig& c) -> auto& { return c.adapters.text_len; }));
    v.push_back(int_field("homomorphism.epochs", [](RunConfig& c) -> auto& { return c.adapters.epochs; }));
    v.push_back(int_field("homomorphism.batch", [](RunConfig& c) -> auto& { return c.adapters.batch; }));
    v.push_back(double_field("homomorphism.lr", [](RunConfig& c) -> auto& { return c.adapters.lr; }));

    // dynamics
    v.push_back({"dynamics.methods",
                 [](RunConfig& c, const std::string& k, const std::string& s) {
                   c.dynamics.methods.clear();
                   for (const auto& m : split_list(s)) {
                     try {
                       dynamics::kind_from_name(m);
                     } catch (const InvalidInput&) {
                       throw ConfigError(k, "unknown method '" + m + "'");
                     }
                     c.dynamics.methods.push_back(m);
                   }
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.dynamics.methods); }});
    v.push_back({"dynamics.epochs",
                 [](RunConfig& c, const std::string& k, const std::string& s) {
                   c.dynamics.epochs.clear();
                   for (const auto& e : split_list(s)) c.dynamics.epochs.push_back(parse_int32(k, e));
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.dynamics.epochs); }});
    v.push_back({"dynamics.horizons",
                 [](RunConfig& c, const std::string& k, const std::string& s) {
                   c.dynamics.horizons = parse_horizons(k, s);
                 },
                 [](const RunConfig& c) { return horizon_json(c.dynamics.horizons); }});
    v.push_back(int_field("dynamics.seeds", [](RunConfig& c) -> auto& { return c.dynamics.seeds; }));
    v.push_back(int_field("dynamics.ensemble_size", [](RunConfig& c) -> auto& { return c.dynamics.ensemble_size; }));
    v.push_back(int_field("dynamics.hidden", [](RunConfig& c) -> auto& { return c.dynamics.hidden; }));
    v.push_back(int_field("dynamics.batch", [](RunConfig& c) -> auto& { return c.dynamics.batch; }));
    v.push_back(double_field("dynamics.lr", [](RunConfig& c) -> auto& { return c.dynamics.lr; }));
    v.push_back(double_field("dynamics.var_floor", [](RunConfig& c) -> auto& { return c.dynamics.var_floor; }));

    // evalkit
    v.push_back(int_field("evalkit.eval_count", [](RunConfig& c) -> auto& { return c.eval.eval_count; }));
    v.push_back(int_field("evalkit.probes_per_motif", [](RunConfig& c) -> auto& { return c.eval.probes_per_motif; }));
    v.push_back(int_field("evalkit.shuffles", [](RunConfig& c) -> auto& { return c.eval.shuffles; }));
    v.push_back({"evalkit.similarity",
                 [](RunConfig& c, const std::string& k, const std::string& s) {
                   if (s != "cosine" && s != "euclidean") {
                     throw ConfigError(k, "expected cosine or euclidean, got '" + s + "'");
                   }
                   c.eval.similarity = s;
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.eval.similarity); }});
    v.push_back(double_field("evalkit.quality_gamma", [](RunConfig& c) -> auto& { return c.eval.quality_gamma; }));
    v.push_back(double_field("evalkit.latent_sigma", [](RunConfig& c) -> auto& { return c.eval.latent_sigma; }));
    return v;
  }();
  return f;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

bool starts_with_section(const std::string& key) {
  for (const char* s : kSections) {
    const std::string p = std::string(s) + ".";
    if (key.rfind(p, 0) == 0) return true;
  }
  return false;
}

}  // namespace

void RunConfig::validate() const {
  if (preset != "desk" && preset != "paper-shape") {
    throw ConfigError("preset", "expected desk or paper-shape, got '" + preset + "'");
  }
  demo.validate();
  robot.validate();
  backbone.validate();
  adapters.validate();
  if (backbone.frame_dim != demo.frame_dim) {
    throw ConfigError("synthworld.frame_dim", "backbone frame width does not match");
  }
  if (demo.event_budget != backbone.events) {
    throw ConfigError("backbone.events", "event budget does not match the demo generator");
  }
  if (dynamics.methods.empty()) throw ConfigError("dynamics.methods", "must not be empty");
  if (dynamics.epochs.empty()) throw ConfigError("dynamics.epochs", "must not be empty");
  for (int e : dynamics.epochs) {
    if (e < 1) throw ConfigError("dynamics.epochs", "entries must be >= 1");
  }
  const int last = *std::max_element(dynamics.epochs.begin(), dynamics.epochs.end());
  const bool has_v2s = std::find(dynamics.methods.begin(), dynamics.methods.end(), "V2S") !=
                       dynamics.methods.end();
  if (has_v2s && last > adapters.epochs) {
    throw ConfigError("dynamics.epochs", "V2S snapshot epoch " + std::to_string(last) +
                                             " exceeds homomorphism.epochs = " +
                                             std::to_string(adapters.epochs));
  }
  if (dynamics.horizons.empty()) throw ConfigError("dynamics.horizons", "must not be empty");
  for (int h : dynamics.horizons) {
    if (h < 0) throw ConfigError("dynamics.horizons", "entries must be >= 1 or 'full'");
    if (h > robot.length - 1) {
      throw ConfigError("dynamics.horizons", "horizon " + std::to_string(h) +
                                                 " exceeds synthworld.robot_length - 1");
    }
  }
  if (dynamics.seeds < 1) throw ConfigError("dynamics.seeds", "must be >= 1");
  for (const auto& m : dynamics.methods) {
    const auto kind = dynamics::kind_from_name(m);
    if (kind == dynamics::ModelKind::kV2s) continue;
    dynamics::BaselineSpec spec{kind, dynamics.ensemble_size, dynamics.hidden, dynamics.batch,
                                dynamics.lr, dynamics.var_floor};
    spec.validate();
  }
  if (eval.eval_count < 1) throw ConfigError("evalkit.eval_count", "must be >= 1");
  if (eval.probes_per_motif < 1) throw ConfigError("evalkit.probes_per_motif", "must be >= 1");
  if (eval.shuffles < 1) throw ConfigError("evalkit.shuffles", "must be >= 1");
  if (!(eval.quality_gamma > 0.0)) throw ConfigError("evalkit.quality_gamma", "must be > 0");
  if (eval.latent_sigma < 0.0) throw ConfigError("evalkit.latent_sigma", "must be >= 0");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields()) {
    if (f.key == "out_dir") continue;
    j[nlohmann::json::json_pointer("/" + [&] {
      std::string p = f.key;
      std::replace(p.begin(), p.end(), '.', '/');
      return p;
    }())] = f.get(*this);
  }
  return j;
}

std::uint64_t RunConfig::hash() const { return synthworld::config_hash(to_json()); }

void apply_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "desk") {
    cfg.preset = preset;
    return;
  }
  if (preset != "paper-shape") {
    throw ConfigError("preset", "expected desk or paper-shape, got '" + preset + "'");
  }
  // Shape-only: not expected to run on a laptop.
  cfg.preset = preset;
  cfg.backbone.events = 16;
  cfg.demo.event_budget = 16;
  cfg.demo.frames = 200;
  cfg.backbone.decode_frames = 200;
  cfg.robot.length = 180;
  cfg.backbone.width = 768;
  cfg.backbone.latent_dim = 768;
  cfg.adapters.width = 768;
  cfg.backbone.lr = 1e-5;
  cfg.adapters.lr = 1e-5;
  cfg.backbone.batch = 128;
  cfg.adapters.batch = 128;
}

Assignments parse_config_text(const std::string& text) {
  Assignments out;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("", "line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
    if (!section.empty() && !starts_with_section(key)) key = section + "." + key;
    out.emplace_back(key, value);
  }
  return out;
}

Assignments read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown config key");
  f->set(cfg, key, value);
  cfg.demo.event_budget = cfg.backbone.events;
  cfg.backbone.frame_dim = cfg.demo.frame_dim;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

RunConfig build_config(const Assignments& assignments,
                       const std::optional<std::string>& preset_override) {
  std::set<std::string> seen;
  std::string preset = "desk";
  for (const auto& [k, v] : assignments) {
    if (!find_field(k)) throw ConfigError(k, "unknown config key");
    if (!seen.insert(k).second) throw ConfigError(k, "set more than once");
    if (k == "preset") preset = v;
  }
  if (preset_override) preset = *preset_override;
  RunConfig cfg;
  apply_preset(cfg, preset);
  for (const auto& [k, v] : assignments) {
    if (k == "preset") continue;
    set_key(cfg, k, v);
  }
  cfg.validate();
  return cfg;
}

evalkit::Similarity similarity_from_name(const std::string& name) {
  if (name == "cosine") return evalkit::Similarity::kCosine;
  if (name == "euclidean") return evalkit::Similarity::kEuclidean;
  throw ConfigError("evalkit.similarity", "expected cosine or euclidean, got '" + name + "'");
}

}  // namespace evskill::cli
