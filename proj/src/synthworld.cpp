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

#include "evskill/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evskill/binary_io.hpp"
#include "evskill/errors.hpp"

namespace evskill::synthworld {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr char kCorpusMagic[] = "EVSKCORP";
constexpr std::uint32_t kKindDemo = 0;
constexpr std::uint32_t kKindRobot = 1;
constexpr int kKinematicFeatures = 9;
// Kinematic features followed by one tool-appearance channel per motif.
constexpr int kRenderFeatures = kKinematicFeatures + kMotifCount;

const char* const kMotifNames[kMotifCount] = {"stir-cw", "stir-ccw", "slide-h",   "slide-v",
                                              "lift",    "press",    "pour-tilt", "hold"};

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Splits `total` steps into `n` segments of at least `min_len`.
std::vector<int> split_durations(int total, int n, int min_len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> wdist(0.6, 1.4);
  std::vector<double> w(n);
  double sum = 0.0;
  for (auto& x : w) sum += (x = wdist(rng));
  const int spare = total - n * min_len;
  std::vector<int> d(n, min_len);
  int used = 0;
  for (int i = 0; i < n; ++i) {
    const int extra = static_cast<int>(std::floor(spare * w[i] / sum));
    d[i] += extra;
    used += extra;
  }
  d[n - 1] += spare - used;
  return d;
}

std::vector<int> pick_motifs(const std::vector<int>& pool, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    int m = pool[pick(rng)];
    // Avoid immediate repeats so segment boundaries stay observable.
    while (pool.size() > 1 && !out.empty() && m == out.back()) m = pool[pick(rng)];
    out.push_back(m);
  }
  return out;
}

double ramp_to(double from, double to, double u, double rate) {
  return from + (to - from) * std::min(1.0, rate * u);
}

Eigen::Matrix<double, Eigen::Dynamic, kRenderFeatures> camera_matrix(int frame_dim,
                                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(kRenderFeatures)));
  Eigen::Matrix<double, Eigen::Dynamic, kRenderFeatures> a(frame_dim, kRenderFeatures);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a;
}

Eigen::Matrix<double, kRenderFeatures, 1> render_features(const Pose& p, const Pose& prev,
                                                          int motif, double appearance) {
  const double vx = p(0) - prev(0);
  const double vy = p(1) - prev(1);
  Eigen::Matrix<double, kRenderFeatures, 1> f = Eigen::Matrix<double, kRenderFeatures, 1>::Zero();
  f.head<kKinematicFeatures>() << p(0), p(1), p(2), p(3), 10.0 * vx, 10.0 * vy,
      5.0 * (p(2) - prev(2)), 4.0 * (p(3) - prev(3)), 10.0 * (p(0) * vy - p(1) * vx);
  f(kKinematicFeatures + motif) = appearance;
  return f;
}

Pose random_start(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Pose p;
  p << u(rng), u(rng), 0.0, 0.0;
  return p;
}

DemoTrajectory render_demo(const DemoConfig& cfg, const std::vector<int>& motifs,
                           const std::vector<int>& durations,
                           const Eigen::Matrix<double, Eigen::Dynamic, kRenderFeatures>& camera,
                           std::mt19937_64& rng) {
  // Entry scale jitter/sqrt(d) keeps the relative distortion near `jitter`.
  std::normal_distribution<double> jit(0.0, cfg.jitter / std::sqrt(double(cfg.frame_dim)));
  std::normal_distribution<double> shift(0.0, cfg.jitter);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> filler(tokens::kFirstFiller, tokens::kVocab - 1);

  const int d = cfg.frame_dim;
  Matrix affine = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < affine.size(); ++i) affine.data()[i] += jit(rng);
  Eigen::VectorXd offset(d);
  for (int i = 0; i < d; ++i) offset(i) = shift(rng);

  DemoTrajectory out;
  out.v.resize(cfg.frames, d);
  Pose pose = random_start(rng);
  Pose prev = pose;
  int frame = 0;
  for (std::size_t k = 0; k < motifs.size(); ++k) {
    const Pose start = pose;
    const int dur = durations[k];
    out.hidden_motifs.push_back({motifs[k], frame, frame + dur});
    for (int s = 0; s < dur; ++s, ++frame) {
      pose = motif_target(motifs[k], start, double(s + 1) / dur);
      const Eigen::VectorXd clean =
          camera * render_features(pose, prev, motifs[k], cfg.appearance);
      Eigen::VectorXd v = affine * clean + offset;
      for (int i = 0; i < d; ++i) out.v(frame, i) = f32(v(i) + noise(rng));
      prev = pose;
    }
  }

  out.w.push_back(tokens::kStart);
  for (int m : motifs) {
    while (coin(rng) < cfg.filler_prob) out.w.push_back(filler(rng));
    out.w.push_back(tokens::kFirstMotif + m);
  }
  if (coin(rng) < cfg.filler_prob) out.w.push_back(filler(rng));
  out.w.push_back(tokens::kStop);
  if (static_cast<int>(out.w.size()) > cfg.max_tokens) {
    out.w.resize(cfg.max_tokens);
    out.w.back() = tokens::kStop;
  }
  return out;
}

EnvState random_env_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_real_distribution<double> o(-0.8, 0.8);
  EnvState s;
  s.pos = {f32(u(rng)), f32(u(rng))};
  s.objects[0] = {f32(o(rng)), f32(o(rng))};
  s.objects[1] = {f32(o(rng)), f32(o(rng))};
  return s;
}

Pose pose_of(const EnvState& s) {
  Pose p;
  p << s.pos(0), s.pos(1), s.angle, s.gripper;
  return p;
}

// Appends `steps` controller actions for `motif` to (states, actions).
void drive(int motif, int steps, double noise, const EnvParams& env, std::mt19937_64& rng,
           std::vector<EnvState>& states, std::vector<Eigen::VectorXd>& actions) {
  std::normal_distribution<double> n(0.0, noise);
  const Pose start = pose_of(states.back());
  for (int k = 0; k < steps; ++k) {
    const EnvState& cur = states.back();
    const Pose target = motif_target(motif, start, double(k + 1) / steps);
    Eigen::VectorXd a(kActionDim);
    a(0) = (target(0) - cur.pos(0)) / env.pos_scale;
    a(1) = (target(1) - cur.pos(1)) / env.pos_scale;
    a(2) = (target(2) - cur.angle) / env.angle_scale;
    a(3) = (target(3) - cur.gripper) / env.grip_scale;
    for (int i = 0; i < kActionDim; ++i) {
      if (noise > 0.0) a(i) += n(rng);
      a(i) = f32(std::clamp(a(i), -1.0, 1.0));
    }
    states.push_back(step_env(cur, a, env).state);
    actions.push_back(a);
  }
}

RobotTrajectory pack(const std::vector<EnvState>& states,
                     const std::vector<Eigen::VectorXd>& actions) {
  RobotTrajectory t;
  t.s.resize(static_cast<Eigen::Index>(states.size()), kStateDim);
  for (std::size_t i = 0; i < states.size(); ++i) {
    t.s.row(static_cast<Eigen::Index>(i)) = states[i].to_vector().transpose();
  }
  t.a.resize(static_cast<Eigen::Index>(actions.size()), kActionDim);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    t.a.row(static_cast<Eigen::Index>(i)) = actions[i].transpose();
  }
  return t;
}

void check_motif_list(const std::vector<int>& motifs, const std::string& key) {
  if (motifs.empty()) throw ConfigError(key, "motif list is empty");
  for (int m : motifs) {
    if (m < 0 || m >= kMotifCount) throw ConfigError(key, "unknown motif id " + std::to_string(m));
  }
}

nlohmann::json motif_names_json(const std::vector<int>& motifs) {
  nlohmann::json j = nlohmann::json::array();
  for (int m : motifs) j.push_back(motif_name(m));
  return j;
}

}  // namespace

const char* motif_name(int motif) {
  if (motif < 0 || motif >= kMotifCount) return "unknown";
  return kMotifNames[motif];
}

int motif_from_name(const std::string& name) {
  for (int i = 0; i < kMotifCount; ++i) {
    if (name == kMotifNames[i]) return i;
  }
  return -1;
}

Eigen::VectorXd EnvState::to_vector() const {
  Eigen::VectorXd v(kStateDim);
  v << pos(0), pos(1), angle, gripper, objects[0](0), objects[0](1), objects[1](0), objects[1](1);
  return v;
}

EnvState EnvState::from_vector(const Eigen::VectorXd& v) {
  if (v.size() != kStateDim) {
    throw InvalidInput("EnvState::from_vector: expected " + std::to_string(kStateDim) +
                       " entries, got " + std::to_string(v.size()));
  }
  EnvState s;
  s.pos = {v(0), v(1)};
  s.angle = v(2);
  s.gripper = v(3);
  s.objects[0] = {v(4), v(5)};
  s.objects[1] = {v(6), v(7)};
  return s;
}

StepResult step_env(const EnvState& state, const Eigen::VectorXd& action, const EnvParams& p) {
  if (action.size() != kActionDim) {
    throw InvalidInput("step_env: expected " + std::to_string(kActionDim) +
                       "-d action, got " + std::to_string(action.size()));
  }
  StepResult r;
  Eigen::Vector4d a;
  for (int i = 0; i < kActionDim; ++i) {
    const double x = std::isfinite(action(i)) ? action(i) : 0.0;
    a(i) = std::clamp(x, -1.0, 1.0);
    if (a(i) != action(i)) r.clipped = true;
  }
  EnvState& s = r.state;
  s.pos(0) = f32(std::clamp(state.pos(0) + p.pos_scale * a(0), -1.0, 1.0));
  s.pos(1) = f32(std::clamp(state.pos(1) + p.pos_scale * a(1), -1.0, 1.0));
  s.angle = f32(std::clamp(state.angle + p.angle_scale * a(2), -kPi, kPi));
  s.gripper = f32(std::clamp(state.gripper + p.grip_scale * a(3), 0.0, 1.0));
  const Eigen::Vector2d moved = s.pos - state.pos;
  for (std::size_t k = 0; k < state.objects.size(); ++k) {
    Eigen::Vector2d o = state.objects[k];
    if (s.gripper >= 0.5 && (o - state.pos).norm() <= p.grasp_radius) o += moved;
    s.objects[k] = {f32(std::clamp(o(0), -1.0, 1.0)), f32(std::clamp(o(1), -1.0, 1.0))};
  }
  return r;
}

Pose motif_target(int motif, const Pose& start, double u) {
  u = std::clamp(u, 0.0, 1.0);
  Pose p = start;
  const double x0 = start(0), y0 = start(1), g0 = start(3);
  switch (motif) {
    case kStirCw:
    case kStirCcw: {
      constexpr double r = 0.25;
      const double phi0 = (std::abs(x0) + std::abs(y0) < 1e-9) ? kPi / 2 : std::atan2(y0, x0);
      const double cx = x0 - r * std::cos(phi0);
      const double cy = y0 - r * std::sin(phi0);
      const double dir = motif == kStirCw ? -1.0 : 1.0;
      const double phi = phi0 + dir * 2.0 * kPi * u;
      p(0) = cx + r * std::cos(phi);
      p(1) = cy + r * std::sin(phi);
      p(3) = ramp_to(g0, 0.0, u, 4.0);
      break;
    }
    case kSlideH:
      p(0) = x0 + (x0 > 0.0 ? -1.0 : 1.0) * 0.6 * u;
      p(3) = ramp_to(g0, 0.0, u, 4.0);
      break;
    case kSlideV:
      p(1) = y0 + (y0 > 0.0 ? -1.0 : 1.0) * 0.6 * u;
      p(3) = ramp_to(g0, 0.0, u, 4.0);
      break;
    case kLift: {
      p(3) = ramp_to(g0, 1.0, u, 3.0);
      const double rise = std::max(0.0, (u - 1.0 / 3.0) * 1.5);
      p(1) = y0 + (y0 > 0.2 ? -1.0 : 1.0) * 0.45 * rise;
      break;
    }
    case kPress:
      p(1) = y0 - (y0 > -0.2 ? 1.0 : -1.0) * 0.3 * std::sin(kPi * u);
      p(3) = ramp_to(g0, 0.0, u, 4.0);
      break;
    case kPourTilt:
      p(2) = start(2) + 1.2 * std::sin(kPi * u);
      p(3) = ramp_to(g0, 1.0, u, 4.0);
      break;
    case kHold:
      p(3) = ramp_to(g0, 1.0, u, 4.0);
      break;
    default:
      throw InvalidInput("motif_target: unknown motif id " + std::to_string(motif));
  }
  return p;
}

void DemoConfig::validate() const {
  if (count < 0) throw ConfigError("synthworld.demo_count", "must be >= 0");
  if (frame_dim < 1) throw ConfigError("synthworld.frame_dim", "must be >= 1");
  if (min_motifs < 1 || max_motifs < min_motifs) {
    throw ConfigError("synthworld.demo_max_motifs", "need 1 <= min_motifs <= max_motifs");
  }
  if (max_motifs > event_budget) {
    throw ConfigError("synthworld.demo_max_motifs",
                      "motifs per trajectory (" + std::to_string(max_motifs) +
                          ") exceeds the event budget K=" + std::to_string(event_budget));
  }
  if (frames < max_motifs * 6) {
    throw ConfigError("synthworld.frames", "too few frames for " + std::to_string(max_motifs) +
                                               " motifs of >= 6 frames");
  }
  if (max_tokens < 2 + max_motifs) {
    throw ConfigError("synthworld.max_tokens", "cannot hold start/stop and one token per motif");
  }
  if (appearance < 0.0) throw ConfigError("synthworld.appearance", "must be >= 0");
  if (noise < 0.0 || jitter < 0.0 || filler_prob < 0.0 || filler_prob >= 1.0) {
    throw ConfigError("synthworld.noise", "noise/jitter must be >= 0 and filler_prob in [0,1)");
  }
  check_motif_list(motifs, "synthworld.demo_motifs");
}

nlohmann::json DemoConfig::to_json() const {
  return {{"count", count},           {"frames", frames},
          {"frame_dim", frame_dim},   {"min_motifs", min_motifs},
          {"max_motifs", max_motifs}, {"event_budget", event_budget},
          {"max_tokens", max_tokens}, {"noise", noise},
          {"jitter", jitter},         {"filler_prob", filler_prob},
          {"appearance", appearance},
          {"camera_seed", camera_seed}, {"motifs", motif_names_json(motifs)}};
}

void RobotConfig::validate() const {
  if (count < 0) throw ConfigError("synthworld.robot_count", "must be >= 0");
  if (min_motifs < 1 || max_motifs < min_motifs) {
    throw ConfigError("synthworld.robot_max_motifs", "need 1 <= min_motifs <= max_motifs");
  }
  if (length < 2 || length - 1 < max_motifs * 16) {
    throw ConfigError("synthworld.robot_length",
                      "need at least 16 steps per motif, got length " + std::to_string(length));
  }
  if (controller_noise < 0.0) throw ConfigError("synthworld.controller_noise", "must be >= 0");
  check_motif_list(motifs, "synthworld.robot_motifs");
}

nlohmann::json RobotConfig::to_json() const {
  return {{"count", count},
          {"length", length},
          {"min_motifs", min_motifs},
          {"max_motifs", max_motifs},
          {"controller_noise", controller_noise},
          {"motifs", motif_names_json(motifs)},
          {"env",
           {{"pos_scale", env.pos_scale},
            {"angle_scale", env.angle_scale},
            {"grip_scale", env.grip_scale},
            {"grasp_radius", env.grasp_radius}}}};
}

std::vector<DemoTrajectory> gen_demo_corpus(const DemoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto camera = camera_matrix(cfg.frame_dim, cfg.camera_seed);
  std::vector<DemoTrajectory> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::uniform_int_distribution<int> n(cfg.min_motifs, cfg.max_motifs);
    const int count = n(rng);
    const auto motifs = pick_motifs(cfg.motifs, count, rng);
    const auto durations = split_durations(cfg.frames, count, 6, rng);
    out.push_back(render_demo(cfg, motifs, durations, camera, rng));
  }
  return out;
}

std::vector<DemoTrajectory> gen_demo_probes(const DemoConfig& cfg, std::span<const int> motifs,
                                            int per_motif, std::uint64_t seed) {
  cfg.validate();
  const auto camera = camera_matrix(cfg.frame_dim, cfg.camera_seed);
  std::vector<DemoTrajectory> out;
  std::uint64_t index = 0;
  for (int m : motifs) {
    for (int k = 0; k < per_motif; ++k, ++index) {
      std::mt19937_64 rng(mix_seed(seed ^ 0x70726f6265ull, index));
      out.push_back(render_demo(cfg, {m}, {cfg.frames}, camera, rng));
    }
  }
  return out;
}

RobotTrajectory run_controller(int motif, const EnvState& start, int steps, double noise,
                               std::uint64_t seed, const EnvParams& env) {
  std::mt19937_64 rng(seed);
  std::vector<EnvState> states{start};
  std::vector<Eigen::VectorXd> actions;
  drive(motif, steps, noise, env, rng, states, actions);
  RobotTrajectory t = pack(states, actions);
  t.hidden_motifs.push_back({motif, 0, steps});
  return t;
}

std::vector<RobotTrajectory> gen_robot_corpus(const RobotConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<RobotTrajectory> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    std::mt19937_64 rng(mix_seed(seed ^ 0x726f626f74ull, static_cast<std::uint64_t>(i)));
    std::uniform_int_distribution<int> n(cfg.min_motifs, cfg.max_motifs);
    const int count = n(rng);
    const auto motifs = pick_motifs(cfg.motifs, count, rng);
    const auto durations = split_durations(cfg.length - 1, count, 16, rng);
    std::vector<EnvState> states{random_env_state(rng)};
    std::vector<Eigen::VectorXd> actions;
    std::vector<MotifSegment> segs;
    int step = 0;
    for (int k = 0; k < count; ++k) {
      segs.push_back({motifs[k], step, step + durations[k]});
      drive(motifs[k], durations[k], cfg.controller_noise, cfg.env, rng, states, actions);
      step += durations[k];
    }
    RobotTrajectory t = pack(states, actions);
    t.hidden_motifs = std::move(segs);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RobotTrajectory> gen_robot_probes(const RobotConfig& cfg, std::span<const int> motifs,
                                              int per_motif, std::uint64_t seed) {
  cfg.validate();
  std::vector<RobotTrajectory> out;
  std::uint64_t index = 0;
  for (int m : motifs) {
    for (int k = 0; k < per_motif; ++k, ++index) {
      std::mt19937_64 rng(mix_seed(seed ^ 0x70726f6265ull, index));
      const EnvState start = random_env_state(rng);
      out.push_back(run_controller(m, start, cfg.length - 1, cfg.controller_noise, rng(), cfg.env));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

void write_matrix(io::ByteWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
  }
}

Matrix read_matrix(io::ByteReader& r, std::uint32_t cols, const char* what) {
  const std::uint64_t at = r.offset();
  const std::uint32_t rows = r.u32(what);
  if (static_cast<std::uint64_t>(rows) * cols * 4 > r.remaining()) {
    throw ParseError(std::string(what) + " block of " + std::to_string(rows) +
                         " rows exceeds remaining bytes",
                     at);
  }
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32(what);
  }
  return m;
}

struct Header {
  std::uint32_t version, kind, dim_a, dim_b, count;
  std::uint64_t seed, config_hash;
};

void write_header(io::ByteWriter& w, std::uint32_t kind, std::uint32_t dim_a, std::uint32_t dim_b,
                  std::size_t count, const CorpusMeta& meta) {
  w.bytes(std::string_view(kCorpusMagic, 8));
  w.u32(meta.version);
  w.u32(kind);
  w.u32(dim_a);
  w.u32(dim_b);
  w.u32(static_cast<std::uint32_t>(count));
  w.u64(meta.seed);
  w.u64(meta.config_hash);
}

Header read_header(io::ByteReader& r) {
  if (r.bytes(8, "corpus magic") != std::string_view(kCorpusMagic, 8)) {
    throw ParseError("not a corpus file (bad magic)", 0);
  }
  Header h{};
  const std::uint64_t vat = r.offset();
  h.version = r.u32("corpus version");
  if (h.version != 1) throw ParseError("unsupported corpus version " + std::to_string(h.version), vat);
  const std::uint64_t kat = r.offset();
  h.kind = r.u32("corpus kind");
  if (h.kind != kKindDemo && h.kind != kKindRobot) {
    throw ParseError("unknown corpus kind " + std::to_string(h.kind), kat);
  }
  const std::uint64_t dat = r.offset();
  h.dim_a = r.u32("corpus dim a");
  h.dim_b = r.u32("corpus dim b");
  if (h.dim_a == 0 || h.dim_a > 65536 || h.dim_b == 0 || h.dim_b > 65536) {
    throw ParseError("implausible corpus dimensions", dat);
  }
  h.count = r.u32("corpus count");
  h.seed = r.u64("corpus seed");
  h.config_hash = r.u64("corpus config hash");
  return h;
}

nlohmann::json labels_json(const char* kind, std::span<const std::vector<MotifSegment>> labels) {
  nlohmann::json j;
  j["kind"] = kind;
  j["count"] = labels.size();
  j["labels"] = nlohmann::json::array();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& s : labels[i]) {
      ms.push_back({{"motif", motif_name(s.motif)}, {"id", s.motif}, {"start", s.start},
                    {"end", s.end}});
    }
    j["labels"].push_back({{"index", i}, {"motifs", ms}});
  }
  return j;
}

}  // namespace

std::filesystem::path labels_path(const std::filesystem::path& corpus_path) {
  std::filesystem::path p = corpus_path;
  p += ".labels.json";
  return p;
}

void write_corpus(const DemoCorpus& corpus, const std::filesystem::path& path) {
  const std::uint32_t dv =
      corpus.items.empty() ? 16u : static_cast<std::uint32_t>(corpus.items[0].v.cols());
  io::ByteWriter w;
  write_header(w, kKindDemo, dv, tokens::kVocab, corpus.items.size(), corpus.meta);
  std::vector<std::vector<MotifSegment>> labels;
  for (const auto& t : corpus.items) {
    if (t.v.cols() != dv) throw InvalidInput("write_corpus: inconsistent frame dimension");
    write_matrix(w, t.v);
    w.u32(static_cast<std::uint32_t>(t.w.size()));
    for (int tok : t.w) w.f32(static_cast<float>(tok));
    labels.push_back(t.hidden_motifs);
  }
  io::write_file_atomic(path, w.data());
  io::write_text_atomic(labels_path(path), labels_json("demo", labels).dump(1) + "\n");
}

void write_corpus(const RobotCorpus& corpus, const std::filesystem::path& path) {
  io::ByteWriter w;
  write_header(w, kKindRobot, kStateDim, kActionDim, corpus.items.size(), corpus.meta);
  std::vector<std::vector<MotifSegment>> labels;
  for (const auto& t : corpus.items) {
    if (t.s.cols() != kStateDim || t.a.cols() != kActionDim || t.a.rows() + 1 != t.s.rows()) {
      throw InvalidInput("write_corpus: robot trajectory has inconsistent shapes");
    }
    write_matrix(w, t.s);
    write_matrix(w, t.a);
    labels.push_back(t.hidden_motifs);
  }
  io::write_file_atomic(path, w.data());
  io::write_text_atomic(labels_path(path), labels_json("robot", labels).dump(1) + "\n");
}

DemoCorpus read_demo_corpus(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path));
  const Header h = read_header(r);
  if (h.kind != kKindDemo) throw ParseError("expected a demo corpus, found robot corpus", 12);
  DemoCorpus c;
  c.meta = {h.version, h.seed, h.config_hash};
  for (std::uint32_t i = 0; i < h.count; ++i) {
    DemoTrajectory t;
    t.v = read_matrix(r, h.dim_a, "frame block");
    const std::uint64_t at = r.offset();
    const std::uint32_t n = r.u32("token block length");
    if (static_cast<std::uint64_t>(n) * 4 > r.remaining()) {
      throw ParseError("token block exceeds remaining bytes", at);
    }
    for (std::uint32_t k = 0; k < n; ++k) {
      const std::uint64_t tat = r.offset();
      const float f = r.f32("token");
      const int tok = static_cast<int>(f);
      if (static_cast<float>(tok) != f || tok < 0 || tok >= static_cast<int>(h.dim_b)) {
        throw ParseError("invalid token id", tat);
      }
      t.w.push_back(tok);
    }
    c.items.push_back(std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last trajectory", r.offset());
  return c;
}

RobotCorpus read_robot_corpus(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path));
  const Header h = read_header(r);
  if (h.kind != kKindRobot) throw ParseError("expected a robot corpus, found demo corpus", 12);
  if (h.dim_a != kStateDim || h.dim_b != kActionDim) {
    throw ParseError("robot corpus dims do not match the environment", 16);
  }
  RobotCorpus c;
  c.meta = {h.version, h.seed, h.config_hash};
  for (std::uint32_t i = 0; i < h.count; ++i) {
    RobotTrajectory t;
    t.s = read_matrix(r, h.dim_a, "state block");
    const std::uint64_t at = r.offset();
    t.a = read_matrix(r, h.dim_b, "action block");
    if (t.a.rows() + 1 != t.s.rows()) {
      throw ParseError("action block must have one row fewer than the state block", at);
    }
    c.items.push_back(std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last trajectory", r.offset());
  return c;
}

std::vector<std::vector<MotifSegment>> read_labels(const std::filesystem::path& corpus_path) {
  const auto bytes = io::read_file(labels_path(corpus_path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("label sidecar is not valid JSON: ") + e.what(), e.byte);
  }
  std::vector<std::vector<MotifSegment>> out(j.at("count").get<std::size_t>());
  for (const auto& entry : j.at("labels")) {
    const auto idx = entry.at("index").get<std::size_t>();
    if (idx >= out.size()) throw InvalidInput("label sidecar index out of range");
    for (const auto& m : entry.at("motifs")) {
      out[idx].push_back({m.at("id").get<int>(), m.at("start").get<int>(), m.at("end").get<int>()});
    }
  }
  return out;
}

nlohmann::json inspect_corpus(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path));
  const Header h = read_header(r);
  nlohmann::json j;
  j["kind"] = h.kind == kKindDemo ? "demo" : "robot";
  j["version"] = h.version;
  j["seed"] = h.seed;
  j["config_hash"] = io::hex64(h.config_hash);
  j["count"] = h.count;
  if (h.kind == kKindDemo) {
    const DemoCorpus c = read_demo_corpus(path);
    j["frame_dim"] = h.dim_a;
    j["vocab"] = h.dim_b;
    std::size_t min_m = SIZE_MAX, max_m = 0, min_n = SIZE_MAX, max_n = 0;
    for (const auto& t : c.items) {
      min_m = std::min<std::size_t>(min_m, t.v.rows());
      max_m = std::max<std::size_t>(max_m, t.v.rows());
      min_n = std::min(min_n, t.w.size());
      max_n = std::max(max_n, t.w.size());
    }
    if (!c.items.empty()) {
      j["frames"] = {min_m, max_m};
      j["tokens"] = {min_n, max_n};
    }
  } else {
    const RobotCorpus c = read_robot_corpus(path);
    j["state_dim"] = h.dim_a;
    j["action_dim"] = h.dim_b;
    std::size_t min_t = SIZE_MAX, max_t = 0;
    for (const auto& t : c.items) {
      min_t = std::min<std::size_t>(min_t, t.s.rows());
      max_t = std::max<std::size_t>(max_t, t.s.rows());
    }
    if (!c.items.empty()) j["states"] = {min_t, max_t};
  }
  return j;
}

std::uint64_t config_hash(const nlohmann::json& config) { return io::fnv1a(config.dump()); }

}  // namespace evskill::synthworld
