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

#include "evskill/homomorphism.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "evskill/binary_io.hpp"
#include "evskill/diffcore/optim.hpp"
#include "evskill/errors.hpp"

namespace evskill::homomorphism {

using backbone::BoundBackbone;
using diffcore::Tape;
using diffcore::Var;

namespace {

diffcore::SeqModelConfig model_config(const AdapterConfig& c, int depth, int in_dim, int out_dim) {
  diffcore::SeqModelConfig m;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.width = c.width;
  m.depth = depth;
  m.heads = c.heads;
  m.ffn_mult = c.ffn_mult;
  return m;
}

void check_trajectory(const AdapterParams& ad, const Matrix& s, const Matrix& a) {
  if (s.rows() < 2) throw InvalidInput("robot trajectory needs at least 2 states");
  if (s.cols() != ad.config.state_dim) {
    throw InvalidInput("state rows must be " + std::to_string(ad.config.state_dim) +
                       "-d, got " + std::to_string(s.cols()));
  }
  if (a.cols() != ad.config.action_dim) {
    throw InvalidInput("action rows must be " + std::to_string(ad.config.action_dim) +
                       "-d, got " + std::to_string(a.cols()));
  }
  if (a.rows() + 1 != s.rows()) {
    throw InvalidInput("action count must be one fewer than state count (" +
                       std::to_string(a.rows()) + " actions, " + std::to_string(s.rows()) +
                       " states)");
  }
}

void check_actions(const AdapterParams& ad, const Matrix& a) {
  if (a.rows() < 1) throw InvalidInput("action sequence is empty");
  if (a.cols() != ad.config.action_dim) {
    throw InvalidInput("action rows must be " + std::to_string(ad.config.action_dim) +
                       "-d, got " + std::to_string(a.cols()));
  }
}

void require_frozen(const BackboneParams& b) {
  if (!b.frozen) throw ContractViolation("adapter stage requires a frozen backbone");
  for (const auto* ps : b.param_sets()) {
    if (!ps->frozen()) throw ContractViolation("backbone parameter set is not frozen");
  }
}

// Tape-level adapter pieces.
struct BoundAdapters {
  BoundAdapters(Tape& t, AdapterParams& ad)
      : params(ad), f_s(t, ad.f_s), f_a(t, ad.f_a), g_s(t, ad.g_s), g_a(t, ad.g_a) {}
  BoundAdapters(Tape& t, const AdapterParams& ad, bool)
      : params(ad),
        f_s(t, ad.f_s, true),
        f_a(t, ad.f_a, true),
        g_s(t, ad.g_s, true),
        g_a(t, ad.g_a, true) {}
  const AdapterParams& params;
  diffcore::BoundModel f_s, f_a, g_s, g_a;
};

Var bound_f_s(const BoundAdapters& b, Var s) {
  return diffcore::seq2seq_forward(b.f_s, s, b.params.video_len);
}

Var bound_f_a(const BoundAdapters& b, Var a) {
  return diffcore::seq2seq_forward(b.f_a, a, b.params.text_len);
}

// Context rows: [0 | s_0] followed by [v'_t | 0]. Output row 0 is s_0 and
// rows 1..steps are s_0 + delta_t.
Var bound_g_s(const BoundAdapters& b, Var v_prime, const Eigen::VectorXd& s0, int steps) {
  Tape& tape = b.f_s.tape();
  const int dv = b.params.frame_dim;
  const int ds = b.params.config.state_dim;
  Matrix head = Matrix::Zero(1, dv + ds);
  head.rightCols(ds) = s0.transpose();
  const Var zeros = tape.constant(Matrix::Zero(v_prime.rows(), ds));
  const Var body_parts[] = {v_prime, zeros};
  const Var ctx_parts[] = {tape.constant(head), diffcore::concat_cols(body_parts)};
  Var ctx = diffcore::concat_rows(ctx_parts);
  Var delta = diffcore::seq2seq_forward(b.g_s, ctx, steps);
  const Var s0_row = tape.constant(s0.transpose());
  const Var out_parts[] = {s0_row, diffcore::add_row(delta, s0_row)};
  return diffcore::concat_rows(out_parts);
}

Var bound_g_a(const BoundAdapters& b, Var w_prime, int steps) {
  return diffcore::tanh(diffcore::seq2seq_forward(b.g_a, w_prime, steps));
}

Matrix clip_actions(Matrix a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

struct ItemLoss {
  Var objective;
  CycleLoss parts;
};

ItemLoss item_loss(const BoundAdapters& ad, const BoundBackbone& bb, const Matrix& s,
                   const Matrix& a) {
  Tape& tape = bb.tape;
  const int steps = static_cast<int>(a.rows());
  Var sv = tape.constant(s);
  Var av = tape.constant(a);
  const Eigen::VectorXd s0 = s.row(0).transpose();

  Var z_s = backbone::bb_encode_video(bb, bound_f_s(ad, sv));
  Var z_a = backbone::bb_encode_text(bb, bound_f_a(ad, av));
  Var s_rec = bound_g_s(ad, backbone::video_mean(bb, backbone::bb_decode_video(bb, z_a)), s0, steps);
  Var a_rec = bound_g_a(ad, backbone::bb_decode_text_logp(bb, z_s), steps);

  const double g = ad.params.config.gamma;
  Var st = diffcore::softdtw(sv, s_rec, g);
  Var at = diffcore::softdtw(av, a_rec, g);
  Var total = diffcore::add(st, at);
  ItemLoss out;
  out.parts.state_term = st.scalar();
  out.parts.action_term = at.scalar();
  out.parts.total = out.parts.state_term + out.parts.action_term;
  const double w = ad.params.config.aux_weight;
  if (w > 0.0) {
    Var al = diffcore::softdtw(z_s, z_a, g);
    out.parts.align_term = al.scalar();
    out.objective = diffcore::add(total, diffcore::scale(al, w));
  } else {
    out.objective = total;
  }
  return out;
}

std::string describe(const CycleLoss& c) {
  std::ostringstream os;
  os << "state=" << c.state_term << " action=" << c.action_term << " align=" << c.align_term;
  return os.str();
}

}  // namespace

void AdapterConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) throw ConfigError(std::string("homomorphism.") + key, "must be >= 1");
  };
  positive(state_dim, "state_dim");
  positive(action_dim, "action_dim");
  positive(text_len, "text_len");
  positive(batch, "batch");
  if (depth < 0) throw ConfigError("homomorphism.depth", "must be >= 0");
  if (video_len < 0) throw ConfigError("homomorphism.video_len", "must be >= 0");
  if (epochs < 0) throw ConfigError("homomorphism.epochs", "must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("homomorphism.gamma", "must be > 0");
  if (aux_weight < 0.0) throw ConfigError("homomorphism.aux_weight", "must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("homomorphism.lr", "must be > 0");
  model_config(*this, 1, 1, 1).validate("homomorphism");
}

nlohmann::json AdapterConfig::to_json() const {
  return {{"state_dim", state_dim}, {"action_dim", action_dim}, {"width", width},
          {"depth", depth},         {"heads", heads},           {"ffn_mult", ffn_mult},
          {"gamma", gamma},         {"aux_weight", aux_weight}, {"video_len", video_len},
          {"text_len", text_len},   {"epochs", epochs},         {"batch", batch},
          {"lr", lr}};
}

AdapterConfig AdapterConfig::from_json(const nlohmann::json& j) {
  AdapterConfig c;
  c.state_dim = j.at("state_dim");
  c.action_dim = j.at("action_dim");
  c.width = j.at("width");
  c.depth = j.at("depth");
  c.heads = j.at("heads");
  c.ffn_mult = j.at("ffn_mult");
  c.gamma = j.at("gamma");
  c.aux_weight = j.at("aux_weight");
  c.video_len = j.at("video_len");
  c.text_len = j.at("text_len");
  c.epochs = j.at("epochs");
  c.batch = j.at("batch");
  c.lr = j.at("lr");
  return c;
}

std::vector<diffcore::ParamSet*> AdapterParams::param_sets() {
  return {&f_s.params, &f_a.params, &g_s.params, &g_a.params};
}

std::vector<const diffcore::ParamSet*> AdapterParams::param_sets() const {
  return {&f_s.params, &f_a.params, &g_s.params, &g_a.params};
}

AdapterParams init_adapters(const AdapterConfig& c, const backbone::BackboneConfig& bb,
                            std::uint64_t seed) {
  c.validate();
  AdapterParams ad;
  ad.config = c;
  ad.frame_dim = bb.frame_dim;
  ad.token_dim = bb.token_dim;
  ad.vocab = bb.vocab;
  ad.video_len = c.video_len > 0 ? c.video_len : bb.decode_frames;
  ad.text_len = c.text_len;
  const int depth = c.depth > 0 ? c.depth : std::max(1, bb.depth / 2);
  std::mt19937_64 rng(seed ^ 0x6164617074ull);
  ad.f_s = diffcore::init_seq_model(model_config(c, depth, c.state_dim, bb.frame_dim), rng());
  ad.f_a = diffcore::init_seq_model(model_config(c, depth, c.action_dim, bb.token_dim), rng());
  ad.g_s = diffcore::init_seq_model(
      model_config(c, depth, bb.frame_dim + c.state_dim, c.state_dim), rng());
  ad.g_a = diffcore::init_seq_model(model_config(c, depth, bb.vocab, c.action_dim), rng());
  return ad;
}

ModalityInputs f_map(const AdapterParams& ad, const Matrix& s, const Matrix& a) {
  check_trajectory(ad, s, a);
  return {diffcore::seq2seq_forward(ad.f_s, s, ad.video_len),
          diffcore::seq2seq_forward(ad.f_a, a, ad.text_len)};
}

RobotReconstruction g_map(const AdapterParams& ad, const Matrix& v_prime, const Matrix& w_prime,
                          const Eigen::VectorXd& s0, int steps) {
  if (steps < 1) throw InvalidInput("g_map: steps must be >= 1");
  if (v_prime.cols() != ad.frame_dim) throw InvalidInput("g_map: decoded frames have wrong width");
  if (w_prime.cols() != ad.vocab) throw InvalidInput("g_map: token distributions have wrong width");
  if (s0.size() != ad.config.state_dim) throw InvalidInput("g_map: s0 has wrong dimension");
  Tape tape;
  BoundAdapters b(tape, ad, true);
  RobotReconstruction out;
  out.s = bound_g_s(b, tape.constant(v_prime), s0, steps).value();
  out.a = clip_actions(bound_g_a(b, tape.constant(w_prime), steps).value());
  return out;
}

CycleLoss cycle_loss(AdapterParams& ad, BackboneParams& backbone, const Matrix& s, const Matrix& a,
                     bool with_grad) {
  const RobotTrajectory t{s, a, {}};
  return cycle_loss(ad, backbone, std::span<const RobotTrajectory>(&t, 1), with_grad);
}

CycleLoss cycle_loss(AdapterParams& ad, BackboneParams& backbone,
                     std::span<const RobotTrajectory> batch, bool with_grad) {
  require_frozen(backbone);
  if (batch.empty()) throw InvalidInput("cycle_loss: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  CycleLoss out;
  for (const auto& t : batch) {
    check_trajectory(ad, t.s, t.a);
    Tape tape;
    BoundBackbone bb(tape, backbone);
    BoundAdapters b(tape, ad);
    ItemLoss l = item_loss(b, bb, t.s, t.a);
    if (!std::isfinite(l.objective.scalar())) {
      throw NumericalError("cycle_loss: non-finite loss (" + describe(l.parts) + ")");
    }
    out.state_term += inv * l.parts.state_term;
    out.action_term += inv * l.parts.action_term;
    out.align_term += inv * l.parts.align_term;
    if (with_grad) tape.backward(diffcore::scale(l.objective, inv));
  }
  out.total = out.state_term + out.action_term;
  return out;
}

DistillResult distill(std::span<const RobotTrajectory> dataset, BackboneParams& frozen_backbone,
                      const AdapterConfig& config, std::uint64_t seed,
                      std::span<const int> snapshot_epochs, const DistillCallback& on_epoch) {
  require_frozen(frozen_backbone);
  config.validate();
  if (dataset.empty()) throw InvalidInput("distill: empty dataset");
  std::vector<RobotTrajectory> data;
  data.reserve(dataset.size());
  for (const auto& t : dataset) data.push_back({t.s, t.a, {}});

  DistillResult res;
  res.adapters = init_adapters(config, frozen_backbone.config, seed);
  AdapterParams& ad = res.adapters;
  if (config.epochs == 0) return res;
  res.initial_loss = cycle_loss(ad, frozen_backbone, data).total;

  std::vector<diffcore::OptimizerState> opt;
  for (auto* ps : ad.param_sets()) opt.push_back(diffcore::make_optimizer_state(*ps));
  const diffcore::AdamHyper hyper{config.lr};
  std::mt19937_64 rng(seed ^ 0x64697374696c6cull);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  int over = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    DistillRow row;
    row.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto* ps : ad.param_sets()) ps->zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const RobotTrajectory& t = data[order[k]];
        Tape tape;
        BoundBackbone bb(tape, frozen_backbone);
        BoundAdapters b(tape, ad);
        ItemLoss l = item_loss(b, bb, t.s, t.a);
        if (!std::isfinite(l.objective.scalar())) {
          throw NumericalError("distill: non-finite loss at epoch " + std::to_string(epoch) +
                               " (" + describe(l.parts) + ")");
        }
        row.state_term += l.parts.state_term;
        row.action_term += l.parts.action_term;
        row.align_term += l.parts.align_term;
        tape.backward(diffcore::scale(l.objective, inv));
      }
      auto sets = ad.param_sets();
      for (std::size_t s = 0; s < sets.size(); ++s) diffcore::adam_step(*sets[s], opt[s], hyper);
    }
    const double n = static_cast<double>(data.size());
    row.state_term /= n;
    row.action_term /= n;
    row.align_term /= n;
    row.total = row.state_term + row.action_term;
    row.objective = row.total + config.aux_weight * row.align_term;
    res.curve.push_back(row);
    if (on_epoch) on_epoch(row);
    if (std::find(snapshot_epochs.begin(), snapshot_epochs.end(), epoch) != snapshot_epochs.end()) {
      res.snapshots.emplace(epoch, ad);
    }
    over = row.total > 10.0 * std::abs(res.initial_loss) ? over + 1 : 0;
    if (over >= 3) {
      throw NumericalError("distill diverged: epoch " + std::to_string(epoch) + " loss " +
                           std::to_string(row.total) + " exceeds 10x initial " +
                           std::to_string(res.initial_loss) + " for 3 epochs");
    }
  }
  return res;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const DistillRow> curve) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,total,state,action,align,objective\n";
  for (const auto& r : curve) {
    os << r.epoch << ',' << r.total << ',' << r.state_term << ',' << r.action_term << ','
       << r.align_term << ',' << r.objective << '\n';
  }
  io::write_text_atomic(path, os.str());
}

EventLatents embed_robot_skills(const AdapterParams& ad, const BackboneParams& backbone,
                                const Matrix& s, const Matrix& a) {
  check_trajectory(ad, s, a);
  const Matrix v_hat = diffcore::seq2seq_forward(ad.f_s, s, ad.video_len);
  EventLatents z = backbone::encode_video(backbone, v_hat);
  z.source = backbone::Source::kRobot;
  return z;
}

EventLatents embed_robot_actions(const AdapterParams& ad, const BackboneParams& backbone,
                                 const Matrix& a) {
  check_actions(ad, a);
  const Matrix w_hat = diffcore::seq2seq_forward(ad.f_a, a, ad.text_len);
  return {diffcore::seq2seq_forward(backbone.enc_text, w_hat, backbone.config.events),
          backbone::Source::kRobot};
}

Matrix predict_states(const AdapterParams& ad, const BackboneParams& backbone,
                      const Eigen::VectorXd& s0, const Matrix& a) {
  check_actions(ad, a);
  if (s0.size() != ad.config.state_dim) throw InvalidInput("predict_states: s0 has wrong dimension");
  const EventLatents z = embed_robot_actions(ad, backbone, a);
  const backbone::VideoPrediction v = backbone::decode_video(backbone, z);
  Tape tape;
  BoundAdapters b(tape, ad, true);
  return bound_g_s(b, tape.constant(v.mean), s0, static_cast<int>(a.rows())).value();
}

Matrix actions_from_latents(const AdapterParams& ad, const BackboneParams& backbone,
                            const EventLatents& z, int steps) {
  if (steps < 1) throw InvalidInput("actions_from_latents: steps must be >= 1");
  const Matrix w = backbone::decode_text_logp(backbone, z);
  return clip_actions(diffcore::seq2seq_forward(ad.g_a, w, steps).array().tanh().matrix());
}

diffcore::Checkpoint to_checkpoint(const AdapterParams& ad, std::uint64_t seed,
                                   const nlohmann::json& extra) {
  diffcore::Checkpoint c;
  c.header = {{"kind", "adapters"},
              {"seed", seed},
              {"config", ad.config.to_json()},
              {"frame_dim", ad.frame_dim},
              {"token_dim", ad.token_dim},
              {"vocab", ad.vocab},
              {"video_len", ad.video_len},
              {"text_len", ad.text_len},
              {"depth", ad.f_s.config.depth}};
  for (const auto& [k, v] : extra.items()) c.header[k] = v;
  diffcore::export_params(c, "f_s/", ad.f_s.params);
  diffcore::export_params(c, "f_a/", ad.f_a.params);
  diffcore::export_params(c, "g_s/", ad.g_s.params);
  diffcore::export_params(c, "g_a/", ad.g_a.params);
  return c;
}

AdapterParams from_checkpoint(const diffcore::Checkpoint& ckpt) {
  if (ckpt.header.value("kind", "") != "adapters") {
    throw InvalidInput("checkpoint is not an adapter checkpoint");
  }
  const auto& h = ckpt.header;
  backbone::BackboneConfig bb;
  bb.frame_dim = h.at("frame_dim");
  bb.token_dim = h.at("token_dim");
  bb.vocab = h.at("vocab");
  bb.decode_frames = h.at("video_len");
  AdapterConfig c = AdapterConfig::from_json(h.at("config"));
  c.depth = h.at("depth");
  c.video_len = h.at("video_len");
  c.text_len = h.at("text_len");
  AdapterParams ad = init_adapters(c, bb, 0);
  ad.config = AdapterConfig::from_json(h.at("config"));
  diffcore::import_params(ckpt, "f_s/", ad.f_s.params);
  diffcore::import_params(ckpt, "f_a/", ad.f_a.params);
  diffcore::import_params(ckpt, "g_s/", ad.g_s.params);
  diffcore::import_params(ckpt, "g_a/", ad.g_a.params);
  return ad;
}

}  // namespace evskill::homomorphism
