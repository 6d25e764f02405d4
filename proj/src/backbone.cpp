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

#include "evskill/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "evskill/binary_io.hpp"
#include "evskill/diffcore/optim.hpp"
#include "evskill/errors.hpp"

namespace evskill::backbone {

using diffcore::Tape;
using diffcore::Var;

namespace {

diffcore::SeqModelConfig model_config(const BackboneConfig& c, int in_dim, int out_dim) {
  diffcore::SeqModelConfig m;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.width = c.width;
  m.depth = c.depth;
  m.heads = c.heads;
  m.ffn_mult = c.ffn_mult;
  return m;
}

std::vector<int> strip_pad(std::span<const int> w) {
  std::vector<int> out;
  for (int t : w) {
    if (t != synthworld::tokens::kPad) out.push_back(t);
  }
  if (out.empty()) throw InvalidInput("token sequence is empty or padding only");
  return out;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + " contains non-finite values");
}

void check_latents(const BackboneParams& p, const EventLatents& z) {
  if (z.z.rows() != p.config.events || z.z.cols() != p.config.latent_dim) {
    throw InvalidInput("event latents must be " + std::to_string(p.config.events) + "x" +
                       std::to_string(p.config.latent_dim) + ", got " +
                       std::to_string(z.z.rows()) + "x" + std::to_string(z.z.cols()));
  }
  require_finite(z.z, "event latents");
}

struct ItemLoss {
  Var total;
  LossComponents parts;
};

ItemLoss item_loss(const BoundBackbone& b, const DemoTrajectory& t, double alpha, double beta,
                   std::mt19937_64* noise_rng) {
  const BackboneConfig& c = b.config;
  Tape& tape = b.tape;
  Var v = tape.constant(t.v);
  Var zv = bb_encode_video(b, v);
  Var zw = bb_encode_text(b, token_inputs(b, t.w));
  if (noise_rng != nullptr && c.latent_noise > 0.0) {
    std::normal_distribution<double> n(0.0, c.latent_noise);
    auto noisy = [&](Var z) {
      Matrix eps(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = n(*noise_rng);
      return add(z, tape.constant(eps));
    };
    zv = noisy(zv);
    zw = noisy(zw);
  }
  Var w_logp = bb_decode_text_logp(b, zv);
  Var v_pred = video_mean(b, bb_decode_video(b, zw));

  Var video = diffcore::softdtw(v, v_pred, c.gamma);
  Var align = diffcore::softdtw(zv, zw, c.gamma);
  Var text = diffcore::softdtw_cost(token_cost(tape.constant(one_hot_tokens(t.w, c.vocab)), w_logp),
                                    c.gamma);
  ItemLoss out;
  out.parts = {video.scalar(), align.scalar(), text.scalar()};
  out.total = add(add(video, scale(align, alpha)), scale(text, beta));
  return out;
}

std::string describe(const LossComponents& c) {
  std::ostringstream os;
  os << "video=" << c.video << " align=" << c.align << " text=" << c.text;
  return os.str();
}

}  // namespace

const char* source_name(Source s) {
  switch (s) {
    case Source::kVideo: return "video";
    case Source::kText: return "text";
    case Source::kRobot: return "robot";
  }
  return "unknown";
}

void BackboneConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) throw ConfigError(std::string("backbone.") + key, "must be >= 1");
  };
  positive(frame_dim, "frame_dim");
  positive(vocab, "vocab");
  positive(token_dim, "token_dim");
  positive(latent_dim, "latent_dim");
  positive(events, "events");
  positive(decode_frames, "decode_frames");
  positive(decode_tokens, "decode_tokens");
  positive(batch, "batch");
  if (epochs < 0) throw ConfigError("backbone.epochs", "must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("backbone.gamma", "must be > 0");
  if (!(alpha > 0.0)) throw ConfigError("backbone.alpha", "must be > 0");
  if (!(beta > 0.0)) throw ConfigError("backbone.beta", "must be > 0");
  if (!(var_floor > 0.0)) throw ConfigError("backbone.var_floor", "must be > 0");
  if (latent_noise < 0.0) throw ConfigError("backbone.latent_noise", "must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("backbone.lr", "must be > 0");
  model_config(*this, 1, 1).validate("backbone");
}

nlohmann::json BackboneConfig::to_json() const {
  return {{"frame_dim", frame_dim},   {"vocab", vocab},
          {"token_dim", token_dim},   {"latent_dim", latent_dim},
          {"events", events},         {"decode_frames", decode_frames},
          {"decode_tokens", decode_tokens}, {"width", width},
          {"depth", depth},           {"heads", heads},
          {"ffn_mult", ffn_mult},     {"gamma", gamma},
          {"alpha", alpha},           {"beta", beta},
          {"var_floor", var_floor},   {"latent_noise", latent_noise},
          {"epochs", epochs},         {"batch", batch},
          {"lr", lr}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.frame_dim = j.at("frame_dim");
  c.vocab = j.at("vocab");
  c.token_dim = j.at("token_dim");
  c.latent_dim = j.at("latent_dim");
  c.events = j.at("events");
  c.decode_frames = j.at("decode_frames");
  c.decode_tokens = j.at("decode_tokens");
  c.width = j.at("width");
  c.depth = j.at("depth");
  c.heads = j.at("heads");
  c.ffn_mult = j.at("ffn_mult");
  c.gamma = j.at("gamma");
  c.alpha = j.at("alpha");
  c.beta = j.at("beta");
  c.var_floor = j.at("var_floor");
  c.latent_noise = j.at("latent_noise");
  c.epochs = j.at("epochs");
  c.batch = j.at("batch");
  c.lr = j.at("lr");
  return c;
}

void BackboneParams::set_frozen(bool f) {
  frozen = f;
  for (auto* ps : param_sets()) ps->set_frozen(f);
}

std::vector<diffcore::ParamSet*> BackboneParams::param_sets() {
  return {&embed, &enc_video.params, &enc_text.params, &dec_text.params, &dec_video.params};
}

std::vector<const diffcore::ParamSet*> BackboneParams::param_sets() const {
  return {&embed, &enc_video.params, &enc_text.params, &dec_text.params, &dec_video.params};
}

BackboneParams init_backbone(const BackboneConfig& c, std::uint64_t seed) {
  c.validate();
  BackboneParams p;
  p.config = c;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix emb(c.vocab, c.token_dim);
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = n(rng);
  p.embed.add("tok.emb", emb);
  p.enc_video = diffcore::init_seq_model(model_config(c, c.frame_dim, c.latent_dim), rng());
  p.enc_text = diffcore::init_seq_model(model_config(c, c.token_dim, c.latent_dim), rng());
  p.dec_text = diffcore::init_seq_model(model_config(c, c.latent_dim, c.vocab), rng());
  p.dec_video = diffcore::init_seq_model(model_config(c, c.latent_dim, 2 * c.frame_dim), rng());
  return p;
}

BoundBackbone::BoundBackbone(Tape& t, BackboneParams& p)
    : tape(t),
      config(p.config),
      embed(t.bind(p.embed[0], p.embed.frozen())),
      enc_video(t, p.enc_video),
      enc_text(t, p.enc_text),
      dec_text(t, p.dec_text),
      dec_video(t, p.dec_video) {}

Var token_inputs(const BoundBackbone& b, std::span<const int> w) {
  const std::vector<int> ids = strip_pad(w);
  for (int id : ids) {
    if (id < 0 || id >= b.config.vocab) {
      throw InvalidInput("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(b.config.vocab));
    }
  }
  return diffcore::gather_rows(b.embed, ids);
}

Var bb_encode_video(const BoundBackbone& b, Var v) {
  if (v.cols() != b.config.frame_dim) {
    throw InvalidInput("encode_video: expected " + std::to_string(b.config.frame_dim) +
                       "-d frames, got " + std::to_string(v.cols()));
  }
  return diffcore::seq2seq_forward(b.enc_video, v, b.config.events);
}

Var bb_encode_text(const BoundBackbone& b, Var embedded) {
  return diffcore::seq2seq_forward(b.enc_text, embedded, b.config.events);
}

Var bb_decode_text(const BoundBackbone& b, Var z, int length) {
  const int n = length > 0 ? length : b.config.decode_tokens;
  return diffcore::softmax_rows(diffcore::seq2seq_forward(b.dec_text, z, n));
}

Var bb_decode_text_logp(const BoundBackbone& b, Var z, int length) {
  const int n = length > 0 ? length : b.config.decode_tokens;
  return diffcore::log_softmax_rows(diffcore::seq2seq_forward(b.dec_text, z, n));
}

Var token_cost(Var one_hot, Var logp) {
  return diffcore::scale(diffcore::matmul_nt(one_hot, logp), -1.0);
}

Var bb_decode_video(const BoundBackbone& b, Var z, int length) {
  const int m = length > 0 ? length : b.config.decode_frames;
  Var raw = diffcore::seq2seq_forward(b.dec_video, z, m);
  Var mean = diffcore::slice_cols(raw, 0, b.config.frame_dim);
  Var var = diffcore::add_scalar(
      diffcore::softplus(diffcore::slice_cols(raw, b.config.frame_dim, b.config.frame_dim)),
      b.config.var_floor);
  const Var parts[] = {mean, var};
  return diffcore::concat_cols(parts);
}

Var video_mean(const BoundBackbone& b, Var decoded) {
  return diffcore::slice_cols(decoded, 0, b.config.frame_dim);
}

Matrix one_hot_tokens(std::span<const int> w, int vocab) {
  const std::vector<int> ids = strip_pad(w);
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), vocab);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) throw InvalidInput("token id outside vocabulary");
    m(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
  }
  return m;
}

EventLatents encode_video(const BackboneParams& p, const Matrix& v) {
  if (v.rows() < 1) throw InvalidInput("encode_video: no frames");
  if (v.cols() != p.config.frame_dim) {
    throw InvalidInput("encode_video: expected " + std::to_string(p.config.frame_dim) +
                       "-d frames, got " + std::to_string(v.cols()));
  }
  require_finite(v, "frame sequence");
  return {diffcore::seq2seq_forward(p.enc_video, v, p.config.events), Source::kVideo};
}

EventLatents encode_text(const BackboneParams& p, std::span<const int> w) {
  const std::vector<int> ids = strip_pad(w);
  Matrix e(static_cast<Eigen::Index>(ids.size()), p.config.token_dim);
  const Matrix& table = p.embed[0].value;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= p.config.vocab) throw InvalidInput("token id outside vocabulary");
    e.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  }
  return {diffcore::seq2seq_forward(p.enc_text, e, p.config.events), Source::kText};
}

Matrix decode_text_logp(const BackboneParams& p, const EventLatents& z) {
  check_latents(p, z);
  Matrix logits = diffcore::seq2seq_forward(p.dec_text, z.z, p.config.decode_tokens);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

Matrix decode_text(const BackboneParams& p, const EventLatents& z) {
  return decode_text_logp(p, z).array().exp().matrix();
}

VideoPrediction decode_video(const BackboneParams& p, const EventLatents& z, int length) {
  check_latents(p, z);
  const int m = length > 0 ? length : p.config.decode_frames;
  const int d = p.config.frame_dim;
  const Matrix raw = diffcore::seq2seq_forward(p.dec_video, z.z, m);
  VideoPrediction out;
  out.mean = raw.leftCols(d);
  out.variance = raw.rightCols(d).unaryExpr([&](double x) {
    const double sp = x > 30.0 ? x : std::log1p(std::exp(x));
    return sp + p.config.var_floor;
  });
  return out;
}

double gaussian_nll(const Matrix& x, const Matrix& mean, const Matrix& variance) {
  if (x.rows() != mean.rows() || x.cols() != mean.cols() || x.rows() != variance.rows() ||
      x.cols() != variance.cols()) {
    throw InvalidInput("gaussian_nll: shape mismatch");
  }
  if ((variance.array() <= 0.0).any()) throw InvalidInput("gaussian_nll: variance must be > 0");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return 0.5 * ((variance.array().log() + log2pi) +
                (x - mean).array().square() / variance.array())
                   .sum();
}

PretrainLoss pretrain_loss(BackboneParams& p, std::span<const DemoTrajectory> batch, double alpha,
                           double beta, bool with_grad) {
  if (batch.empty()) throw InvalidInput("pretrain_loss: empty batch");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidInput("pretrain_loss: alpha, beta must be > 0");
  PretrainLoss out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    Tape tape;
    BoundBackbone b(tape, p);
    ItemLoss l = item_loss(b, t, alpha, beta, nullptr);
    const double total = l.total.scalar();
    if (!std::isfinite(total)) {
      throw NumericalError("pretrain_loss: non-finite loss (" + describe(l.parts) + ")");
    }
    out.components.video += inv * l.parts.video;
    out.components.align += inv * l.parts.align;
    out.components.text += inv * l.parts.text;
    if (with_grad) tape.backward(scale(l.total, inv));
  }
  out.total = out.components.video + alpha * out.components.align + beta * out.components.text;
  return out;
}

PretrainResult pretrain(std::span<const DemoTrajectory> dataset, const BackboneConfig& config,
                        std::uint64_t seed, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw InvalidInput("pretrain: empty dataset");
  // Training never sees motif labels.
  std::vector<DemoTrajectory> data;
  data.reserve(dataset.size());
  for (const auto& t : dataset) data.push_back({t.v, t.w, {}});

  PretrainResult res;
  res.params = init_backbone(config, seed);
  BackboneParams& p = res.params;
  if (config.epochs == 0) return res;

  res.initial_loss = pretrain_loss(p, data, config.alpha, config.beta).total;
  std::vector<diffcore::OptimizerState> opt;
  for (auto* ps : p.param_sets()) opt.push_back(diffcore::make_optimizer_state(*ps));
  const diffcore::AdamHyper hyper{config.lr};

  std::mt19937_64 rng(seed ^ 0x6261636b626f6e65ull);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  int over = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    CurveRow row;
    row.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto* ps : p.param_sets()) ps->zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        Tape tape;
        BoundBackbone b(tape, p);
        ItemLoss l = item_loss(b, data[order[k]], config.alpha, config.beta, &rng);
        const double total = l.total.scalar();
        if (!std::isfinite(total)) {
          throw NumericalError("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                               " (" + describe(l.parts) + ")");
        }
        row.components.video += l.parts.video;
        row.components.align += l.parts.align;
        row.components.text += l.parts.text;
        tape.backward(scale(l.total, inv));
      }
      auto sets = p.param_sets();
      for (std::size_t s = 0; s < sets.size(); ++s) diffcore::adam_step(*sets[s], opt[s], hyper);
    }
    const double n = static_cast<double>(data.size());
    row.components.video /= n;
    row.components.align /= n;
    row.components.text /= n;
    row.total = row.components.video + config.alpha * row.components.align +
                config.beta * row.components.text;
    res.curve.push_back(row);
    if (on_epoch) on_epoch(row);
    over = row.total > 10.0 * std::abs(res.initial_loss) ? over + 1 : 0;
    if (over >= 3) {
      throw NumericalError("pretrain diverged: epoch " + std::to_string(epoch) + " loss " +
                           std::to_string(row.total) + " exceeds 10x initial " +
                           std::to_string(res.initial_loss) + " for 3 epochs (" +
                           describe(row.components) + ")");
    }
  }
  return res;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> curve) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,total,video,align,text\n";
  for (const auto& r : curve) {
    os << r.epoch << ',' << r.total << ',' << r.components.video << ',' << r.components.align
       << ',' << r.components.text << '\n';
  }
  io::write_text_atomic(path, os.str());
}

std::vector<Interval> segment_events(const BackboneParams& p, const Matrix& v) {
  const EventLatents z = encode_video(p, v);
  const int m = static_cast<int>(v.rows());
  const int k = p.config.events;
  if (k == 1) return {{0, m}};
  diffcore::ForwardTrace trace;
  (void)diffcore::seq2seq_forward(p.dec_video, z.z, m, &trace);
  const Matrix& mass = trace.cross_attention;  // m x K

  struct Run {
    int start, end, slot;
  };
  std::vector<Run> runs;
  for (int t = 0; t < m; ++t) {
    Eigen::Index slot = 0;
    mass.row(t).maxCoeff(&slot);
    if (!runs.empty() && runs.back().slot == slot) {
      runs.back().end = t + 1;
    } else {
      runs.push_back({t, t + 1, static_cast<int>(slot)});
    }
  }
  // Merge the shortest run into the neighbour whose slot claims more of its
  // attention mass until at most K runs remain.
  auto claim = [&](const Run& r, int slot) {
    return mass.block(r.start, slot, r.end - r.start, 1).sum();
  };
  while (static_cast<int>(runs.size()) > k) {
    std::size_t s = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
      if (runs[i].end - runs[i].start < runs[s].end - runs[s].start) s = i;
    }
    std::size_t into;
    if (s == 0) {
      into = 1;
    } else if (s + 1 == runs.size()) {
      into = s - 1;
    } else {
      into = claim(runs[s], runs[s - 1].slot) >= claim(runs[s], runs[s + 1].slot) ? s - 1 : s + 1;
    }
    runs[into].start = std::min(runs[into].start, runs[s].start);
    runs[into].end = std::max(runs[into].end, runs[s].end);
    runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(s));
    // Adjacent runs may now share a slot.
    for (std::size_t i = 1; i < runs.size();) {
      if (runs[i].slot == runs[i - 1].slot) {
        runs[i - 1].end = runs[i].end;
        runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
  }
  std::vector<Interval> out;
  for (const auto& r : runs) out.push_back({r.start, r.end});
  return out;
}

diffcore::Checkpoint to_checkpoint(const BackboneParams& p, std::uint64_t seed,
                                   const nlohmann::json& extra) {
  diffcore::Checkpoint c;
  c.header = {{"kind", "backbone"}, {"seed", seed}, {"config", p.config.to_json()}};
  for (const auto& [k, v] : extra.items()) c.header[k] = v;
  diffcore::export_params(c, "embed/", p.embed);
  diffcore::export_params(c, "enc_video/", p.enc_video.params);
  diffcore::export_params(c, "enc_text/", p.enc_text.params);
  diffcore::export_params(c, "dec_text/", p.dec_text.params);
  diffcore::export_params(c, "dec_video/", p.dec_video.params);
  return c;
}

BackboneParams from_checkpoint(const diffcore::Checkpoint& ckpt) {
  if (ckpt.header.value("kind", "") != "backbone") {
    throw InvalidInput("checkpoint is not a backbone checkpoint");
  }
  BackboneParams p = init_backbone(BackboneConfig::from_json(ckpt.header.at("config")), 0);
  diffcore::import_params(ckpt, "embed/", p.embed);
  diffcore::import_params(ckpt, "enc_video/", p.enc_video.params);
  diffcore::import_params(ckpt, "enc_text/", p.enc_text.params);
  diffcore::import_params(ckpt, "dec_text/", p.dec_text.params);
  diffcore::import_params(ckpt, "dec_video/", p.dec_video.params);
  return p;
}

}  // namespace evskill::backbone
