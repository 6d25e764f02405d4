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

#include "evskill/diffcore/seq2seq.hpp"

#include <cmath>
#include <random>

#include "evskill/errors.hpp"

namespace evskill::diffcore {
namespace {

std::string block(const char* part, int layer, const char* leaf) {
  return std::string(part) + "." + std::to_string(layer) + "." + leaf;
}

void add_norm(ParamSet& ps, const std::string& prefix, int width) {
  ps.add(prefix + ".g", Matrix::Ones(1, width));
  ps.add(prefix + ".b", Matrix::Zero(1, width));
}

Var norm(const BoundModel& m, const std::string& prefix, Var x) {
  return layer_norm_rows(x, m(prefix + ".g"), m(prefix + ".b"));
}

// Multi-head attention of `queries` over `keys` (rows are positions).
Var attention(const BoundModel& m, const std::string& prefix, Var queries, Var keys,
              Matrix* mass) {
  const int width = m.config().width;
  const int heads = m.config().heads;
  const int dh = width / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = matmul(queries, m(prefix + ".q"));
  Var k = matmul(keys, m(prefix + ".k"));
  Var v = matmul(keys, m(prefix + ".v"));
  std::vector<Var> outs;
  outs.reserve(heads);
  if (mass != nullptr) *mass = Matrix::Zero(queries.rows(), keys.rows());
  for (int h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var p = softmax_rows(scale(matmul_nt(qh, kh), inv));
    if (mass != nullptr) *mass += p.value() / double(heads);
    outs.push_back(matmul(p, vh));
  }
  Var cat = heads == 1 ? outs[0] : concat_cols(outs);
  return add_row(matmul(cat, m(prefix + ".o")), m(prefix + ".bo"));
}

Var feed_forward(const BoundModel& m, const std::string& prefix, Var x) {
  Var h = gelu(add_row(matmul(x, m(prefix + ".w1")), m(prefix + ".b1")));
  return add_row(matmul(h, m(prefix + ".w2")), m(prefix + ".b2"));
}

}  // namespace

void SeqModelConfig::validate(const std::string& where) const {
  auto positive = [&](int v, const char* key) {
    if (v < 1) throw ConfigError(where + "." + key, "must be >= 1, got " + std::to_string(v));
  };
  positive(in_dim, "in_dim");
  positive(out_dim, "out_dim");
  positive(width, "width");
  positive(depth, "depth");
  positive(heads, "heads");
  positive(ffn_mult, "ffn_mult");
  if (width % heads != 0) {
    throw ConfigError(where + ".heads", "width " + std::to_string(width) +
                                            " is not divisible by head count " +
                                            std::to_string(heads));
  }
}

SeqModel init_seq_model(const SeqModelConfig& config, std::uint64_t seed) {
  config.validate("seq_model");
  SeqModel model;
  model.config = config;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto dense = [&](int fan_in, int fan_out) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal(rng);
    return w;
  };
  const int w = config.width;
  const int f = config.width * config.ffn_mult;
  ParamSet& ps = model.params;

  ps.add("in.w", dense(config.in_dim, w));
  ps.add("in.b", Matrix::Zero(1, w));
  for (const char* part : {"enc", "dec"}) {
    for (int l = 0; l < config.depth; ++l) {
      add_norm(ps, block(part, l, "ln1"), w);
      for (const char* leaf : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
        ps.add(block(part, l, leaf), dense(w, w));
      }
      ps.add(block(part, l, "attn.bo"), Matrix::Zero(1, w));
      add_norm(ps, block(part, l, "ln2"), w);
      ps.add(block(part, l, "ffn.w1"), dense(w, f));
      ps.add(block(part, l, "ffn.b1"), Matrix::Zero(1, f));
      ps.add(block(part, l, "ffn.w2"), dense(f, w));
      ps.add(block(part, l, "ffn.b2"), Matrix::Zero(1, w));
    }
    if (std::string(part) == "enc") {
      add_norm(ps, "enc.ln", w);
      ps.add("query.w", dense(w, w));
      ps.add("query.b", Matrix::Zero(1, w));
    }
  }
  add_norm(ps, "dec.ln", w);
  ps.add("out.w", dense(w, config.out_dim));
  ps.add("out.b", Matrix::Zero(1, config.out_dim));
  return model;
}

Matrix positional_table(Eigen::Index length, int width) {
  Matrix pe(length, width);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

BoundModel::BoundModel(Tape& tape, SeqModel& model) : tape_(&tape), config_(&model.config) {
  const bool frozen = model.params.frozen();
  vars_.reserve(model.params.size());
  for (auto& p : model.params) vars_.emplace_back(p.name, tape.bind(p, frozen));
}

BoundModel::BoundModel(Tape& tape, const SeqModel& model, bool)
    : tape_(&tape), config_(&model.config) {
  vars_.reserve(model.params.size());
  for (const auto& p : model.params) vars_.emplace_back(p.name, tape.bind_constant(p));
}

Var BoundModel::operator()(const std::string& name) const {
  for (const auto& [n, v] : vars_) {
    if (n == name) return v;
  }
  throw ContractViolation("unknown parameter '" + name + "'");
}

Var seq2seq_forward(const BoundModel& m, Var input, int out_len, ForwardTrace* trace) {
  const SeqModelConfig& cfg = m.config();
  if (input.rows() < 1) throw InvalidInput("seq2seq_forward: input sequence is empty");
  if (input.cols() != cfg.in_dim) {
    throw InvalidInput("seq2seq_forward: expected input dim " + std::to_string(cfg.in_dim) +
                       ", got " + std::to_string(input.cols()));
  }
  if (out_len < 1) throw InvalidInput("seq2seq_forward: out_len must be >= 1");
  Tape& tape = m.tape();

  Var h = add_row(matmul(input, m("in.w")), m("in.b"));
  h = add(h, tape.constant(positional_table(input.rows(), cfg.width)));
  for (int l = 0; l < cfg.depth; ++l) {
    Var x = norm(m, block("enc", l, "ln1"), h);
    h = add(h, attention(m, block("enc", l, "attn"), x, x, nullptr));
    h = add(h, feed_forward(m, block("enc", l, "ffn"), norm(m, block("enc", l, "ln2"), h)));
  }
  Var memory = norm(m, "enc.ln", h);

  Var q = add_row(matmul(tape.constant(positional_table(out_len, cfg.width)), m("query.w")),
                  m("query.b"));
  for (int l = 0; l < cfg.depth; ++l) {
    Matrix* mass = (trace != nullptr && l == cfg.depth - 1) ? &trace->cross_attention : nullptr;
    q = add(q, attention(m, block("dec", l, "attn"), norm(m, block("dec", l, "ln1"), q), memory,
                         mass));
    q = add(q, feed_forward(m, block("dec", l, "ffn"), norm(m, block("dec", l, "ln2"), q)));
  }
  return add_row(matmul(norm(m, "dec.ln", q), m("out.w")), m("out.b"));
}

Matrix seq2seq_forward(const SeqModel& model, const Matrix& input, int out_len,
                       ForwardTrace* trace) {
  Tape tape;
  BoundModel bound(tape, model, true);
  return seq2seq_forward(bound, tape.constant(input), out_len, trace).value();
}

}  // namespace evskill::diffcore
