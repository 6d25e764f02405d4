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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "evskill/diffcore/checkpoint.hpp"
#include "evskill/diffcore/optim.hpp"
#include "evskill/diffcore/seq2seq.hpp"
#include "evskill/diffcore/tape.hpp"
#include "evskill/errors.hpp"
#include "oracles.hpp"

namespace dc = evskill::diffcore;
using dc::Tape;
using dc::Var;
using oracle::Mat;

namespace {

using Op = std::function<Var(Tape&, Var)>;

// Contracts op(x) with a fixed random weight so every output entry matters.
double contracted(const Op& op, const Mat& x, Mat* grad) {
  dc::ParamSet ps;
  dc::Param& p = ps.add("x", x);
  Tape t;
  Var out = op(t, t.leaf(p));
  std::mt19937_64 rng(99);
  Var w = t.constant(oracle::random_matrix(out.rows(), out.cols(), rng));
  Var root = dc::sum(dc::hadamard(out, w));
  if (grad != nullptr) {
    t.backward(root);
    *grad = p.grad;
  }
  return root.scalar();
}

void check_op(const char* name, const Op& op, const Mat& x, double tol = 1e-6) {
  INFO(name);
  Mat g;
  contracted(op, x, &g);
  REQUIRE(g.rows() == x.rows());
  REQUIRE(g.cols() == x.cols());
  auto f = [&](const Mat& xx) { return contracted(op, xx, nullptr); };
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double num = oracle::central_diff(f, x, k, 1e-6);
    CHECK(oracle::rel_error(g.data()[k], num, 1e-6) < tol);
  }
}

}  // namespace

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(1);
  const Mat x = oracle::random_matrix(4, 3, rng);
  const Mat pos = x.cwiseAbs().array() + 0.5;
  const Mat b = oracle::random_matrix(3, 2, rng);
  const Mat row = oracle::random_matrix(1, 3, rng);

  check_op("matmul", [&](Tape& t, Var v) { return dc::matmul(v, t.constant(b)); }, x);
  check_op("matmul both", [](Tape&, Var v) {
    return dc::matmul(dc::slice_rows(v, 0, 2), dc::transpose(dc::slice_rows(v, 2, 2)));
  }, x);
  check_op("matmul_nt", [](Tape&, Var v) {
    return dc::matmul_nt(dc::slice_rows(v, 0, 3), dc::slice_rows(v, 1, 3));
  }, x);
  check_op("add", [](Tape&, Var v) { return dc::add(v, dc::square(v)); }, x);
  check_op("sub", [](Tape&, Var v) { return dc::sub(dc::tanh(v), v); }, x);
  check_op("hadamard", [](Tape&, Var v) { return dc::hadamard(v, dc::gelu(v)); }, x);
  check_op("divide", [](Tape&, Var v) { return dc::divide(v, dc::add_scalar(dc::square(v), 1.0)); }, x);
  check_op("scale", [](Tape&, Var v) { return dc::scale(v, -2.5); }, x);
  check_op("add_row", [&](Tape&, Var v) { return dc::add_row(v, dc::slice_rows(v, 1, 1)); }, x);
  check_op("add_row const", [&](Tape& t, Var v) { return dc::add_row(v, t.constant(row)); }, x);
  check_op("gelu", [](Tape&, Var v) { return dc::gelu(v); }, x);
  check_op("tanh", [](Tape&, Var v) { return dc::tanh(v); }, x);
  check_op("softplus", [](Tape&, Var v) { return dc::softplus(v); }, x);
  check_op("log", [](Tape&, Var v) { return dc::log(v); }, pos);
  check_op("softmax_rows", [](Tape&, Var v) { return dc::softmax_rows(v); }, x);
  check_op("log_softmax_rows", [](Tape&, Var v) { return dc::log_softmax_rows(v); }, x);
  check_op("layer_norm_rows", [](Tape&, Var v) {
    return dc::layer_norm_rows(v, dc::slice_rows(v, 0, 1), dc::slice_rows(v, 3, 1));
  }, x, 1e-5);
  check_op("slice_cols", [](Tape&, Var v) { return dc::slice_cols(v, 1, 2); }, x);
  check_op("concat_rows", [](Tape&, Var v) {
    const Var parts[] = {v, dc::slice_rows(v, 2, 1)};
    return dc::concat_rows(parts);
  }, x);
  check_op("concat_cols", [](Tape&, Var v) {
    const Var parts[] = {dc::slice_cols(v, 2, 1), v};
    return dc::concat_cols(parts);
  }, x);
  check_op("gather_rows", [](Tape&, Var v) {
    const int ids[] = {3, 0, 3, 1};
    return dc::gather_rows(v, ids);
  }, x);
  check_op("mean", [](Tape&, Var v) { return dc::mean(dc::square(v)); }, x);
  check_op("softdtw", [](Tape&, Var v) {
    return dc::softdtw(dc::slice_rows(v, 0, 2), dc::slice_rows(v, 1, 3), 0.2);
  }, x);
  check_op("softdtw euclid", [&](Tape& t, Var v) {
    return dc::softdtw(v, t.constant(b.transpose()), 0.2, evskill::softdtw::Metric::kEuclidean);
  }, x);
  check_op("softdtw_cost", [](Tape&, Var v) { return dc::softdtw_cost(dc::square(v), 0.5); }, x);
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(2);
  Tape t;
  Var s = dc::softmax_rows(t.constant(oracle::random_matrix(5, 7, rng, 20.0)));
  CHECK((s.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(s.value().minCoeff() >= 0.0);
  Var l = dc::log_softmax_rows(t.constant((Mat(1, 2) << 1000.0, 0.0).finished()));
  CHECK(std::isfinite(l.value()(0, 1)));
  CHECK(l.value()(0, 1) == doctest::Approx(-1000.0));
}

TEST_CASE("constants and frozen binds receive no gradient") {
  dc::ParamSet ps;
  dc::Param& p = ps.add("w", Mat::Ones(2, 2));
  Tape t;
  Var c = t.bind(p, true);
  Var root = dc::sum(dc::square(c));
  CHECK_FALSE(t.needs_grad(root.id));
  t.backward(root);
  CHECK(p.grad.isZero(0.0));
}

TEST_CASE("bind caches and accumulates") {
  dc::ParamSet ps;
  dc::Param& p = ps.add("w", Mat::Constant(1, 1, 3.0));
  Tape t;
  Var a = t.bind(p, false);
  Var b = t.bind(p, false);
  CHECK(a.id == b.id);
  t.backward(dc::hadamard(a, b));
  CHECK(p.grad(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("tape contract checks") {
  Tape t1, t2;
  Var a = t1.constant(Mat::Ones(2, 2));
  Var b = t2.constant(Mat::Ones(2, 2));
  CHECK_THROWS_AS(dc::add(a, b), evskill::ContractViolation);
  CHECK_THROWS_AS(t1.backward(a), evskill::ContractViolation);
  CHECK_THROWS_AS(dc::matmul(a, t1.constant(Mat::Ones(3, 1))), evskill::InvalidInput);
  CHECK_THROWS_AS(dc::add(a, t1.constant(Mat::Ones(2, 3))), evskill::InvalidInput);
  CHECK_THROWS_AS(dc::slice_rows(a, 1, 2), evskill::InvalidInput);
  const int bad[] = {2};
  CHECK_THROWS_AS(dc::gather_rows(a, bad), evskill::InvalidInput);
  dc::ParamSet ps;
  ps.add("x", Mat::Zero(1, 1));
  CHECK_THROWS_AS(ps.add("x", Mat::Zero(1, 1)), evskill::ContractViolation);
}

TEST_CASE("adam first step follows the closed form") {
  dc::ParamSet ps;
  dc::Param& p = ps.add("w", (Mat(1, 3) << 1.0, -2.0, 0.5).finished());
  p.grad = (Mat(1, 3) << 0.3, -4.0, 0.0).finished();
  auto st = dc::make_optimizer_state(ps);
  dc::AdamHyper h;
  h.lr = 0.01;
  dc::adam_step(ps, st, h);
  // m_hat = g, v_hat = g^2 after one step.
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + h.eps)));
  CHECK(p.value(0, 1) == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + h.eps)));
  CHECK(p.value(0, 2) == 0.5);
  CHECK(st.step == 1);

  // Second step with a hand-rolled moment recursion.
  const double g1 = 0.3, g2 = -0.1;
  p.grad(0, 0) = g2;
  p.grad(0, 1) = 0.0;
  const double before = p.value(0, 0);
  dc::adam_step(ps, st, h);
  const double m = 0.9 * (0.1 * g1) + 0.1 * g2;
  const double v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(p.value(0, 0) == doctest::Approx(before - 0.01 * mh / (std::sqrt(vh) + h.eps)));
}

TEST_CASE("adam leaves frozen sets and bad gradients untouched") {
  dc::ParamSet ps;
  dc::Param& p = ps.add("w", Mat::Ones(2, 2));
  p.grad.setConstant(1.0);
  auto st = dc::make_optimizer_state(ps);
  ps.set_frozen(true);
  dc::adam_step(ps, st, {});
  CHECK(p.value == Mat::Ones(2, 2));
  CHECK(st.step == 0);

  ps.set_frozen(false);
  p.grad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dc::adam_step(ps, st, {}), evskill::NumericalError);
  CHECK(p.value == Mat::Ones(2, 2));
  CHECK(st.step == 0);
  CHECK(st.first[0].isZero(0.0));
}

TEST_CASE("grad_check flags a wrong gradient") {
  dc::ParamSet ps;
  dc::Param& p = ps.add("w", (Mat(2, 2) << 0.1, -0.4, 0.7, 1.2).finished());
  double factor = 1.0;
  dc::LossFn f = [&](bool with_grad) {
    if (with_grad) p.grad += factor * 2.0 * p.value;
    return p.value.squaredNorm();
  };
  dc::ParamSet* sets[] = {&ps};
  CHECK(dc::grad_check(f, sets, 1e-6, 1e-6).passed);
  factor = 1.1;
  const auto bad = dc::grad_check(f, sets, 1e-6, 1e-6);
  CHECK_FALSE(bad.passed);
  CHECK(bad.failures == 4);
}

TEST_CASE("seq2seq emits any requested length") {
  dc::SeqModelConfig cfg;
  cfg.in_dim = 3;
  cfg.out_dim = 5;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.depth = 1;
  const auto model = dc::init_seq_model(cfg, 4);
  std::mt19937_64 rng(3);
  const Mat in = oracle::random_matrix(7, 3, rng);
  for (int k : {1, 2, 7, 13}) {
    dc::ForwardTrace trace;
    const Mat out = dc::seq2seq_forward(model, in, k, &trace);
    CHECK(out.rows() == k);
    CHECK(out.cols() == 5);
    CHECK(out.allFinite());
    CHECK(trace.cross_attention.rows() == k);
    CHECK(trace.cross_attention.cols() == 7);
    CHECK((trace.cross_attention.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  }
  CHECK_THROWS_AS(dc::seq2seq_forward(model, Mat(0, 3), 2), evskill::InvalidInput);
  CHECK_THROWS_AS(dc::seq2seq_forward(model, Mat::Ones(2, 4), 2), evskill::InvalidInput);
  CHECK_THROWS_AS(dc::seq2seq_forward(model, in, 0), evskill::InvalidInput);
}

TEST_CASE("seq2seq init is seeded") {
  dc::SeqModelConfig cfg;
  const auto a = dc::init_seq_model(cfg, 5);
  const auto b = dc::init_seq_model(cfg, 5);
  const auto c = dc::init_seq_model(cfg, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].value == b.params[i].value);
    differs = differs || a.params[i].value != c.params[i].value;
  }
  CHECK(differs);
}

TEST_CASE("seq2seq config validation") {
  dc::SeqModelConfig cfg;
  cfg.width = 10;
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate("m"), evskill::ConfigError);
  cfg.heads = 2;
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate("m"), evskill::ConfigError);
}

TEST_CASE("seq2seq parameter gradients match central differences") {
  dc::SeqModelConfig cfg;
  cfg.in_dim = 2;
  cfg.out_dim = 3;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.depth = 1;
  auto model = dc::init_seq_model(cfg, 8);
  std::mt19937_64 rng(9);
  const Mat in = oracle::random_matrix(5, 2, rng);
  const Mat target = oracle::random_matrix(4, 3, rng);
  auto loss = [&](bool with_grad) {
    Tape t;
    dc::BoundModel bm(t, model);
    Var out = dc::seq2seq_forward(bm, t.constant(in), 4);
    Var root = dc::softdtw(out, t.constant(target), 0.1);
    if (with_grad) t.backward(root);
    return root.scalar();
  };
  model.params.zero_grad();
  loss(true);
  int checked = 0;
  for (auto& p : model.params) {
    for (Eigen::Index k = 0; k < p.value.size(); k += 7) {
      const double x0 = p.value.data()[k];
      p.value.data()[k] = x0 + 1e-6;
      const double up = loss(false);
      p.value.data()[k] = x0 - 1e-6;
      const double down = loss(false);
      p.value.data()[k] = x0;
      INFO(p.name << "[" << k << "]");
      CHECK(oracle::rel_error(p.grad.data()[k], (up - down) / 2e-6, 1e-6) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 50);
}

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "evskill_test_diffcore";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("checkpoint round trip is exact after storage rounding") {
  dc::SeqModelConfig cfg;
  cfg.in_dim = 3;
  auto model = dc::init_seq_model(cfg, 1);
  dc::round_to_storage(model.params);
  dc::Checkpoint ck;
  ck.header["kind"] = "test";
  ck.header["config"] = dc::to_json(cfg);
  dc::export_params(ck, "m.", model.params);
  const auto path = temp_file("rt.ckpt");
  dc::write_checkpoint(path, ck);
  const auto back = dc::read_checkpoint(path);
  CHECK(back.header == ck.header);
  CHECK(dc::seq_model_config_from_json(back.header["config"]).in_dim == 3);
  auto fresh = dc::init_seq_model(cfg, 2);
  dc::import_params(back, "m.", fresh.params);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    CHECK(std::memcmp(model.params[i].value.data(), fresh.params[i].value.data(),
                      sizeof(double) * model.params[i].value.size()) == 0);
  }
}

TEST_CASE("checkpoint import rejects missing or misshapen tensors") {
  dc::ParamSet ps;
  ps.add("a", Mat::Zero(2, 2));
  dc::Checkpoint empty;
  CHECK_THROWS_AS(dc::import_params(empty, "", ps), evskill::InvalidInput);
  dc::Checkpoint wrong;
  wrong.tensors.emplace_back("a", Mat::Zero(2, 3));
  CHECK_THROWS_AS(dc::import_params(wrong, "", ps), evskill::InvalidInput);
}

TEST_CASE("checkpoint parser reports byte offsets") {
  dc::Checkpoint ck;
  ck.header["kind"] = "t";
  ck.tensors.emplace_back("w", Mat::Ones(3, 2));
  const auto path = temp_file("bad.ckpt");
  dc::write_checkpoint(path, ck);
  const auto bytes = slurp(path);

  auto bad_magic = bytes;
  bad_magic[2] ^= 0xFF;
  try {
    dc::parse_checkpoint(bad_magic);
    FAIL("expected ParseError");
  } catch (const evskill::ParseError& e) {
    CHECK(e.offset() == 0);
  }

  auto bad_version = bytes;
  bad_version[8] = 9;
  try {
    dc::parse_checkpoint(bad_version);
    FAIL("expected ParseError");
  } catch (const evskill::ParseError& e) {
    CHECK(e.offset() == 8);
  }

  for (std::size_t cut = 1; cut < bytes.size(); cut += 3) {
    std::vector<std::uint8_t> trunc(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(dc::parse_checkpoint(trunc), evskill::ParseError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(dc::parse_checkpoint(trailing), evskill::ParseError);
  CHECK_NOTHROW(dc::parse_checkpoint(bytes));
}
