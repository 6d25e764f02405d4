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
#include <random>
#include <vector>

#include "evskill/backbone.hpp"
#include "evskill/errors.hpp"
#include "evskill/softdtw.hpp"
#include "evskill/synthworld.hpp"
#include "oracles.hpp"

namespace bb = evskill::backbone;
namespace sw = evskill::synthworld;
namespace sd = evskill::softdtw;
using oracle::Mat;

namespace {

bb::BackboneConfig tiny_config() {
  bb::BackboneConfig c;
  c.latent_dim = 6;
  c.token_dim = 4;
  c.width = 8;
  c.depth = 1;
  c.decode_frames = 10;
  c.decode_tokens = 6;
  c.events = 3;
  c.epochs = 12;
  c.batch = 2;
  return c;
}

std::vector<sw::DemoTrajectory> tiny_demos(int count, std::uint64_t seed) {
  sw::DemoConfig d;
  d.count = count;
  d.frames = 24;
  d.max_motifs = 3;
  d.event_budget = 3;
  d.max_tokens = 10;
  return sw::gen_demo_corpus(d, seed);
}

double sdtw(const Mat& x, const Mat& y, double gamma) {
  return sd::softdtw_value(sd::pairwise_cost(x, y), gamma);
}

}  // namespace

TEST_CASE("loss components agree with the inference path") {
  auto p = bb::init_backbone(tiny_config(), 1);
  const auto demos = tiny_demos(3, 2);
  const auto loss = bb::pretrain_loss(p, demos, 0.7, 1.3);
  double video = 0.0, align = 0.0, text = 0.0;
  const double g = p.config.gamma;
  for (const auto& t : demos) {
    const auto zv = bb::encode_video(p, t.v);
    const auto zw = bb::encode_text(p, t.w);
    video += sdtw(t.v, bb::decode_video(p, zw).mean, g);
    align += sdtw(zv.z, zw.z, g);
    const Mat logp = bb::decode_text_logp(p, zv);
    Mat cost(static_cast<Eigen::Index>(t.w.size()), logp.rows());
    for (std::size_t i = 0; i < t.w.size(); ++i) {
      for (Eigen::Index j = 0; j < logp.rows(); ++j) {
        cost(static_cast<Eigen::Index>(i), j) = -logp(j, t.w[i]);
      }
    }
    text += sd::softdtw_value({cost, sd::Metric::kSquaredEuclidean}, g);
  }
  video /= 3.0;
  align /= 3.0;
  text /= 3.0;
  CHECK(loss.components.video == doctest::Approx(video).epsilon(1e-10));
  CHECK(loss.components.align == doctest::Approx(align).epsilon(1e-10));
  CHECK(loss.components.text == doctest::Approx(text).epsilon(1e-10));
  CHECK(loss.total == doctest::Approx(video + 0.7 * align + 1.3 * text).epsilon(1e-10));
}

TEST_CASE("decoded token rows are distributions") {
  auto p = bb::init_backbone(tiny_config(), 3);
  const auto z = bb::encode_text(p, tiny_demos(1, 4)[0].w);
  const Mat w = bb::decode_text(p, z);
  CHECK(w.rows() == p.config.decode_tokens);
  CHECK(w.cols() == p.config.vocab);
  CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  const auto vp = bb::decode_video(p, z, 17);
  CHECK(vp.mean.rows() == 17);
  CHECK(vp.variance.minCoeff() >= p.config.var_floor);
}

TEST_CASE("gaussian nll closed form") {
  const Mat x = (Mat(1, 2) << 1.0, -1.0).finished();
  const Mat mu = Mat::Zero(1, 2);
  const Mat var = (Mat(1, 2) << 1.0, 4.0).finished();
  const double expect = 0.5 * (std::log(2 * M_PI) + 1.0) + 0.5 * (std::log(8 * M_PI) + 0.25);
  CHECK(bb::gaussian_nll(x, mu, var) == doctest::Approx(expect));
  CHECK_THROWS_AS(bb::gaussian_nll(x, mu, Mat::Zero(1, 2)), evskill::InvalidInput);
}

TEST_CASE("pretrain loss gradient matches central differences") {
  auto p = bb::init_backbone(tiny_config(), 5);
  const auto demos = tiny_demos(2, 6);
  for (auto* ps : p.param_sets()) ps->zero_grad();
  bb::pretrain_loss(p, demos, 1.0, 1.0, true);
  std::mt19937_64 rng(7);
  int checked = 0;
  for (auto* ps : p.param_sets()) {
    for (auto& prm : *ps) {
      std::uniform_int_distribution<Eigen::Index> pick(0, prm.value.size() - 1);
      for (int s = 0; s < 3; ++s) {
        const Eigen::Index k = pick(rng);
        const double x0 = prm.value.data()[k];
        const double h = 1e-5;
        prm.value.data()[k] = x0 + h;
        const double up = bb::pretrain_loss(p, demos, 1.0, 1.0).total;
        prm.value.data()[k] = x0 - h;
        const double down = bb::pretrain_loss(p, demos, 1.0, 1.0).total;
        prm.value.data()[k] = x0;
        const double num = (up - down) / (2 * h);
        INFO(prm.name << "[" << k << "] analytic " << prm.grad.data()[k] << " numeric " << num);
        CHECK(oracle::rel_error(prm.grad.data()[k], num, 1e-4) < 1e-3);
        ++checked;
      }
    }
  }
  CHECK(checked >= 50);
}

TEST_CASE("frozen backbone accumulates no gradient") {
  auto p = bb::init_backbone(tiny_config(), 8);
  p.set_frozen(true);
  for (auto* ps : p.param_sets()) {
    CHECK(ps->frozen());
    ps->zero_grad();
  }
  bb::pretrain_loss(p, tiny_demos(2, 9), 1.0, 1.0, true);
  for (auto* ps : p.param_sets()) {
    for (const auto& prm : *ps) CHECK(prm.grad.isZero(0.0));
  }
}

TEST_CASE("pretraining lowers the loss and ignores labels") {
  const auto demos = tiny_demos(6, 10);
  auto cfg = tiny_config();
  std::vector<int> seen;
  const auto res = bb::pretrain(demos, cfg, 11, [&](const bb::CurveRow& r) { seen.push_back(r.epoch); });
  REQUIRE(res.curve.size() == static_cast<std::size_t>(cfg.epochs));
  CHECK(seen.size() == res.curve.size());
  CHECK(res.curve.back().total < res.initial_loss);

  // Scrambled labels give bitwise identical weights.
  auto scrambled = demos;
  for (auto& t : scrambled) {
    for (auto& s : t.hidden_motifs) s.motif = (s.motif + 3) % sw::kMotifCount;
  }
  scrambled[0].hidden_motifs.clear();
  const auto other = bb::pretrain(scrambled, cfg, 11);
  const auto a = res.params.param_sets();
  const auto b = other.params.param_sets();
  for (std::size_t s = 0; s < a.size(); ++s) {
    for (std::size_t i = 0; i < a[s]->size(); ++i) CHECK((*a[s])[i].value == (*b[s])[i].value);
  }
}

TEST_CASE("segments tile the sequence") {
  auto p = bb::init_backbone(tiny_config(), 12);
  const auto t = tiny_demos(1, 13)[0];
  const auto segs = bb::segment_events(p, t.v);
  REQUIRE_FALSE(segs.empty());
  CHECK(static_cast<int>(segs.size()) <= p.config.events);
  CHECK(segs.front().start == 0);
  CHECK(segs.back().end == t.v.rows());
  for (std::size_t i = 1; i < segs.size(); ++i) {
    CHECK(segs[i].start == segs[i - 1].end);
    CHECK(segs[i].end > segs[i].start);
  }
}

TEST_CASE("checkpoint round trip preserves outputs") {
  auto p = bb::init_backbone(tiny_config(), 14);
  const auto ck = bb::to_checkpoint(p, 14);
  CHECK(ck.header["seed"] == 14);
  const auto q = bb::from_checkpoint(ck);
  CHECK(q.config.to_json() == p.config.to_json());
  const auto t = tiny_demos(1, 15)[0];
  const Mat a = bb::encode_video(p, t.v).z;
  const Mat b = bb::encode_video(q, t.v).z;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-4);
  // A second trip is exact.
  const auto r = bb::from_checkpoint(bb::to_checkpoint(q, 14));
  CHECK(bb::encode_video(r, t.v).z == b);
}

TEST_CASE("input validation") {
  auto p = bb::init_backbone(tiny_config(), 16);
  CHECK_THROWS_AS(bb::encode_video(p, Mat::Zero(5, 3)), evskill::InvalidInput);
  CHECK_THROWS_AS(bb::encode_video(p, Mat(0, 16)), evskill::InvalidInput);
  Mat bad = Mat::Zero(5, 16);
  bad(2, 2) = std::nan("");
  CHECK_THROWS_AS(bb::encode_video(p, bad), evskill::InvalidInput);
  const std::vector<int> oov = {1, 99, 2};
  CHECK_THROWS_AS(bb::encode_text(p, oov), evskill::InvalidInput);
  CHECK_THROWS_AS(bb::one_hot_tokens(std::vector<int>{0, 0}, 32), evskill::InvalidInput);
  std::vector<sw::DemoTrajectory> none;
  CHECK_THROWS_AS(bb::pretrain_loss(p, none, 1.0, 1.0), evskill::InvalidInput);
  auto cfg = tiny_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), evskill::ConfigError);
}
