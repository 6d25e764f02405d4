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
#include <random>
#include <vector>

#include "evskill/backbone.hpp"
#include "evskill/errors.hpp"
#include "evskill/homomorphism.hpp"
#include "evskill/softdtw.hpp"
#include "evskill/synthworld.hpp"
#include "oracles.hpp"

namespace bb = evskill::backbone;
namespace hm = evskill::homomorphism;
namespace sw = evskill::synthworld;
namespace sd = evskill::softdtw;
using oracle::Mat;

namespace {

bb::BackboneParams frozen_backbone(std::uint64_t seed) {
  bb::BackboneConfig c;
  c.latent_dim = 6;
  c.token_dim = 4;
  c.width = 8;
  c.depth = 1;
  c.decode_frames = 10;
  c.decode_tokens = 6;
  c.events = 3;
  auto p = bb::init_backbone(c, seed);
  p.set_frozen(true);
  return p;
}

hm::AdapterConfig tiny_adapters() {
  hm::AdapterConfig c;
  c.width = 8;
  c.text_len = 5;
  c.epochs = 10;
  c.batch = 2;
  c.lr = 3e-3;
  return c;
}

std::vector<sw::RobotTrajectory> tiny_robots(int count, std::uint64_t seed) {
  sw::RobotConfig r;
  r.count = count;
  r.length = 20;
  r.min_motifs = 1;
  r.max_motifs = 1;
  return sw::gen_robot_corpus(r, seed);
}

std::vector<std::vector<double>> snapshot(const bb::BackboneParams& p) {
  std::vector<std::vector<double>> out;
  for (const auto* ps : p.param_sets()) {
    for (const auto& prm : *ps) out.emplace_back(prm.value.data(), prm.value.data() + prm.value.size());
  }
  return out;
}

double sdtw(const Mat& x, const Mat& y, double gamma) {
  return sd::softdtw_value(sd::pairwise_cost(x, y), gamma);
}

}  // namespace

TEST_CASE("adapter stage refuses an unfrozen backbone") {
  auto b = frozen_backbone(1);
  auto ad = hm::init_adapters(tiny_adapters(), b.config, 2);
  const auto t = tiny_robots(1, 3)[0];
  b.set_frozen(false);
  CHECK_THROWS_AS(hm::cycle_loss(ad, b, t.s, t.a), evskill::ContractViolation);
  CHECK_THROWS_AS(hm::distill(tiny_robots(2, 3), b, tiny_adapters(), 0), evskill::ContractViolation);
  b.set_frozen(true);
  b.embed.set_frozen(false);
  CHECK_THROWS_AS(hm::cycle_loss(ad, b, t.s, t.a), evskill::ContractViolation);
}

TEST_CASE("cycle terms agree with the inference path") {
  auto b = frozen_backbone(4);
  auto cfg = tiny_adapters();
  cfg.aux_weight = 0.5;
  auto ad = hm::init_adapters(cfg, b.config, 5);
  const auto t = tiny_robots(1, 6)[0];
  const auto loss = hm::cycle_loss(ad, b, t.s, t.a);
  const Eigen::VectorXd s0 = t.s.row(0).transpose();
  const Mat s_rec = hm::predict_states(ad, b, s0, t.a);
  const auto z_s = hm::embed_robot_skills(ad, b, t.s, t.a);
  const auto z_a = hm::embed_robot_actions(ad, b, t.a);
  const Mat a_rec = hm::actions_from_latents(ad, b, z_s, static_cast<int>(t.a.rows()));
  CHECK(loss.state_term == doctest::Approx(sdtw(t.s, s_rec, cfg.gamma)).epsilon(1e-10));
  CHECK(loss.action_term == doctest::Approx(sdtw(t.a, a_rec, cfg.gamma)).epsilon(1e-10));
  CHECK(loss.align_term == doctest::Approx(sdtw(z_s.z, z_a.z, cfg.gamma)).epsilon(1e-10));
  CHECK(loss.total == doctest::Approx(loss.state_term + loss.action_term));

  // g_map on the decoded modalities reproduces both reconstructions.
  const auto v = bb::decode_video(b, z_a);
  const auto rec = hm::g_map(ad, v.mean, bb::decode_text_logp(b, z_s), s0,
                             static_cast<int>(t.a.rows()));
  CHECK((rec.s - s_rec).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rec.a - a_rec).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reconstructions have the right shape and range") {
  auto b = frozen_backbone(7);
  auto ad = hm::init_adapters(tiny_adapters(), b.config, 8);
  const auto t = tiny_robots(1, 9)[0];
  const auto in = hm::f_map(ad, t.s, t.a);
  CHECK(in.v_hat.rows() == ad.video_len);
  CHECK(in.v_hat.cols() == b.config.frame_dim);
  CHECK(in.w_hat.rows() == ad.text_len);
  CHECK(in.w_hat.cols() == b.config.token_dim);
  const Eigen::VectorXd s0 = t.s.row(0).transpose();
  const Mat s = hm::predict_states(ad, b, s0, t.a);
  CHECK(s.rows() == t.s.rows());
  CHECK(s.row(0) == t.s.row(0));
  std::mt19937_64 rng(1);
  bb::EventLatents z{oracle::random_matrix(3, 6, rng, 50.0), bb::Source::kRobot};
  const Mat a = hm::actions_from_latents(ad, b, z, 13);
  CHECK(a.rows() == 13);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("cycle loss gradient matches central differences") {
  auto b = frozen_backbone(10);
  auto ad = hm::init_adapters(tiny_adapters(), b.config, 11);
  const auto batch = tiny_robots(2, 12);
  for (auto* ps : ad.param_sets()) ps->zero_grad();
  hm::cycle_loss(ad, b, batch, true);
  const double w = ad.config.aux_weight;
  auto objective = [&] {
    const auto l = hm::cycle_loss(ad, b, batch);
    return l.total + w * l.align_term;
  };
  std::mt19937_64 rng(13);
  int checked = 0;
  for (auto* ps : ad.param_sets()) {
    for (auto& prm : *ps) {
      std::uniform_int_distribution<Eigen::Index> pick(0, prm.value.size() - 1);
      for (int s = 0; s < 2; ++s) {
        const Eigen::Index k = pick(rng);
        const double x0 = prm.value.data()[k];
        const double h = 1e-5;
        prm.value.data()[k] = x0 + h;
        const double up = objective();
        prm.value.data()[k] = x0 - h;
        const double down = objective();
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

TEST_CASE("cycle loss sends no gradient into the backbone") {
  auto b = frozen_backbone(14);
  auto ad = hm::init_adapters(tiny_adapters(), b.config, 15);
  for (auto* ps : b.param_sets()) {
    for (auto& prm : *ps) prm.grad.setZero(prm.value.rows(), prm.value.cols());
  }
  hm::cycle_loss(ad, b, tiny_robots(2, 16), true);
  bool adapter_moved = false;
  for (auto* ps : ad.param_sets()) {
    for (const auto& prm : *ps) adapter_moved = adapter_moved || !prm.grad.isZero(0.0);
  }
  CHECK(adapter_moved);
  for (const auto* ps : b.param_sets()) {
    for (const auto& prm : *ps) {
      INFO(prm.name);
      CHECK(prm.grad.isZero(0.0));
    }
  }
}

TEST_CASE("distill leaves the backbone bitwise unchanged and lowers the loss") {
  auto b = frozen_backbone(17);
  const auto before = snapshot(b);
  const auto data = tiny_robots(6, 18);
  const int snaps[] = {1, 5};
  int calls = 0;
  const auto res = hm::distill(data, b, tiny_adapters(), 19, snaps, [&](const hm::DistillRow&) { ++calls; });
  CHECK(calls == 10);
  CHECK(res.snapshots.size() == 2);
  CHECK(res.curve.back().total < res.initial_loss);
  const auto after = snapshot(b);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(std::memcmp(before[i].data(), after[i].data(), before[i].size() * sizeof(double)) == 0);
  }
  CHECK(b.frozen);
}

TEST_CASE("distill is deterministic and ignores labels") {
  auto b = frozen_backbone(20);
  auto cfg = tiny_adapters();
  cfg.epochs = 2;
  const auto data = tiny_robots(4, 21);
  auto relabeled = data;
  for (auto& t : relabeled) t.hidden_motifs.clear();
  const auto r1 = hm::distill(data, b, cfg, 22);
  const auto r2 = hm::distill(relabeled, b, cfg, 22);
  const auto r3 = hm::distill(data, b, cfg, 23);
  CHECK(r1.curve.back().total == r2.curve.back().total);
  CHECK(r1.adapters.g_a.params[0].value == r2.adapters.g_a.params[0].value);
  CHECK(r1.curve.back().total != r3.curve.back().total);
}

TEST_CASE("adapter checkpoint round trip") {
  auto b = frozen_backbone(24);
  auto ad = hm::init_adapters(tiny_adapters(), b.config, 25);
  const auto back = hm::from_checkpoint(hm::to_checkpoint(ad, 25, {{"epoch", 3}}));
  CHECK(back.config.to_json() == ad.config.to_json());
  CHECK(back.video_len == ad.video_len);
  const auto t = tiny_robots(1, 26)[0];
  const Eigen::VectorXd s0 = t.s.row(0).transpose();
  CHECK((hm::predict_states(back, b, s0, t.a) - hm::predict_states(ad, b, s0, t.a))
            .cwiseAbs()
            .maxCoeff() < 1e-4);
  CHECK(hm::to_checkpoint(ad, 25, {{"epoch", 3}}).header["epoch"] == 3);
}

TEST_CASE("adapter input validation") {
  auto b = frozen_backbone(27);
  auto ad = hm::init_adapters(tiny_adapters(), b.config, 28);
  const auto t = tiny_robots(1, 29)[0];
  CHECK_THROWS_AS(hm::cycle_loss(ad, b, t.s, t.a.topRows(3)), evskill::InvalidInput);
  CHECK_THROWS_AS(hm::cycle_loss(ad, b, t.s.leftCols(5), t.a), evskill::InvalidInput);
  CHECK_THROWS_AS(hm::predict_states(ad, b, Eigen::VectorXd::Zero(3), t.a), evskill::InvalidInput);
  CHECK_THROWS_AS(hm::g_map(ad, Mat::Zero(4, 16), Mat::Zero(4, 32), Eigen::VectorXd::Zero(8), 0),
                  evskill::InvalidInput);
  auto cfg = tiny_adapters();
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), evskill::ConfigError);
}
