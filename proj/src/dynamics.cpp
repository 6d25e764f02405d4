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

#include "evskill/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "evskill/diffcore/optim.hpp"
#include "evskill/errors.hpp"

namespace evskill::dynamics {

using diffcore::Tape;
using diffcore::Var;

namespace {

constexpr double kStdFloor = 1e-6;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

Var mlp_tape(Tape& t, Mlp& m, Var x) {
  const bool frozen = m.params.frozen();
  auto p = [&](const char* n) { return t.bind(*m.params.find(n), frozen); };
  Var h = diffcore::tanh(diffcore::add_row(diffcore::matmul(x, p("w1")), p("b1")));
  h = diffcore::tanh(diffcore::add_row(diffcore::matmul(h, p("w2")), p("b2")));
  return diffcore::add_row(diffcore::matmul(h, p("w3")), p("b3"));
}

// Mean per-sample loss on the tape. Targets are normalised deltas.
Var loss_tape(Tape& t, const BaselineModel& model, Mlp& m, const Matrix& x, const Matrix& y) {
  const int ds = model.state_dim;
  Var out = mlp_tape(t, m, t.constant(x));
  const double inv = 1.0 / static_cast<double>(x.rows());
  Var target = t.constant(y);
  if (!is_probabilistic(model.spec.kind)) {
    Var err = diffcore::sub(diffcore::slice_cols(out, 0, ds), target);
    return diffcore::scale(diffcore::sum(diffcore::square(err)), inv / ds);
  }
  Var mean = diffcore::slice_cols(out, 0, ds);
  Var var = diffcore::add_scalar(diffcore::softplus(diffcore::slice_cols(out, ds, ds)),
                                 model.spec.var_floor);
  Var err2 = diffcore::square(diffcore::sub(mean, target));
  Var nll = diffcore::add(diffcore::log(var), diffcore::divide(err2, var));
  const double c = 0.5 * std::log(2.0 * std::numbers::pi) * ds;
  return diffcore::add_scalar(diffcore::scale(diffcore::sum(nll), 0.5 * inv), c);
}

struct Tuples {
  Matrix x;  // [norm s_t, a_t]
  Matrix y;  // normalised delta
};

Tuples make_tuples(const Normalizer& norm, std::span<const RobotTrajectory> data,
                   std::span<const std::size_t> pick) {
  std::size_t n = 0;
  for (std::size_t i : pick) n += static_cast<std::size_t>(data[i].a.rows());
  const Eigen::Index ds = data[pick[0]].s.cols();
  const Eigen::Index da = data[pick[0]].a.cols();
  Tuples t;
  t.x.resize(static_cast<Eigen::Index>(n), ds + da);
  t.y.resize(static_cast<Eigen::Index>(n), ds);
  Eigen::Index r = 0;
  for (std::size_t i : pick) {
    const auto& tr = data[i];
    for (Eigen::Index k = 0; k < tr.a.rows(); ++k, ++r) {
      const Eigen::VectorXd s = tr.s.row(k).transpose();
      const Eigen::VectorXd d = (tr.s.row(k + 1) - tr.s.row(k)).transpose();
      t.x.row(r).head(ds) = norm.state(s).transpose();
      t.x.row(r).tail(da) = tr.a.row(k);
      t.y.row(r) = ((d - norm.delta_mean).array() / norm.delta_std.array()).matrix().transpose();
    }
  }
  return t;
}

void check_data(std::span<const RobotTrajectory> data) {
  if (data.empty()) throw InvalidInput("dynamics: empty dataset");
  const Eigen::Index ds = data[0].s.cols(), da = data[0].a.cols();
  for (const auto& t : data) {
    if (t.s.rows() < 2 || t.a.rows() + 1 != t.s.rows() || t.s.cols() != ds || t.a.cols() != da) {
      throw InvalidInput("dynamics: inconsistent trajectory shapes");
    }
  }
}

struct MemberOut {
  Eigen::VectorXd mean;      // raw next state
  Eigen::VectorXd variance;  // raw units, probabilistic kinds only
};

MemberOut member_predict(const BaselineModel& model, const Mlp& m, const Eigen::VectorXd& s,
                         const Eigen::VectorXd& a) {
  const int ds = model.state_dim;
  Matrix x(1, ds + model.action_dim);
  x.row(0).head(ds) = model.norm.state(s).transpose();
  x.row(0).tail(model.action_dim) = a.transpose();
  const Matrix out = mlp_forward(m, x);
  MemberOut r;
  const Eigen::VectorXd dn = out.row(0).head(ds).transpose();
  r.mean = s + model.norm.delta_mean + dn.cwiseProduct(model.norm.delta_std);
  if (is_probabilistic(model.spec.kind)) {
    r.variance.resize(ds);
    for (int i = 0; i < ds; ++i) {
      const double vn = softplus(out(0, ds + i)) + model.spec.var_floor;
      r.variance(i) = std::max(vn * model.norm.delta_std(i) * model.norm.delta_std(i),
                               model.spec.var_floor);
    }
  }
  return r;
}

}  // namespace

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kPnn: return "PNN";
    case ModelKind::kDnn: return "DNN";
    case ModelKind::kDe: return "DE";
    case ModelKind::kPe: return "PE";
    case ModelKind::kV2s: return "V2S";
  }
  return "unknown";
}

ModelKind kind_from_name(const std::string& name) {
  for (ModelKind k : {ModelKind::kPnn, ModelKind::kDnn, ModelKind::kDe, ModelKind::kPe,
                      ModelKind::kV2s}) {
    if (name == kind_name(k)) return k;
  }
  throw InvalidInput("unknown dynamics model kind '" + name + "'");
}

bool is_probabilistic(ModelKind k) { return k == ModelKind::kPnn || k == ModelKind::kPe; }
bool is_ensemble(ModelKind k) { return k == ModelKind::kDe || k == ModelKind::kPe; }

Normalizer Normalizer::fit(std::span<const RobotTrajectory> data) {
  check_data(data);
  const Eigen::Index ds = data[0].s.cols();
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(ds), s2 = Eigen::VectorXd::Zero(ds);
  Eigen::VectorXd d1 = Eigen::VectorXd::Zero(ds), d2 = Eigen::VectorXd::Zero(ds);
  double ns = 0, nd = 0;
  for (const auto& t : data) {
    for (Eigen::Index k = 0; k < t.s.rows(); ++k) {
      const Eigen::VectorXd s = t.s.row(k).transpose();
      s1 += s;
      s2 += s.cwiseAbs2();
      ns += 1;
      if (k + 1 < t.s.rows()) {
        const Eigen::VectorXd d = (t.s.row(k + 1) - t.s.row(k)).transpose();
        d1 += d;
        d2 += d.cwiseAbs2();
        nd += 1;
      }
    }
  }
  Normalizer n;
  n.state_mean = s1 / ns;
  n.state_std = (s2 / ns - n.state_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(kStdFloor);
  n.delta_mean = d1 / nd;
  n.delta_std = (d2 / nd - n.delta_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(kStdFloor);
  return n;
}

Eigen::VectorXd Normalizer::state(const Eigen::VectorXd& s) const {
  return ((s - state_mean).array() / state_std.array()).matrix();
}

Matrix Normalizer::states(const Matrix& s) const {
  Matrix out = s.rowwise() - state_mean.transpose();
  return out.array().rowwise() / state_std.transpose().array();
}

void BaselineSpec::validate() const {
  if (kind == ModelKind::kV2s) throw ConfigError("dynamics.kind", "V2S is not a baseline");
  if (is_ensemble(kind) && ensemble_size < 2) {
    throw ConfigError("dynamics.ensemble_size", "ensembles need at least 2 members");
  }
  if (hidden < 1) throw ConfigError("dynamics.hidden", "must be >= 1");
  if (batch < 1) throw ConfigError("dynamics.batch", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("dynamics.lr", "must be > 0");
  if (!(var_floor > 0.0)) throw ConfigError("dynamics.var_floor", "must be > 0");
}

Mlp init_mlp(int in_dim, int hidden, int out_dim, std::uint64_t seed) {
  Mlp m;
  m.in_dim = in_dim;
  m.hidden = hidden;
  m.out_dim = out_dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  auto dense = [&](int fi, int fo) {
    Matrix w(fi, fo);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fi));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * n(rng);
    return w;
  };
  m.params.add("w1", dense(in_dim, hidden));
  m.params.add("b1", Matrix::Zero(1, hidden));
  m.params.add("w2", dense(hidden, hidden));
  m.params.add("b2", Matrix::Zero(1, hidden));
  m.params.add("w3", dense(hidden, out_dim));
  m.params.add("b3", Matrix::Zero(1, out_dim));
  return m;
}

Matrix mlp_forward(const Mlp& m, const Matrix& x) {
  if (x.cols() != m.in_dim) throw InvalidInput("mlp_forward: input width mismatch");
  auto p = [&](const char* n) -> const Matrix& { return m.params.find(n)->value; };
  Matrix h = ((x * p("w1")).rowwise() + p("b1").row(0)).array().tanh().matrix();
  h = ((h * p("w2")).rowwise() + p("b2").row(0)).array().tanh().matrix();
  return (h * p("w3")).rowwise() + p("b3").row(0);
}

TrainedBaseline train_baseline(const BaselineSpec& spec, std::span<const RobotTrajectory> data,
                               int epochs, std::uint64_t seed,
                               std::span<const int> snapshot_epochs) {
  spec.validate();
  check_data(data);
  if (epochs < 0) throw ConfigError("dynamics.epochs", "must be >= 0");
  TrainedBaseline res;
  BaselineModel& model = res.model;
  model.spec = spec;
  model.norm = Normalizer::fit(data);
  model.state_dim = static_cast<int>(data[0].s.cols());
  model.action_dim = static_cast<int>(data[0].a.cols());
  const int ds = model.state_dim;
  const int members = is_ensemble(spec.kind) ? spec.ensemble_size : 1;
  const int out_dim = is_probabilistic(spec.kind) ? 2 * ds : ds;

  std::mt19937_64 master(seed ^ 0x64796e616d696373ull);
  std::vector<Tuples> sets;
  std::vector<std::mt19937_64> rngs;
  for (int b = 0; b < members; ++b) {
    const std::uint64_t member_seed = master();
    model.members.push_back(init_mlp(ds + model.action_dim, spec.hidden, out_dim, member_seed));
    std::mt19937_64 rng(member_seed ^ 0x626f6f74ull);
    std::vector<std::size_t> pick(data.size());
    if (is_ensemble(spec.kind)) {
      std::uniform_int_distribution<std::size_t> u(0, data.size() - 1);
      for (auto& i : pick) i = u(rng);
    } else {
      std::iota(pick.begin(), pick.end(), 0);
    }
    sets.push_back(make_tuples(model.norm, data, pick));
    rngs.push_back(std::move(rng));
  }

  std::vector<diffcore::OptimizerState> opt;
  for (const auto& m : model.members) opt.push_back(diffcore::make_optimizer_state(m.params));
  const diffcore::AdamHyper hyper{spec.lr};
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int b = 0; b < members; ++b) {
      Mlp& m = model.members[b];
      const Tuples& tu = sets[b];
      std::vector<Eigen::Index> order(static_cast<std::size_t>(tu.x.rows()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rngs[b]);
      double member_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += spec.batch) {
        const std::size_t end = std::min(order.size(), start + spec.batch);
        Matrix x(static_cast<Eigen::Index>(end - start), tu.x.cols());
        Matrix y(static_cast<Eigen::Index>(end - start), tu.y.cols());
        for (std::size_t k = start; k < end; ++k) {
          x.row(static_cast<Eigen::Index>(k - start)) = tu.x.row(order[k]);
          y.row(static_cast<Eigen::Index>(k - start)) = tu.y.row(order[k]);
        }
        m.params.zero_grad();
        Tape tape;
        Var l = loss_tape(tape, model, m, x, y);
        if (!std::isfinite(l.scalar())) {
          throw NumericalError(std::string("train_baseline(") + kind_name(spec.kind) +
                               "): non-finite loss at epoch " + std::to_string(epoch) +
                               ", member " + std::to_string(b));
        }
        member_sum += l.scalar() * static_cast<double>(end - start);
        tape.backward(l);
        diffcore::adam_step(m.params, opt[b], hyper);
      }
      loss_sum += member_sum / static_cast<double>(order.size());
    }
    res.epoch_loss.push_back(loss_sum / members);
    if (std::find(snapshot_epochs.begin(), snapshot_epochs.end(), epoch) != snapshot_epochs.end()) {
      res.snapshots.emplace(epoch, model);
    }
  }
  return res;
}

double member_loss(const BaselineModel& model, std::size_t member, const Matrix& x,
                   const Matrix& target) {
  if (member >= model.members.size()) throw InvalidInput("member_loss: no such member");
  Mlp copy = model.members[member];
  Tape tape;
  return loss_tape(tape, model, copy, x, target).scalar();
}

StepPrediction predict_step(const BaselineModel& model, const Eigen::VectorXd& s,
                            const Eigen::VectorXd& a) {
  if (s.size() != model.state_dim || a.size() != model.action_dim) {
    throw InvalidInput("predict_step: expected " + std::to_string(model.state_dim) + "-d state and " +
                       std::to_string(model.action_dim) + "-d action");
  }
  const double b = static_cast<double>(model.members.size());
  StepPrediction out;
  out.mean = Eigen::VectorXd::Zero(model.state_dim);
  Eigen::VectorXd var_sum = Eigen::VectorXd::Zero(model.state_dim);
  Eigen::VectorXd sq_sum = Eigen::VectorXd::Zero(model.state_dim);
  for (const auto& m : model.members) {
    const MemberOut r = member_predict(model, m, s, a);
    out.mean += r.mean;
    if (is_probabilistic(model.spec.kind)) {
      var_sum += r.variance;
      sq_sum += r.mean.cwiseAbs2();
    }
  }
  out.mean /= b;
  if (is_probabilistic(model.spec.kind)) {
    // Mixture moments: E[var] + Var[mean].
    Eigen::VectorXd v = var_sum / b + (sq_sum / b - out.mean.cwiseAbs2()).cwiseMax(0.0);
    out.variance = v.cwiseMax(model.spec.var_floor);
  }
  return out;
}

PredictedRollout rollout_autoregressive(const BaselineModel& model, const Eigen::VectorXd& s0,
                                        const Matrix& actions) {
  if (actions.rows() < 1) throw InvalidInput("rollout: horizon must be >= 1");
  const Eigen::Index h = actions.rows();
  PredictedRollout r;
  r.mean.resize(h + 1, model.state_dim);
  r.mean.row(0) = s0.transpose();
  const bool prob = is_probabilistic(model.spec.kind);
  if (prob) r.variance = Matrix::Constant(h + 1, model.state_dim, model.spec.var_floor);
  Eigen::VectorXd s = s0;
  for (Eigen::Index t = 0; t < h; ++t) {
    const StepPrediction p = predict_step(model, s, actions.row(t).transpose());
    if (!p.mean.allFinite()) {
      r.truncated = true;
      r.mean.conservativeResize(t + 1, Eigen::NoChange);
      if (prob) r.variance->conservativeResize(t + 1, Eigen::NoChange);
      break;
    }
    r.mean.row(t + 1) = p.mean.transpose();
    if (prob) r.variance->row(t + 1) = p.variance->transpose();
    s = p.mean;
  }
  return r;
}

PredictedRollout rollout_v2s(const homomorphism::AdapterParams& adapters,
                             const backbone::BackboneParams& backbone, const Eigen::VectorXd& s0,
                             const Matrix& actions) {
  PredictedRollout r;
  r.mean = homomorphism::predict_states(adapters, backbone, s0, actions);
  for (Eigen::Index t = 1; t < r.mean.rows(); ++t) {
    if (!r.mean.row(t).allFinite()) {
      r.truncated = true;
      r.mean.conservativeResize(t, Eigen::NoChange);
      break;
    }
  }
  return r;
}

Predictor baseline_predictor(const BaselineModel& model) {
  return [&model](const Eigen::VectorXd& s0, const Matrix& a) {
    return rollout_autoregressive(model, s0, a);
  };
}

Predictor v2s_predictor(const homomorphism::AdapterParams& adapters,
                        const backbone::BackboneParams& backbone) {
  return [&adapters, &backbone](const Eigen::VectorXd& s0, const Matrix& a) {
    return rollout_v2s(adapters, backbone, s0, a);
  };
}

std::vector<double> multistep_rmse(const Predictor& predictor,
                                   std::span<const RobotTrajectory> eval_data,
                                   std::span<const int> horizons, const Normalizer& norm) {
  check_data(eval_data);
  if (horizons.empty()) throw InvalidInput("multistep_rmse: no horizons");
  for (int h : horizons) {
    if (h < 0) throw ConfigError("dynamics.horizons", "horizon must be >= 1 or full");
    for (const auto& t : eval_data) {
      if (h > t.a.rows()) {
        throw ConfigError("dynamics.horizons", "horizon " + std::to_string(h) +
                                                   " exceeds trajectory length " +
                                                   std::to_string(t.a.rows()));
      }
    }
  }
  std::vector<double> sq(horizons.size(), 0.0);
  std::vector<double> count(horizons.size(), 0.0);
  for (const auto& t : eval_data) {
    const Eigen::VectorXd s0 = t.s.row(0).transpose();
    const PredictedRollout r = predictor(s0, t.a);
    const Matrix truth = norm.states(t.s);
    const Matrix pred = norm.states(r.mean);
    for (std::size_t k = 0; k < horizons.size(); ++k) {
      const Eigen::Index h = horizons[k] == kFullHorizon ? t.a.rows() : horizons[k];
      for (Eigen::Index step = 1; step <= h; ++step) {
        const Eigen::Index row = std::min<Eigen::Index>(step, pred.rows() - 1);
        sq[k] += (pred.row(row) - truth.row(step)).squaredNorm();
        count[k] += static_cast<double>(truth.cols());
      }
    }
  }
  std::vector<double> out(horizons.size());
  for (std::size_t k = 0; k < horizons.size(); ++k) out[k] = std::sqrt(sq[k] / count[k]);
  return out;
}

}  // namespace evskill::dynamics
