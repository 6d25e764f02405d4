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

#include "evskill/diffcore/tape.hpp"

#include <cmath>
#include <numbers>

#include "evskill/errors.hpp"

namespace evskill::diffcore {

// ---------------------------------------------------------------------------
// ParamSet

Param& ParamSet::add(std::string name, Matrix init) {
  if (index_.count(name) != 0) throw ContractViolation("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Param p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Param* ParamSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Param* ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Param& p) {
  Node n;
  n.value = p.value;
  n.sink = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::bind(Param& p, bool frozen) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  Var v = frozen ? constant(p.value) : leaf(p);
  bound_.emplace(&p, v.id);
  return v;
}

Var Tape::bind_constant(const Param& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  Var v = constant(p.value);
  bound_.emplace(&p, v.id);
  return v;
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward back) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape != this) throw ContractViolation("operands recorded on different tapes");
    n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
  }
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(std::int32_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ContractViolation("backward on a foreign tape");
  if (nodes_[root.id].value.size() != 1) throw ContractViolation("backward root must be 1x1");
  accumulate(root.id, Matrix::Ones(1, 1));
  for (std::int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.sink != nullptr) n.sink->grad += n.grad;
    if (n.back) n.back(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
}

Var unary(Var a, Matrix value, std::function<Matrix(const Matrix& in, const Matrix& out,
                                                   const Matrix& g)> dfn) {
  Tape& t = *a.tape;
  const std::int32_t ia = a.id;
  Var out{};
  const Var parents[] = {a};
  Matrix held = value;
  out = t.push(std::move(value), parents,
               [ia, held = std::move(held), dfn = std::move(dfn)](Tape& tp, const Matrix& g) {
                 tp.accumulate(ia, dfn(tp.value(ia), held, g));
               });
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul: inner dimension mismatch " + std::to_string(a.cols()) + " vs " +
                       std::to_string(b.rows()));
  }
  const Var parents[] = {a, b};
  const auto ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value(), parents, [ia, ib](Tape& t, const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw InvalidInput("matmul_nt: dimension mismatch " + std::to_string(a.cols()) + " vs " +
                       std::to_string(b.cols()));
  }
  const Var parents[] = {a, b};
  const auto ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value().transpose(), parents,
                      [ia, ib](Tape& t, const Matrix& g) {
                        if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib));
                        if (t.needs_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
                      });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const Var parents[] = {a, b};
  const auto ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), parents, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const Var parents[] = {a, b};
  const auto ia = a.id, ib = b.id;
  return a.tape->push(a.value() - b.value(), parents, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  const Var parents[] = {a, b};
  const auto ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), parents,
                      [ia, ib](Tape& t, const Matrix& g) {
                        if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                        if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                      });
}

Var divide(Var a, Var b) {
  require_same_shape(a, b, "divide");
  const Var parents[] = {a, b};
  const auto ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseQuotient(b.value()), parents,
                      [ia, ib](Tape& t, const Matrix& g) {
                        const Matrix& bv = t.value(ib);
                        if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
                        if (t.needs_grad(ib)) {
                          t.accumulate(ib, -g.cwiseProduct(t.value(ia))
                                               .cwiseQuotient(bv.cwiseProduct(bv)));
                        }
                      });
}

Var scale(Var a, double s) {
  const Var parents[] = {a};
  const auto ia = a.id;
  return a.tape->push(a.value() * s, parents,
                      [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  const Var parents[] = {a};
  const auto ia = a.id;
  return a.tape->push(a.value().array() + s, parents,
                      [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw InvalidInput("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                       std::to_string(row.rows()) + "x" + std::to_string(row.cols()));
  }
  const Var parents[] = {a, row};
  const auto ia = a.id, ir = row.id;
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(v), parents, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var transpose(Var a) {
  const Var parents[] = {a};
  const auto ia = a.id;
  return a.tape->push(a.value().transpose(), parents,
                      [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var gelu(Var a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  Matrix v = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x)));
  });
  return unary(a, std::move(v), [](const Matrix& in, const Matrix&, const Matrix& g) {
    Matrix d = in.unaryExpr([](double x) {
      const double th = std::tanh(k * (x + c * x * x * x));
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * k * (1.0 + 3.0 * c * x * x);
    });
    return Matrix(g.cwiseProduct(d));
  });
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh().matrix();
  return unary(a, std::move(v), [](const Matrix&, const Matrix& out, const Matrix& g) {
    return Matrix(g.array() * (1.0 - out.array().square()));
  });
}

Var softplus(Var a) {
  Matrix v = a.value().unaryExpr(
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  return unary(a, std::move(v), [](const Matrix& in, const Matrix&, const Matrix& g) {
    Matrix s = in.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return Matrix(g.cwiseProduct(s));
  });
}

Var log(Var a) {
  Matrix v = a.value().array().log().matrix();
  return unary(a, std::move(v), [](const Matrix& in, const Matrix&, const Matrix& g) {
    return Matrix(g.cwiseQuotient(in));
  });
}

Var square(Var a) {
  Matrix v = a.value().array().square().matrix();
  return unary(a, std::move(v), [](const Matrix& in, const Matrix&, const Matrix& g) {
    return Matrix(2.0 * g.cwiseProduct(in));
  });
}

Var softmax_rows(Var a) {
  Matrix v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double mx = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - mx).exp().matrix();
    v.row(i) /= v.row(i).sum();
  }
  return unary(a, std::move(v), [](const Matrix&, const Matrix& p, const Matrix& g) {
    Matrix d(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double dot = g.row(i).dot(p.row(i));
      d.row(i) = p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    return d;
  });
}

Var log_softmax_rows(Var a) {
  Matrix v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double mx = v.row(i).maxCoeff();
    const double lse = mx + std::log((v.row(i).array() - mx).exp().sum());
    v.row(i).array() -= lse;
  }
  return unary(a, std::move(v), [](const Matrix&, const Matrix& lp, const Matrix& g) {
    Matrix d(lp.rows(), lp.cols());
    for (Eigen::Index i = 0; i < lp.rows(); ++i) {
      d.row(i) = g.row(i) - lp.row(i).array().exp().matrix() * g.row(i).sum();
    }
    return d;
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw InvalidInput("layer_norm_rows: gain/bias must be 1x" + std::to_string(n));
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);

  const Var parents[] = {x, gain, bias};
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(std::move(out), parents,
                      [ix, ig, ib, xhat, inv_std](Tape& t, const Matrix& g) {
                        if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                        if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
                        if (!t.needs_grad(ix)) return;
                        const Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                        Matrix dx(dxhat.rows(), dxhat.cols());
                        for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                          const double m1 = dxhat.row(i).mean();
                          const double m2 = dxhat.row(i).dot(xhat.row(i)) / double(dxhat.cols());
                          dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 -
                                                    xhat.row(i).array() * m2)
                                                       .matrix();
                        }
                        t.accumulate(ix, dx);
                      });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw InvalidInput("slice_rows: range out of bounds");
  }
  const Var parents[] = {a};
  const auto ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(a.value().middleRows(start, count), parents,
                      [ia, r, c, start, count](Tape& t, const Matrix& g) {
                        Matrix full = Matrix::Zero(r, c);
                        full.middleRows(start, count) = g;
                        t.accumulate(ia, full);
                      });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw InvalidInput("slice_cols: range out of bounds");
  }
  const Var parents[] = {a};
  const auto ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(a.value().middleCols(start, count), parents,
                      [ia, r, c, start, count](Tape& t, const Matrix& g) {
                        Matrix full = Matrix::Zero(r, c);
                        full.middleCols(start, count) = g;
                        t.accumulate(ia, full);
                      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no operands");
  const Eigen::Index c = parts[0].cols();
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw InvalidInput("concat_rows: column mismatch");
    r += p.rows();
  }
  Matrix v(r, c);
  std::vector<std::pair<std::int32_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id, p.rows());
    at += p.rows();
  }
  return parts[0].tape->push(std::move(v), parts, [spans](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& [id, n] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleRows(off, n));
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no operands");
  const Eigen::Index r = parts[0].rows();
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw InvalidInput("concat_cols: row mismatch");
    c += p.cols();
  }
  Matrix v(r, c);
  std::vector<std::pair<std::int32_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id, p.cols());
    at += p.cols();
  }
  return parts[0].tape->push(std::move(v), parts, [spans](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& [id, n] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleCols(off, n));
      off += n;
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw InvalidInput("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                         std::to_string(table.rows()) + " rows");
    }
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  const Var parents[] = {table};
  const auto it = table.id;
  const Eigen::Index r = table.rows(), c = table.cols();
  std::vector<int> held(ids.begin(), ids.end());
  return table.tape->push(std::move(v), parents, [it, r, c, held](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < held.size(); ++i) full.row(held[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(it, full);
  });
}

Var sum(Var a) {
  const Var parents[] = {a};
  const auto ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->push(std::move(v), parents, [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / double(a.value().size())); }

Var softdtw(Var x, Var y, double gamma, softdtw::Metric metric) {
  softdtw::SoftDtwLoss res = softdtw::softdtw_loss(x.value(), y.value(), gamma, metric);
  Matrix v(1, 1);
  v(0, 0) = res.value;
  const Var parents[] = {x, y};
  const auto ix = x.id, iy = y.id;
  return x.tape->push(std::move(v), parents,
                      [ix, iy, xg = std::move(res.x_grad), yg = std::move(res.y_grad)](
                          Tape& t, const Matrix& g) {
                        if (t.needs_grad(ix)) t.accumulate(ix, xg * g(0, 0));
                        if (t.needs_grad(iy)) t.accumulate(iy, yg * g(0, 0));
                      });
}

Var softdtw_cost(Var cost, double gamma) {
  softdtw::CostMatrix c{cost.value(), softdtw::Metric::kSquaredEuclidean};
  softdtw::SoftDtwResult res = softdtw::softdtw_grad(c, gamma);
  Matrix v(1, 1);
  v(0, 0) = res.value;
  const Var parents[] = {cost};
  const auto ic = cost.id;
  return cost.tape->push(std::move(v), parents,
                         [ic, e = std::move(res.cost_grad)](Tape& t, const Matrix& g) {
                           t.accumulate(ic, e * g(0, 0));
                         });
}

}  // namespace evskill::diffcore
