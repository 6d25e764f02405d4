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

// Matrix-valued reverse-mode differentiation.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the node's gradient to its parents. Parameters enter
// either as tracked leaves (gradients accumulate into Param::grad) or as
// constants; nothing upstream of a constant receives gradient.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "evskill/softdtw.hpp"

namespace evskill::diffcore {

using Matrix = Eigen::MatrixXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Named parameter tensors with an all-or-nothing frozen flag. Storage is a
// deque so references handed to a Tape stay valid while tensors are added.
class ParamSet {
 public:
  Param& add(std::string name, Matrix init);

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;

  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Var constant(Matrix value);
  // Tracked leaf; backward() adds d root / d value into p.grad.
  Var leaf(Param& p);
  // Leaf unless `frozen`, in which case a constant copy. Cached per param.
  Var bind(Param& p, bool frozen);
  Var bind_constant(const Param& p);

  // Seeds d root / d root = 1 and runs every recorded closure in reverse.
  void backward(Var root);

  const Matrix& value(std::int32_t id) const { return nodes_[id].value; }
  bool needs_grad(std::int32_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Op construction. `parents` decides whether the node needs a gradient.
  Var push(Matrix value, std::span<const Var> parents, Backward back);
  void accumulate(std::int32_t id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    Param* sink = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, std::int32_t> bound_;
};

// ----- elementwise / algebra -----
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var divide(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_row(Var a, Var row);  // broadcasts a 1 x C row over every row of a
Var transpose(Var a);

// ----- nonlinearities -----
Var gelu(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var log(Var a);
Var square(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

// ----- shape -----
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const int> ids);

// ----- reductions and losses (all return 1 x 1) -----
Var sum(Var a);
Var mean(Var a);
Var softdtw(Var x, Var y, double gamma, softdtw::Metric metric = softdtw::Metric::kSquaredEuclidean);
// Soft-DTW of a precomputed non-negative cost matrix.
Var softdtw_cost(Var cost, double gamma);

}  // namespace evskill::diffcore
