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

// Soft dynamic time warping.
//
// The alignment value is the soft minimum, at temperature gamma, of the summed
// pairwise cost over all monotone alignment paths from (1,1) to (T1,T2):
//
//   r(i,j) = c(i,j) + softmin(r(i-1,j-1), r(i-1,j), r(i,j-1))
//   softmin(a) = -gamma * log(sum_k exp(-a_k / gamma))
//
// with r(0,0) = 0 and r(i,0) = r(0,j) = +inf. The gradient with respect to the
// cost matrix is the expected alignment matrix, computed by a backward pass
// over the same grid.

#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace evskill::softdtw {

enum class Metric { kSquaredEuclidean, kEuclidean };

// Stand-in for +inf on the dynamic-programming boundary.
inline constexpr double kBoundary = 1e30;
inline constexpr double kDefaultGamma = 0.1;

struct CostMatrix {
  Eigen::MatrixXd entries;  // T1 x T2, finite, >= 0
  Metric metric = Metric::kSquaredEuclidean;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
};

struct SoftDtwResult {
  double value = 0.0;
  Eigen::MatrixXd cost_grad;  // d value / d c(i,j), entries in [0, 1]
  double gamma = kDefaultGamma;
};

struct SoftDtwLoss {
  double value = 0.0;
  Eigen::MatrixXd x_grad;  // T1 x D
  Eigen::MatrixXd y_grad;  // T2 x D
};

// Entry (i,j) = metric(x_i, y_j). Throws InvalidInput on empty inputs or a
// feature dimension mismatch.
CostMatrix pairwise_cost(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                         Metric metric = Metric::kSquaredEuclidean);

double softdtw_value(const CostMatrix& c, double gamma);
SoftDtwResult softdtw_grad(const CostMatrix& c, double gamma);

// Soft-DTW between two sequences with the chain rule taken through the
// pairwise cost. Gradients are returned for both arguments.
SoftDtwLoss softdtw_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double gamma,
                         Metric metric = Metric::kSquaredEuclidean);

// Heterogeneous batches; each matrix keeps its own shape.
std::vector<double> softdtw_value(std::span<const CostMatrix> batch, double gamma);
std::vector<SoftDtwResult> softdtw_grad(std::span<const CostMatrix> batch, double gamma);

// Classic (hard) DTW by dynamic programming.
double dtw_value(const CostMatrix& c);

}  // namespace evskill::softdtw
