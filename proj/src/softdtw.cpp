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

#include "evskill/softdtw.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evskill/errors.hpp"

namespace evskill::softdtw {
namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidInput("soft-DTW gamma must be a positive finite number, got " +
                       std::to_string(gamma));
  }
}

void check_cost(const CostMatrix& c) {
  if (c.rows() < 1 || c.cols() < 1) {
    throw InvalidInput("soft-DTW cost matrix must be at least 1x1");
  }
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double v = c.entries(i, j);
      if (!std::isfinite(v)) {
        throw InvalidInput("soft-DTW cost entry (" + std::to_string(i) + "," + std::to_string(j) +
                           ") is not finite");
      }
      if (v < 0.0) {
        throw InvalidInput("soft-DTW cost entry (" + std::to_string(i) + "," + std::to_string(j) +
                           ") is negative");
      }
    }
  }
}

double softmin3(double a, double b, double c, double gamma) {
  const double lo = std::min({a, b, c});
  if (lo >= kBoundary) return kBoundary;
  const double s = std::exp(-(a - lo) / gamma) + std::exp(-(b - lo) / gamma) +
                   std::exp(-(c - lo) / gamma);
  return lo - gamma * std::log(s);
}

// (T1+1) x (T2+1) accumulated-cost table; row/col 0 is the boundary.
Eigen::MatrixXd forward_table(const Eigen::MatrixXd& c, double gamma) {
  const Eigen::Index n = c.rows();
  const Eigen::Index m = c.cols();
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(n + 1, m + 1, kBoundary);
  r(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      r(i, j) = c(i - 1, j - 1) + softmin3(r(i - 1, j - 1), r(i - 1, j), r(i, j - 1), gamma);
    }
  }
  return r;
}

}  // namespace

CostMatrix pairwise_cost(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Metric metric) {
  if (x.rows() < 1 || y.rows() < 1) {
    throw InvalidInput("pairwise_cost: both sequences must be non-empty");
  }
  if (x.cols() < 1 || x.cols() != y.cols()) {
    throw InvalidInput("pairwise_cost: feature dimension mismatch (" + std::to_string(x.cols()) +
                       " vs " + std::to_string(y.cols()) + ")");
  }
  CostMatrix out;
  out.metric = metric;
  out.entries.resize(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      const double sq = (x.row(i) - y.row(j)).squaredNorm();
      out.entries(i, j) = metric == Metric::kSquaredEuclidean ? sq : std::sqrt(sq);
    }
  }
  return out;
}

double softdtw_value(const CostMatrix& c, double gamma) {
  check_gamma(gamma);
  check_cost(c);
  return forward_table(c.entries, gamma)(c.rows(), c.cols());
}

SoftDtwResult softdtw_grad(const CostMatrix& c, double gamma) {
  check_gamma(gamma);
  check_cost(c);
  const Eigen::Index n = c.rows();
  const Eigen::Index m = c.cols();
  const Eigen::MatrixXd r = forward_table(c.entries, gamma);

  // e(i,j) = d r(n,m) / d r(i,j), 1-based to match the table. Each successor
  // (i',j') of (i,j) contributes its weight in the softmin that fed r(i',j').
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n + 2, m + 2);
  e(n, m) = 1.0;
  for (Eigen::Index i = n; i >= 1; --i) {
    for (Eigen::Index j = m; j >= 1; --j) {
      if (i == n && j == m) continue;
      double acc = 0.0;
      const auto pull = [&](Eigen::Index si, Eigen::Index sj) {
        if (si > n || sj > m) return;
        const double soft = r(si, sj) - c.entries(si - 1, sj - 1);
        acc += e(si, sj) * std::exp((soft - r(i, j)) / gamma);
      };
      pull(i + 1, j);
      pull(i, j + 1);
      pull(i + 1, j + 1);
      e(i, j) = acc;
    }
  }

  SoftDtwResult out;
  out.value = r(n, m);
  out.gamma = gamma;
  out.cost_grad = e.block(1, 1, n, m);
  return out;
}

SoftDtwLoss softdtw_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double gamma,
                         Metric metric) {
  const CostMatrix cost = pairwise_cost(x, y, metric);
  const SoftDtwResult res = softdtw_grad(cost, gamma);
  SoftDtwLoss out;
  out.value = res.value;
  out.x_grad = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  out.y_grad = Eigen::MatrixXd::Zero(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      const double w = res.cost_grad(i, j);
      if (w == 0.0) continue;
      Eigen::RowVectorXd d = x.row(i) - y.row(j);
      if (metric == Metric::kSquaredEuclidean) {
        d *= 2.0;
      } else {
        const double norm = cost.entries(i, j);
        // Subgradient 0 at coincident points.
        if (norm == 0.0) continue;
        d /= norm;
      }
      out.x_grad.row(i) += w * d;
      out.y_grad.row(j) -= w * d;
    }
  }
  return out;
}

std::vector<double> softdtw_value(std::span<const CostMatrix> batch, double gamma) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& c : batch) out.push_back(softdtw_value(c, gamma));
  return out;
}

std::vector<SoftDtwResult> softdtw_grad(std::span<const CostMatrix> batch, double gamma) {
  std::vector<SoftDtwResult> out;
  out.reserve(batch.size());
  for (const auto& c : batch) out.push_back(softdtw_grad(c, gamma));
  return out;
}

double dtw_value(const CostMatrix& c) {
  check_cost(c);
  const Eigen::Index n = c.rows();
  const Eigen::Index m = c.cols();
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(n + 1, m + 1, kBoundary);
  r(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      r(i, j) = c.entries(i - 1, j - 1) + std::min({r(i - 1, j - 1), r(i - 1, j), r(i, j - 1)});
    }
  }
  return r(n, m);
}

}  // namespace evskill::softdtw
