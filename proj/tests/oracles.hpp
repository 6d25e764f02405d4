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

// Reference implementations used only by tests. None of them share code
// with the library.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;

// Sum of cost along every monotone alignment path from (0,0) to (n-1,m-1).
inline void enumerate_paths(const Mat& c, std::vector<double>& out, Eigen::Index i = 0,
                            Eigen::Index j = 0, double acc = 0.0) {
  acc += c(i, j);
  const Eigen::Index n = c.rows(), m = c.cols();
  if (i == n - 1 && j == m - 1) {
    out.push_back(acc);
    return;
  }
  if (i + 1 < n) enumerate_paths(c, out, i + 1, j, acc);
  if (j + 1 < m) enumerate_paths(c, out, i, j + 1, acc);
  if (i + 1 < n && j + 1 < m) enumerate_paths(c, out, i + 1, j + 1, acc);
}

inline std::vector<double> path_costs(const Mat& c) {
  std::vector<double> out;
  enumerate_paths(c, out);
  return out;
}

// -gamma * log sum exp(-cost / gamma) over all paths, stabilised.
inline double brute_softdtw(const Mat& c, double gamma) {
  const auto costs = path_costs(c);
  const double lo = *std::min_element(costs.begin(), costs.end());
  double s = 0.0;
  for (double x : costs) s += std::exp(-(x - lo) / gamma);
  return lo - gamma * std::log(s);
}

inline double brute_dtw(const Mat& c) {
  const auto costs = path_costs(c);
  return *std::min_element(costs.begin(), costs.end());
}

// Central Delannoy number D(n-1, m-1): count of monotone (right, down,
// diagonal) paths across an n x m grid.
inline double delannoy(int n, int m) {
  const int a = n - 1, b = m - 1;
  double total = 0.0;
  for (int k = 0; k <= std::min(a, b); ++k) {
    total += std::tgamma(a + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(a - k + 1.0)) *
             std::tgamma(b + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(b - k + 1.0)) *
             std::pow(2.0, k);
  }
  return total;
}

// Gradient of the path-softmin with respect to each cost entry: the
// Gibbs-weighted fraction of paths through (i, j).
inline Mat brute_expected_alignment(const Mat& c, double gamma) {
  const Eigen::Index n = c.rows(), m = c.cols();
  Mat e = Mat::Zero(n, m);
  std::vector<std::pair<double, std::vector<std::pair<Eigen::Index, Eigen::Index>>>> paths;
  std::function<void(Eigen::Index, Eigen::Index, double, std::vector<std::pair<Eigen::Index, Eigen::Index>>&)> rec =
      [&](Eigen::Index i, Eigen::Index j, double acc, std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells) {
        acc += c(i, j);
        cells.emplace_back(i, j);
        if (i == n - 1 && j == m - 1) {
          paths.emplace_back(acc, cells);
        } else {
          if (i + 1 < n) rec(i + 1, j, acc, cells);
          if (j + 1 < m) rec(i, j + 1, acc, cells);
          if (i + 1 < n && j + 1 < m) rec(i + 1, j + 1, acc, cells);
        }
        cells.pop_back();
      };
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  rec(0, 0, 0.0, cells);
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& p : paths) lo = std::min(lo, p.first);
  double z = 0.0;
  for (const auto& p : paths) z += std::exp(-(p.first - lo) / gamma);
  for (const auto& p : paths) {
    const double w = std::exp(-(p.first - lo) / gamma) / z;
    for (const auto& [i, j] : p.second) e(i, j) += w;
  }
  return e;
}

inline Mat sq_euclid_cost(const Mat& x, const Mat& y) {
  Mat c(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  }
  return c;
}

inline Mat euclid_cost(const Mat& x, const Mat& y) { return sq_euclid_cost(x, y).cwiseSqrt(); }

inline Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Central finite difference of f at x along coordinate k.
inline double central_diff(const std::function<double(const Mat&)>& f, Mat x, Eigen::Index k,
                           double eps) {
  const double x0 = x.data()[k];
  x.data()[k] = x0 + eps;
  const double up = f(x);
  x.data()[k] = x0 - eps;
  const double down = f(x);
  return (up - down) / (2.0 * eps);
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Multiclass linear probe: one-vs-rest ridge regression on [x, 1].
// Returns accuracy on (test_x, test_y).
inline double linear_probe(const Mat& train_x, const std::vector<int>& train_y, const Mat& test_x,
                           const std::vector<int>& test_y, int classes, double ridge = 1e-3) {
  const Eigen::Index d = train_x.cols();
  Mat a(train_x.rows(), d + 1);
  a << train_x, Mat::Ones(train_x.rows(), 1);
  Mat t = Mat::Constant(train_x.rows(), classes, -1.0);
  for (std::size_t i = 0; i < train_y.size(); ++i) t(static_cast<Eigen::Index>(i), train_y[i]) = 1.0;
  const Mat gram = a.transpose() * a + ridge * Mat::Identity(d + 1, d + 1);
  const Mat w = gram.ldlt().solve(a.transpose() * t);
  Mat b(test_x.rows(), d + 1);
  b << test_x, Mat::Ones(test_x.rows(), 1);
  const Mat scores = b * w;
  int hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index arg = 0;
    scores.row(i).maxCoeff(&arg);
    hits += static_cast<int>(arg) == test_y[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(test_y.size());
}

// Loop closure of an xy path: |end - start| / arc length.
inline double loop_closure(const Mat& xy) {
  double arc = 0.0;
  for (Eigen::Index t = 1; t < xy.rows(); ++t) {
    arc += std::hypot(xy(t, 0) - xy(t - 1, 0), xy(t, 1) - xy(t - 1, 1));
  }
  const double gap = std::hypot(xy(xy.rows() - 1, 0) - xy(0, 0), xy(xy.rows() - 1, 1) - xy(0, 1));
  return arc > 0.0 ? gap / arc : 1.0;
}

// Sample standard error of the mean.
inline double stderr_mean(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace oracle
