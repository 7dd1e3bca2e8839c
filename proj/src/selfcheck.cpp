// Copyright 2026 The pmifp Authors
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

#include "pmifp/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pmifp/rng.hpp"

namespace pmifp::selfcheck {

namespace {

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double lo,
                              double hi) {
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = uniform_real(rng, lo, hi);
  return out;
}

// Random symmetric distance matrix; about half the instances quantize the
// entries to one decimal so arg-min ties actually occur.
DistanceMatrix random_distances(std::mt19937_64& rng, int m) {
  DistanceMatrix d = DistanceMatrix::Zero(m, m);
  const bool quantize = uniform_unit(rng) < 0.5;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      double v = uniform_real(rng, 0.1, 10.0);
      if (quantize) v = std::round(v * 10.0) / 10.0;
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

bool same_tree(const ClusterTree& a, const ClusterTree& b) {
  if (a.leaf_count != b.leaf_count || a.merges.size() != b.merges.size()) return false;
  for (std::size_t i = 0; i < a.merges.size(); ++i) {
    const Merge& x = a.merges[i];
    const Merge& y = b.merges[i];
    if (x.left != y.left || x.right != y.right || x.distance != y.distance) return false;
  }
  return true;
}

}  // namespace

double mmd_bruteforce(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys) {
  const Eigen::Index n = xs.rows();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double h = xs.row(i).dot(xs.row(j)) + ys.row(i).dot(ys.row(j)) -
                       xs.row(i).dot(ys.row(j)) - xs.row(j).dot(ys.row(i));
      sum += h;
    }
  const double s = sum / static_cast<double>(n * n - n);
  return std::sqrt(std::max(s, 0.0));
}

ClusterTree single_linkage_bruteforce(const DistanceMatrix& distances) {
  const int m = static_cast<int>(distances.rows());
  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) clusters[static_cast<std::size_t>(i)] = {i};

  ClusterTree tree;
  tree.leaf_count = m;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0, best_j = 0;
    int best_lo = 0, best_hi = 0;
    for (std::size_t i = 0; i + 1 < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double d = std::numeric_limits<double>::infinity();
        for (int a : clusters[i])
          for (int b : clusters[j]) d = std::min(d, distances(a, b));
        const int lo = std::min(clusters[i].front(), clusters[j].front());
        const int hi = std::max(clusters[i].front(), clusters[j].front());
        if (d < best || (d == best && (lo < best_lo || (lo == best_lo && hi < best_hi)))) {
          best = d;
          best_lo = lo;
          best_hi = hi;
          best_i = i;
          best_j = j;
        }
      }

    Merge merge;
    const auto& ca = clusters[best_i];
    const auto& cb = clusters[best_j];
    if (ca.front() < cb.front()) {
      merge.left = ca;
      merge.right = cb;
    } else {
      merge.left = cb;
      merge.right = ca;
    }
    merge.distance = best;
    tree.merges.push_back(merge);

    std::vector<int> merged;
    std::merge(ca.begin(), ca.end(), cb.begin(), cb.end(), std::back_inserter(merged));
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_j));
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_i));
    clusters.push_back(std::move(merged));
  }
  return tree;
}

Eigen::VectorXd numerical_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   const Eigen::VectorXi& labels, double step) {
  MlpModel probe = model;
  Eigen::VectorXd grad(model.params().size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double original = probe.params()(i);
    probe.params()(i) = original + step;
    const double up = cross_entropy_loss(probe, inputs, labels);
    probe.params()(i) = original - step;
    const double down = cross_entropy_loss(probe, inputs, labels);
    probe.params()(i) = original;
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

CheckResult check_mmd(int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int it = 0; it < pairs; ++it) {
    const int n = 2 + uniform_int(rng, 7);  // 2..8
    const int c = 1 + uniform_int(rng, 6);  // 1..6
    const Eigen::MatrixXd xs = random_matrix(rng, n, c, -2.0, 2.0);
    const Eigen::MatrixXd ys = random_matrix(rng, n, c, -2.0, 2.0);
    worst = std::max(worst, std::abs(mmd_unbiased(xs, ys) - mmd_bruteforce(xs, ys)));
    if (mmd_unbiased(xs, xs) != 0.0)
      return {"mmd", false, "mmd(X, X) is not exactly zero"};
  }
  const bool passed = worst <= 1e-12;
  return {"mmd", passed, format("max |impl - oracle| = %.3g over %g pairs", worst, pairs)};
}

CheckResult check_clustering(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int it = 0; it < instances; ++it) {
    const int m = 2 + uniform_int(rng, 6);  // 2..7
    const DistanceMatrix d = random_distances(rng, m);
    if (!same_tree(agglomerative_cluster(d), single_linkage_bruteforce(d)))
      return {"clustering", false, "merge sequence diverges from the oracle at m=" +
                                       std::to_string(m)};
  }
  return {"clustering", true,
          std::to_string(instances) + " random instances match the oracle"};
}

CheckResult check_normalization(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst_mean = 0.0, worst_square = 0.0;
  for (int it = 0; it < instances; ++it) {
    const int m = 1 + uniform_int(rng, 5);   // 1..5
    const int n = 2 + uniform_int(rng, 49);  // 2..50
    const int c = 1 + uniform_int(rng, 10);  // 1..10
    const int constant_component = uniform_unit(rng) < 0.3 ? uniform_int(rng, c) : -1;
    std::vector<FeatureMatrix> matrices;
    for (int i = 0; i < m; ++i) {
      FeatureMatrix fm;
      fm.values = random_matrix(rng, n, c, -5.0, 5.0);
      if (constant_component >= 0) fm.values.col(constant_component).setConstant(3.25);
      fm.source_index = i;
      matrices.push_back(std::move(fm));
    }
    std::vector<int> zeroed;
    const std::vector<FeatureMatrix> normalized = normalize_features(matrices, &zeroed);
    for (int k = 0; k < c; ++k) {
      double sum = 0.0, sum_square = 0.0;
      for (const auto& fm : normalized) {
        sum += fm.values.col(k).sum();
        sum_square += fm.values.col(k).squaredNorm();
      }
      const double total = static_cast<double>(n) * m;
      if (k == constant_component) {
        if (std::count(zeroed.begin(), zeroed.end(), k) != 1 || sum_square != 0.0)
          return {"normalization", false, "constant component was not zeroed"};
        continue;
      }
      worst_mean = std::max(worst_mean, std::abs(sum / total));
      worst_square = std::max(worst_square, std::abs(sum_square / total - 1.0));
    }
  }
  const bool passed = worst_mean < 1e-9 && worst_square < 1e-9;
  return {"normalization", passed,
          format("max |pooled mean| = %.3g, max |pooled mean square - 1| = %.3g",
                 worst_mean, worst_square)};
}

CheckResult check_gradients(int networks, std::uint64_t seed, double step, double rel_tol) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  double worst_abs = 0.0;
  for (int it = 0; it < networks; ++it) {
    const int d = 2 + uniform_int(rng, 7);  // 2..8
    const int h = 2 + uniform_int(rng, 7);  // 2..8
    const int c = 2 + uniform_int(rng, 3);  // 2..4
    const int batch = 1 + uniform_int(rng, 6);
    const MlpModel model = MlpModel::glorot_init(d, h, c, rng());
    const Eigen::MatrixXd inputs = random_matrix(rng, batch, d, -1.5, 1.5);
    Eigen::VectorXi labels(batch);
    for (int i = 0; i < batch; ++i) labels(i) = uniform_int(rng, c);

    const Eigen::VectorXd analytic = loss_and_gradient(model, inputs, labels).grad;
    const Eigen::VectorXd numeric = numerical_gradient(model, inputs, labels, step);
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      const double diff = std::abs(analytic(i) - numeric(i));
      worst_abs = std::max(worst_abs, diff);
      if (diff <= 1e-10) continue;  // below central-difference roundoff
      // The 1e-4 floor keeps near-zero gradients from turning roundoff
      // into a large ratio; real sign or scale bugs still register.
      const double rel =
          diff / std::max({std::abs(analytic(i)), std::abs(numeric(i)), 1e-4});
      worst = std::max(worst, rel);
    }
  }
  const bool passed = worst <= rel_tol;
  return {"gradients", passed,
          format("max relative error = %.3g, max absolute difference = %.3g", worst,
                 worst_abs) +
              format(" over %g networks", networks)};
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  return {check_mmd(200, mix_seed(seed, 1)), check_clustering(200, mix_seed(seed, 2)),
          check_normalization(200, mix_seed(seed, 3)),
          check_gradients(20, mix_seed(seed, 4))};
}

}  // namespace pmifp::selfcheck
