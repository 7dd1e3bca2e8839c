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

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pmifp/dataset.hpp"
#include "pmifp/errors.hpp"
#include "pmifp/nn.hpp"

namespace pmifp {

/// Last-layer logit vectors of one mini-dataset, one sample per row (n x c).
struct FeatureMatrix {
  Eigen::MatrixXd values;
  int source_index = 0;  // the mini-dataset's assigned index in [0, m)
};

/// Symmetric, zero-diagonal, non-negative pairwise distances.
using DistanceMatrix = Eigen::MatrixXd;

struct Merge {
  std::vector<int> left;   // leaf indices, sorted; min(left) < min(right)
  std::vector<int> right;
  double distance = 0.0;
};

/// Full merge history of a bottom-up clustering: leaf_count - 1 merges.
/// The two clusters joined by the last merge are the final pair.
struct ClusterTree {
  int leaf_count = 0;
  std::vector<Merge> merges;
  const Merge& final_merge() const { return merges.back(); }
};

namespace detail {

/// Sum of a_i . b_j over all ordered pairs i != j. Written so that the
/// three calls inside mmd_unbiased use the identical expression, which
/// makes mmd_unbiased(X, X) exactly zero.
template <typename DerivedA, typename DerivedB>
double cross_pair_sum(const Eigen::MatrixBase<DerivedA>& a,
                      const Eigen::MatrixBase<DerivedB>& b) {
  const double full = a.colwise().sum().dot(b.colwise().sum());
  const double diagonal = (a.array() * b.array()).sum();
  return full - diagonal;
}

}  // namespace detail

/// Unbiased maximum-mean-discrepancy estimate between two equally sized
/// sample sets (rows), with the dot-product kernel:
///
///   s = 1/(n^2-n) * sum_{i != j} (x_i.x_j + y_i.y_j - x_i.y_j - x_j.y_i)
///
/// The estimate can come out negative on finite samples; it is clamped at
/// zero before the square root so the result is a valid distance.
template <typename DerivedX, typename DerivedY>
double mmd_unbiased(const Eigen::MatrixBase<DerivedX>& xs,
                    const Eigen::MatrixBase<DerivedY>& ys) {
  const Eigen::Index n = xs.rows();
  if (ys.rows() != n) throw ConfigError("mmd_unbiased: sample counts differ");
  if (xs.cols() != ys.cols()) throw ConfigError("mmd_unbiased: feature dimensions differ");
  if (n < 2) throw ConfigError("mmd_unbiased: need at least 2 samples per set");
  const double xx = detail::cross_pair_sum(xs, xs);
  const double yy = detail::cross_pair_sum(ys, ys);
  const double xy = detail::cross_pair_sum(xs, ys);
  const double s = (xx + yy - 2.0 * xy) / static_cast<double>(n * n - n);
  return std::sqrt(std::max(s, 0.0));
}

/// Row j holds the pre-softmax logits of sample j.
FeatureMatrix extract_features(const MlpModel& model, const MiniDataset& mini);

/// Affine per-component normalization pooled over all matrices jointly:
/// subtract the pooled mean, divide by the pooled root-mean-square of the
/// centered values. Components constant across all entries are set to zero
/// (their indices are appended to *zeroed_components when given) instead of
/// dividing by zero.
std::vector<FeatureMatrix> normalize_features(const std::vector<FeatureMatrix>& matrices,
                                              std::vector<int>* zeroed_components = nullptr);

/// Pairwise unbiased-MMD distances; each unordered pair is computed once.
DistanceMatrix distance_matrix(const std::vector<FeatureMatrix>& matrices);

/// Bottom-up single-linkage agglomeration over the given distances. The
/// inter-cluster distance is the minimum cross-pair distance; arg-min ties
/// break lexicographically on (min member index of left, min member index
/// of right). Rejects non-symmetric or negative input.
ClusterTree agglomerative_cluster(const DistanceMatrix& distances);

/// Names the abnormal leaf from the final two clusters: the smaller one is
/// abnormal; a singleton is returned directly, otherwise a seeded uniform
/// member is drawn. Equal-size finals fall back to leaf joining height (the
/// distance of the first merge containing the leaf): the cluster holding
/// the highest-joining leaf is abnormal, ties toward the smallest leaf.
int select_outlier(const ClusterTree& tree, std::uint64_t seed);

/// extract -> normalize -> distance_matrix -> agglomerative_cluster ->
/// select_outlier; returns the assigned index of the mini-dataset judged to
/// have been part of the training set.
int infer_member(const MlpModel& model, const std::vector<MiniDataset>& minis,
                 std::uint64_t seed);

/// Same pipeline over pre-extracted feature matrices (black-box path);
/// returns the source_index of the selected matrix.
int infer_member(const std::vector<FeatureMatrix>& features, std::uint64_t seed);

/// Logit file: header "n,c", then n rows of c comma-separated floats.
FeatureMatrix load_logit_file(const std::string& path, int source_index);
void save_logit_file(const FeatureMatrix& features, const std::string& path);

}  // namespace pmifp
