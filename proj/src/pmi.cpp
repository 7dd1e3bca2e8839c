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

#include "pmifp/pmi.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "pmifp/rng.hpp"

namespace pmifp {

namespace {

constexpr std::uint64_t kOutlierPickSalt = 0x6f75746cULL;

struct Cluster {
  std::vector<int> members;  // sorted
  int min_member() const { return members.front(); }
};

std::vector<int> merge_sorted(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

void validate_shapes(const std::vector<FeatureMatrix>& matrices) {
  if (matrices.empty()) throw ConfigError("no feature matrices given");
  const Eigen::Index n = matrices.front().values.rows();
  const Eigen::Index c = matrices.front().values.cols();
  if (n < 1 || c < 1) throw ConfigError("empty feature matrix");
  for (const auto& fm : matrices) {
    if (fm.values.rows() != n || fm.values.cols() != c)
      throw ConfigError("feature matrices must share n and c");
    if (!fm.values.allFinite()) throw ConfigError("feature matrix has non-finite entries");
  }
}

}  // namespace

FeatureMatrix extract_features(const MlpModel& model, const MiniDataset& mini) {
  if (mini.size() < 2) throw ConfigError("mini-dataset needs at least 2 samples");
  FeatureMatrix fm;
  fm.values = model.logits_batch(mini.features);
  fm.source_index = mini.index;
  return fm;
}

std::vector<FeatureMatrix> normalize_features(const std::vector<FeatureMatrix>& matrices,
                                              std::vector<int>* zeroed_components) {
  validate_shapes(matrices);
  const Eigen::Index c = matrices.front().values.cols();
  const Eigen::Index n = matrices.front().values.rows();
  const double total = static_cast<double>(n) * static_cast<double>(matrices.size());

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(c, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(c, -std::numeric_limits<double>::infinity());
  for (const auto& fm : matrices) {
    mean += fm.values.colwise().sum().transpose();
    lo = lo.cwiseMin(fm.values.colwise().minCoeff().transpose());
    hi = hi.cwiseMax(fm.values.colwise().maxCoeff().transpose());
  }
  mean /= total;

  Eigen::VectorXd mean_square = Eigen::VectorXd::Zero(c);
  for (const auto& fm : matrices)
    mean_square +=
        (fm.values.rowwise() - mean.transpose()).array().square().colwise().sum().matrix();
  mean_square /= total;

  Eigen::VectorXd scale(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    if (lo(k) == hi(k)) {
      // Constant component (e.g. a dead rectifier unit): zero it instead
      // of dividing by zero.
      scale(k) = 0.0;
      mean(k) = lo(k);
      if (zeroed_components) zeroed_components->push_back(static_cast<int>(k));
    } else {
      scale(k) = 1.0 / std::sqrt(mean_square(k));
    }
  }

  std::vector<FeatureMatrix> out;
  out.reserve(matrices.size());
  for (const auto& fm : matrices) {
    FeatureMatrix norm;
    norm.values = (fm.values.rowwise() - mean.transpose()) * scale.asDiagonal();
    norm.source_index = fm.source_index;
    out.push_back(std::move(norm));
  }
  return out;
}

DistanceMatrix distance_matrix(const std::vector<FeatureMatrix>& matrices) {
  validate_shapes(matrices);
  const int m = static_cast<int>(matrices.size());
  if (m < 2) throw ConfigError("distance_matrix: need at least 2 matrices");
  DistanceMatrix distances = DistanceMatrix::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double d = mmd_unbiased(matrices[static_cast<std::size_t>(i)].values,
                                    matrices[static_cast<std::size_t>(j)].values);
      distances(i, j) = d;
      distances(j, i) = d;
    }
  return distances;
}

ClusterTree agglomerative_cluster(const DistanceMatrix& distances) {
  const int m = static_cast<int>(distances.rows());
  if (distances.cols() != m) throw ConfigError("distance matrix must be square");
  if (m < 2) throw ConfigError("clustering needs at least 2 objects");
  for (int i = 0; i < m; ++i) {
    if (distances(i, i) != 0.0) throw ConfigError("distance matrix diagonal must be zero");
    for (int j = 0; j < m; ++j) {
      if (distances(i, j) < 0.0) throw ConfigError("distance matrix has a negative entry");
      if (distances(i, j) != distances(j, i))
        throw ConfigError("distance matrix is not symmetric");
    }
  }

  std::vector<Cluster> active(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) active[static_cast<std::size_t>(i)].members = {i};
  Eigen::MatrixXd cluster_dist = distances;  // single-linkage distances between active clusters

  ClusterTree tree;
  tree.leaf_count = m;
  tree.merges.reserve(static_cast<std::size_t>(m - 1));

  while (active.size() > 1) {
    // Arg-min over unordered pairs; ties resolve by the smallest
    // (min member of first, min member of second) with first = the
    // cluster whose minimum member index is smaller.
    int best_a = -1, best_b = -1;
    double best_distance = std::numeric_limits<double>::infinity();
    int best_lo = 0, best_hi = 0;
    for (std::size_t i = 0; i + 1 < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double d = cluster_dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const int lo = std::min(active[i].min_member(), active[j].min_member());
        const int hi = std::max(active[i].min_member(), active[j].min_member());
        if (d < best_distance ||
            (d == best_distance && (lo < best_lo || (lo == best_lo && hi < best_hi)))) {
          best_distance = d;
          best_lo = lo;
          best_hi = hi;
          best_a = static_cast<int>(i);
          best_b = static_cast<int>(j);
        }
      }

    const Cluster& first = active[static_cast<std::size_t>(best_a)];
    const Cluster& second = active[static_cast<std::size_t>(best_b)];
    Merge merge;
    if (first.min_member() < second.min_member()) {
      merge.left = first.members;
      merge.right = second.members;
    } else {
      merge.left = second.members;
      merge.right = first.members;
    }
    merge.distance = best_distance;
    tree.merges.push_back(merge);

    // Replace the pair with its union; single linkage keeps the minimum
    // of the two old distances to every other cluster.
    Cluster merged;
    merged.members = merge_sorted(first.members, second.members);
    const std::size_t count = active.size();
    std::vector<Cluster> next;
    next.reserve(count - 1);
    Eigen::MatrixXd next_dist(count - 1, count - 1);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < count; ++i)
      if (static_cast<int>(i) != best_a && static_cast<int>(i) != best_b) keep.push_back(i);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      next.push_back(std::move(active[keep[i]]));
      for (std::size_t j = 0; j < keep.size(); ++j)
        next_dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            cluster_dist(static_cast<Eigen::Index>(keep[i]), static_cast<Eigen::Index>(keep[j]));
    }
    const Eigen::Index merged_at = static_cast<Eigen::Index>(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const double d = std::min(
          cluster_dist(static_cast<Eigen::Index>(keep[i]), static_cast<Eigen::Index>(best_a)),
          cluster_dist(static_cast<Eigen::Index>(keep[i]), static_cast<Eigen::Index>(best_b)));
      next_dist(static_cast<Eigen::Index>(i), merged_at) = d;
      next_dist(merged_at, static_cast<Eigen::Index>(i)) = d;
    }
    next_dist(merged_at, merged_at) = 0.0;
    next.push_back(std::move(merged));
    active = std::move(next);
    cluster_dist = std::move(next_dist);
  }
  return tree;
}

int select_outlier(const ClusterTree& tree, std::uint64_t seed) {
  if (tree.merges.empty() || tree.leaf_count < 2)
    throw ConfigError("cluster tree has no merges");
  const Merge& last = tree.final_merge();

  const std::vector<int>* abnormal = nullptr;
  if (last.left.size() != last.right.size()) {
    abnormal = last.left.size() < last.right.size() ? &last.left : &last.right;
  } else {
    // Equal sizes: rank leaves by joining height, the distance of the
    // first merge that contains the leaf. Highest joining leaf marks the
    // abnormal cluster; ties go to the smallest leaf index.
    std::vector<double> joined_at(static_cast<std::size_t>(tree.leaf_count), -1.0);
    for (const Merge& merge : tree.merges) {
      for (const auto* side : {&merge.left, &merge.right})
        for (int leaf : *side) {
          auto& height = joined_at[static_cast<std::size_t>(leaf)];
          if (height < 0.0) height = merge.distance;
        }
    }
    int extreme = 0;
    for (int leaf = 1; leaf < tree.leaf_count; ++leaf)
      if (joined_at[static_cast<std::size_t>(leaf)] >
          joined_at[static_cast<std::size_t>(extreme)])
        extreme = leaf;
    const bool in_left = std::binary_search(last.left.begin(), last.left.end(), extreme);
    abnormal = in_left ? &last.left : &last.right;
  }

  if (abnormal->size() == 1) return abnormal->front();
  std::mt19937_64 rng(mix_seed(seed, kOutlierPickSalt));
  return (*abnormal)[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(abnormal->size())))];
}

int infer_member(const std::vector<FeatureMatrix>& features, std::uint64_t seed) {
  if (features.size() < 2) throw ConfigError("infer_member: need at least 2 mini-datasets");
  const std::vector<FeatureMatrix> normalized = normalize_features(features);
  const DistanceMatrix distances = distance_matrix(normalized);
  const ClusterTree tree = agglomerative_cluster(distances);
  const int leaf = select_outlier(tree, seed);
  return features[static_cast<std::size_t>(leaf)].source_index;
}

int infer_member(const MlpModel& model, const std::vector<MiniDataset>& minis,
                 std::uint64_t seed) {
  if (minis.size() < 2) throw ConfigError("infer_member: need at least 2 mini-datasets");
  const int m = static_cast<int>(minis.size());
  const int n = minis.front().size();
  const int label = minis.front().label;
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  std::vector<FeatureMatrix> features;
  features.reserve(minis.size());
  for (const MiniDataset& mini : minis) {
    if (mini.size() != n) throw ConfigError("mini-datasets must share n");
    if (mini.label != label) throw ConfigError("mini-datasets must share the class label");
    if (mini.index < 0 || mini.index >= m || seen[static_cast<std::size_t>(mini.index)])
      throw ConfigError("mini-dataset indices must be distinct values in [0, m)");
    seen[static_cast<std::size_t>(mini.index)] = 1;
    features.push_back(extract_features(model, mini));
  }
  return infer_member(features, seed);
}

FeatureMatrix load_logit_file(const std::string& path, int source_index) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing header");
  long n = 0, c = 0;
  {
    char* end = nullptr;
    n = std::strtol(line.c_str(), &end, 10);
    if (end == line.c_str() || *end != ',') throw IoError(path + ": header must be 'n,c'");
    const char* rest = end + 1;
    c = std::strtol(rest, &end, 10);
    if (end == rest || *end != '\0') throw IoError(path + ": header must be 'n,c'");
  }
  if (n < 2 || c < 1) throw IoError(path + ": invalid header dimensions");

  FeatureMatrix fm;
  fm.values.resize(n, c);
  fm.source_index = source_index;
  for (long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw IoError(path + ": truncated after " +
                                               std::to_string(i) + " rows");
    const char* cursor = line.c_str();
    for (long k = 0; k < c; ++k) {
      char* end = nullptr;
      fm.values(i, k) = std::strtod(cursor, &end);
      if (end == cursor) throw IoError(path + ": malformed row " + std::to_string(i));
      cursor = (k + 1 < c) ? end + 1 : end;
      if (k + 1 < c && *end != ',')
        throw IoError(path + ": expected ',' in row " + std::to_string(i));
    }
  }
  if (!fm.values.allFinite()) throw IoError(path + ": non-finite logits");
  return fm;
}

void save_logit_file(const FeatureMatrix& features, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << features.values.rows() << ',' << features.values.cols() << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < features.values.rows(); ++i) {
    for (Eigen::Index k = 0; k < features.values.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", features.values(i, k));
      out << buf << (k + 1 < features.values.cols() ? "," : "");
    }
    out << '\n';
  }
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace pmifp
