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
#include <cstdint>
#include <string>
#include <vector>

#include "pmifp/errors.hpp"

namespace pmifp {

struct LabeledSample {
  Eigen::VectorXd features;
  int label = 0;
};

/// A labeled classification dataset, one sample per row.
struct Dataset {
  Eigen::MatrixXd features;  // size() x dim()
  Eigen::VectorXi labels;    // entries in [0, class_count)
  int class_count = 0;

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  LabeledSample sample(int i) const { return {features.row(i).transpose(), labels(i)}; }

  /// Throws ConfigError if shapes, label range, or finiteness are violated.
  void validate() const;
};

/// A train/holdout split plus per-class sample pools. Member pools index
/// rows of `train`, non-member pools index rows of `holdout`. Immutable
/// after construction; safe to share across trial workers.
struct SplitPools {
  Dataset train;
  Dataset holdout;
  std::vector<std::vector<int>> member_pools;     // per class, rows of train
  std::vector<std::vector<int>> nonmember_pools;  // per class, rows of holdout
  std::vector<int> train_rows;    // provenance: rows in the source dataset
  std::vector<int> holdout_rows;  // provenance: rows in the source dataset
  std::vector<std::string> warnings;

  int class_count() const { return train.class_count; }
};

enum class Origin { member, non_member };

/// A fixed-size same-label sample set, the unit of inference.
struct MiniDataset {
  Eigen::MatrixXd features;  // n x d, one sample per row
  int label = 0;
  Origin origin = Origin::non_member;
  int index = 0;  // assigned position in [0, m)
  std::vector<int> source_rows;  // rows in the originating split

  int size() const { return static_cast<int>(features.rows()); }
};

/// Draws class_count isotropic Gaussian blobs with distinct means placed on
/// scaled coordinate axes; `spread` is the per-component standard deviation.
/// Deterministic for a fixed seed. Samples are ordered class-major.
Dataset generate_synthetic(std::uint64_t seed, int class_count, int dim,
                           int per_class, double spread);

/// Reads an IDX image/label file pair (big-endian, images magic 0x00000803,
/// labels magic 0x00000801). Pixels are scaled to [0,1] and images
/// flattened to rows*cols features.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// CSV dataset format: header "d,c", then one row per sample with d floats
/// followed by the integer label. Floats are written with 17 significant
/// digits so a round-trip is bit-exact.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& data, const std::string& path);

/// Splits by a seeded shuffle and derives per-class pools by label
/// filtering. Classes left empty on either side are recorded in warnings.
SplitPools split_pools(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Builds pools from an already-split pair of datasets (same dim and
/// class count required).
SplitPools make_pools(Dataset train, Dataset holdout);

/// Returns a copy with the given holdout rows removed from every
/// non-member pool (order preserved). Pools emptied by the removal are
/// recorded in warnings.
SplitPools exclude_holdout_rows(const SplitPools& pools, const std::vector<int>& rows);

/// Samples one trial: one member mini-dataset of n samples from the class-r
/// member pool and m-1 pairwise-disjoint non-member mini-datasets from the
/// class-r non-member pool. Each mini-dataset is assigned a random index in
/// [0, m) via a seeded permutation; the result is ordered by that index.
/// Requires |P_r| >= n and |Q_r| >= n*(m-1); violations raise CapacityError
/// naming the bound.
std::vector<MiniDataset> sample_trial(const SplitPools& pools, int label, int m,
                                      int n, std::uint64_t seed);

}  // namespace pmifp
