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

#include "pmifp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pmifp/rng.hpp"

namespace pmifp {

namespace {

// Distance of blob means from the origin. Class r is centered on axis
// r % dim, with the scale growing once the axes wrap around.
constexpr double kBlobMeanScale = 2.0;

std::uint32_t read_u32be(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw IoError(path + ": unexpected end of file");
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(const std::string& field, const std::string& path) {
  char* end = nullptr;
  const double value = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0')
    throw IoError(path + ": malformed number '" + field + "'");
  return value;
}

long parse_long(const std::string& field, const std::string& path) {
  char* end = nullptr;
  const long value = std::strtol(field.c_str(), &end, 10);
  if (end == field.c_str() || *end != '\0')
    throw IoError(path + ": malformed integer '" + field + "'");
  return value;
}

Dataset gather_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.dim());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    out.labels(static_cast<Eigen::Index>(i)) = data.labels(rows[i]);
  }
  out.class_count = data.class_count;
  return out;
}

std::vector<std::vector<int>> pools_by_label(const Dataset& data) {
  std::vector<std::vector<int>> pools(static_cast<std::size_t>(data.class_count));
  for (int i = 0; i < data.size(); ++i)
    pools[static_cast<std::size_t>(data.labels(i))].push_back(i);
  return pools;
}

void flag_empty_pools(SplitPools& pools) {
  for (int r = 0; r < pools.class_count(); ++r) {
    if (pools.member_pools[static_cast<std::size_t>(r)].empty())
      pools.warnings.push_back("class " + std::to_string(r) + " has no member samples");
    if (pools.nonmember_pools[static_cast<std::size_t>(r)].empty())
      pools.warnings.push_back("class " + std::to_string(r) + " has no non-member samples");
  }
}

}  // namespace

void Dataset::validate() const {
  if (class_count < 2) throw ConfigError("dataset needs at least 2 classes");
  if (labels.size() != features.rows())
    throw ConfigError("label count does not match sample count");
  for (int i = 0; i < size(); ++i) {
    if (labels(i) < 0 || labels(i) >= class_count)
      throw ConfigError("label " + std::to_string(labels(i)) + " outside [0, " +
                        std::to_string(class_count) + ") at row " + std::to_string(i));
  }
  if (!features.allFinite()) throw ConfigError("dataset contains non-finite features");
}

Dataset generate_synthetic(std::uint64_t seed, int class_count, int dim,
                           int per_class, double spread) {
  if (class_count < 2) throw ConfigError("generate_synthetic: class_count must be >= 2");
  if (dim < 2) throw ConfigError("generate_synthetic: dim must be >= 2");
  if (per_class < 1) throw ConfigError("generate_synthetic: per_class must be >= 1");
  if (!(spread > 0.0)) throw ConfigError("generate_synthetic: spread must be positive");

  Dataset data;
  const int total = class_count * per_class;
  data.features.resize(total, dim);
  data.labels.resize(total);
  data.class_count = class_count;

  std::mt19937_64 rng(seed);
  int row = 0;
  for (int r = 0; r < class_count; ++r) {
    const int axis = r % dim;
    const double center = kBlobMeanScale * (1.0 + static_cast<double>(r / dim));
    for (int j = 0; j < per_class; ++j, ++row) {
      for (int k = 0; k < dim; ++k)
        data.features(row, k) = spread * normal(rng) + (k == axis ? center : 0.0);
      data.labels(row) = r;
    }
  }
  return data;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw IoError(images_path + ": cannot open");
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw IoError(labels_path + ": cannot open");

  const std::uint32_t image_magic = read_u32be(images, images_path);
  if (image_magic != 0x00000803u)
    throw IoError(images_path + ": bad magic number (expected 0x00000803)");
  const std::uint32_t image_count = read_u32be(images, images_path);
  const std::uint32_t rows = read_u32be(images, images_path);
  const std::uint32_t cols = read_u32be(images, images_path);

  const std::uint32_t label_magic = read_u32be(labels, labels_path);
  if (label_magic != 0x00000801u)
    throw IoError(labels_path + ": bad magic number (expected 0x00000801)");
  const std::uint32_t label_count = read_u32be(labels, labels_path);

  if (image_count != label_count)
    throw IoError("image/label count mismatch: " + std::to_string(image_count) +
                  " images vs " + std::to_string(label_count) + " labels");

  const std::size_t pixels = std::size_t(rows) * cols;
  Dataset data;
  data.features.resize(image_count, static_cast<Eigen::Index>(pixels));
  data.labels.resize(image_count);

  std::vector<unsigned char> buffer(pixels);
  int max_label = 0;
  for (std::uint32_t i = 0; i < image_count; ++i) {
    images.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(pixels));
    if (!images) throw IoError(images_path + ": truncated image data");
    for (std::size_t k = 0; k < pixels; ++k)
      data.features(i, static_cast<Eigen::Index>(k)) = buffer[k] / 255.0;
    char label = 0;
    labels.read(&label, 1);
    if (!labels) throw IoError(labels_path + ": truncated label data");
    const int value = static_cast<unsigned char>(label);
    data.labels(i) = value;
    max_label = std::max(max_label, value);
  }
  data.class_count = max_label + 1;
  data.validate();
  return data;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing header");
  const auto header = split_fields(line);
  if (header.size() != 2) throw IoError(path + ": header must be 'd,c'");
  const long dim = parse_long(header[0], path);
  const long classes = parse_long(header[1], path);
  if (dim < 1 || classes < 2) throw IoError(path + ": invalid header dimensions");

  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(dim) + 1)
      throw IoError(path + ": expected " + std::to_string(dim + 1) + " fields, got " +
                    std::to_string(fields.size()));
    Eigen::VectorXd row(dim);
    for (long k = 0; k < dim; ++k)
      row(k) = parse_double(fields[static_cast<std::size_t>(k)], path);
    rows.push_back(std::move(row));
    labels.push_back(static_cast<int>(parse_long(fields.back(), path)));
  }
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  data.labels.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    data.labels(static_cast<Eigen::Index>(i)) = labels[i];
  }
  data.class_count = static_cast<int>(classes);
  data.validate();
  return data;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << data.dim() << ',' << data.class_count << '\n';
  char buf[40];
  for (int i = 0; i < data.size(); ++i) {
    for (int k = 0; k < data.dim(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, k));
      out << buf << ',';
    }
    out << data.labels(i) << '\n';
  }
  if (!out) throw IoError(path + ": write failed");
}

SplitPools split_pools(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  const int total = data.size();
  const int train_count =
      static_cast<int>(std::llround(train_fraction * static_cast<double>(total)));
  if (train_count < 1 || train_count > total - 1)
    throw ConfigError("train_fraction leaves an empty split");

  std::mt19937_64 rng(seed);
  std::vector<int> perm = random_permutation(rng, total);
  std::vector<int> train_rows(perm.begin(), perm.begin() + train_count);
  std::vector<int> holdout_rows(perm.begin() + train_count, perm.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(holdout_rows.begin(), holdout_rows.end());

  SplitPools pools;
  pools.train = gather_rows(data, train_rows);
  pools.holdout = gather_rows(data, holdout_rows);
  pools.train_rows = std::move(train_rows);
  pools.holdout_rows = std::move(holdout_rows);
  pools.member_pools = pools_by_label(pools.train);
  pools.nonmember_pools = pools_by_label(pools.holdout);
  flag_empty_pools(pools);
  return pools;
}

SplitPools make_pools(Dataset train, Dataset holdout) {
  train.validate();
  holdout.validate();
  if (train.dim() != holdout.dim())
    throw ConfigError("train/holdout dimension mismatch");
  if (train.class_count != holdout.class_count)
    throw ConfigError("train/holdout class count mismatch");

  SplitPools pools;
  const int train_size = train.size();
  pools.train = std::move(train);
  pools.holdout = std::move(holdout);
  pools.train_rows.resize(static_cast<std::size_t>(train_size));
  for (int i = 0; i < train_size; ++i) pools.train_rows[static_cast<std::size_t>(i)] = i;
  pools.holdout_rows.resize(static_cast<std::size_t>(pools.holdout.size()));
  for (int i = 0; i < pools.holdout.size(); ++i)
    pools.holdout_rows[static_cast<std::size_t>(i)] = train_size + i;
  pools.member_pools = pools_by_label(pools.train);
  pools.nonmember_pools = pools_by_label(pools.holdout);
  flag_empty_pools(pools);
  return pools;
}

SplitPools exclude_holdout_rows(const SplitPools& pools, const std::vector<int>& rows) {
  SplitPools out = pools;
  std::vector<char> drop(static_cast<std::size_t>(pools.holdout.size()), 0);
  for (int row : rows) {
    if (row < 0 || row >= pools.holdout.size())
      throw ConfigError("holdout row " + std::to_string(row) + " out of range");
    drop[static_cast<std::size_t>(row)] = 1;
  }
  for (int r = 0; r < out.class_count(); ++r) {
    auto& pool = out.nonmember_pools[static_cast<std::size_t>(r)];
    const bool was_nonempty = !pool.empty();
    std::erase_if(pool, [&](int row) { return drop[static_cast<std::size_t>(row)] != 0; });
    if (was_nonempty && pool.empty())
      out.warnings.push_back("class " + std::to_string(r) +
                             " non-member pool exhausted by exclusions");
  }
  return out;
}

std::vector<MiniDataset> sample_trial(const SplitPools& pools, int label, int m,
                                      int n, std::uint64_t seed) {
  if (m < 2) throw ConfigError("sample_trial: m must be >= 2");
  if (n < 2) throw ConfigError("sample_trial: n must be >= 2");
  if (label < 0 || label >= pools.class_count())
    throw ConfigError("sample_trial: class " + std::to_string(label) + " out of range");

  const auto& members = pools.member_pools[static_cast<std::size_t>(label)];
  const auto& nonmembers = pools.nonmember_pools[static_cast<std::size_t>(label)];
  if (static_cast<int>(members.size()) < n)
    throw CapacityError("class " + std::to_string(label) + ": |P| = " +
                        std::to_string(members.size()) + " is below the required n = " +
                        std::to_string(n));
  const long needed = static_cast<long>(n) * (m - 1);
  if (static_cast<long>(nonmembers.size()) < needed)
    throw CapacityError("class " + std::to_string(label) + ": |Q| = " +
                        std::to_string(nonmembers.size()) +
                        " is below the required n*(m-1) = " + std::to_string(needed));

  std::mt19937_64 rng(seed);
  const std::vector<int> member_rows =
      sample_without_replacement(rng, members, static_cast<std::size_t>(n));
  const std::vector<int> nonmember_rows =
      sample_without_replacement(rng, nonmembers, static_cast<std::size_t>(needed));
  const std::vector<int> assigned = random_permutation(rng, m);

  auto build = [&](const Dataset& source, const std::vector<int>& rows, Origin origin,
                   int index) {
    MiniDataset mini;
    mini.features.resize(n, source.dim());
    for (int j = 0; j < n; ++j)
      mini.features.row(j) = source.features.row(rows[static_cast<std::size_t>(j)]);
    mini.label = label;
    mini.origin = origin;
    mini.index = index;
    mini.source_rows = rows;
    return mini;
  };

  std::vector<MiniDataset> minis(static_cast<std::size_t>(m));
  minis[static_cast<std::size_t>(assigned[0])] =
      build(pools.train, member_rows, Origin::member, assigned[0]);
  for (int k = 1; k < m; ++k) {
    std::vector<int> rows(nonmember_rows.begin() + static_cast<std::ptrdiff_t>(n) * (k - 1),
                          nonmember_rows.begin() + static_cast<std::ptrdiff_t>(n) * k);
    minis[static_cast<std::size_t>(assigned[static_cast<std::size_t>(k)])] =
        build(pools.holdout, rows, Origin::non_member, assigned[static_cast<std::size_t>(k)]);
  }
  return minis;
}

}  // namespace pmifp
