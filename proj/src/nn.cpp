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

#include "pmifp/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "pmifp/rng.hpp"

namespace pmifp {

namespace {

constexpr char kModelMagic[8] = {'P', 'M', 'I', 'F', 'P', 'M', 'L', 'P'};
constexpr std::uint32_t kModelVersion = 1;

constexpr std::uint64_t kBatchOrderSalt = 0x6f72646572ULL;
constexpr std::uint64_t kFineTunePickSalt = 0x7069636bULL;

void write_u32le(std::ostream& out, std::uint32_t value) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32le(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw IoError(path + ": unexpected end of file");
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= std::uint32_t(bytes[i]) << (8 * i);
  return value;
}

void write_f64le(std::ostream& out, double value) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64le(std::istream& in, const std::string& path) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw IoError(path + ": unexpected end of file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

// Runs Adam for cfg.epochs over the given samples with a seeded batch
// order; on_epoch receives (epoch, mean loss) after every pass.
void fit(MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::VectorXi& labels,
         const TrainConfig& cfg, std::mt19937_64& order_rng,
         const std::function<void(int, double)>& on_epoch) {
  const int total = static_cast<int>(inputs.rows());
  AdamState state(model.params().size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = random_permutation(order_rng, total);
    double loss_sum = 0.0;
    for (int start = 0; start < total; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, total - start);
      Eigen::MatrixXd batch(count, inputs.cols());
      Eigen::VectorXi batch_labels(count);
      for (int j = 0; j < count; ++j) {
        batch.row(j) = inputs.row(order[static_cast<std::size_t>(start + j)]);
        batch_labels(j) = labels(order[static_cast<std::size_t>(start + j)]);
      }
      const LossGrad lg = loss_and_gradient(model, batch, batch_labels);
      if (!std::isfinite(lg.loss))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch offset " + std::to_string(start));
      loss_sum += lg.loss * count;
      adam_step(state, model.params(), lg.grad, cfg);
    }
    on_epoch(epoch, loss_sum / total);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be a finite non-negative number");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
}

MlpModel::MlpModel(int input_dim, int hidden_dim, int output_dim)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), output_dim_(output_dim) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
    throw ConfigError("model dimensions must be positive");
  params_ = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(hidden_dim) * input_dim + hidden_dim +
      static_cast<Eigen::Index>(output_dim) * hidden_dim + output_dim);
}

MlpModel MlpModel::glorot_init(int input_dim, int hidden_dim, int output_dim,
                               std::uint64_t seed) {
  MlpModel model(input_dim, hidden_dim, output_dim);
  std::mt19937_64 rng(seed);
  const double limit1 = std::sqrt(6.0 / (input_dim + hidden_dim));
  const double limit2 = std::sqrt(6.0 / (hidden_dim + output_dim));
  auto w1 = model.w1();
  for (Eigen::Index i = 0; i < w1.size(); ++i)
    w1.data()[i] = uniform_real(rng, -limit1, limit1);
  auto w2 = model.w2();
  for (Eigen::Index i = 0; i < w2.size(); ++i)
    w2.data()[i] = uniform_real(rng, -limit2, limit2);
  return model;  // biases stay zero
}

Eigen::Map<const Eigen::MatrixXd> MlpModel::w1() const {
  return {params_.data(), hidden_dim_, input_dim_};
}
Eigen::Map<const Eigen::VectorXd> MlpModel::b1() const {
  return {params_.data() + hidden_dim_ * input_dim_, hidden_dim_};
}
Eigen::Map<const Eigen::MatrixXd> MlpModel::w2() const {
  return {params_.data() + hidden_dim_ * input_dim_ + hidden_dim_, output_dim_, hidden_dim_};
}
Eigen::Map<const Eigen::VectorXd> MlpModel::b2() const {
  return {params_.data() + hidden_dim_ * input_dim_ + hidden_dim_ +
              static_cast<Eigen::Index>(output_dim_) * hidden_dim_,
          output_dim_};
}
Eigen::Map<Eigen::MatrixXd> MlpModel::w1() {
  return {params_.data(), hidden_dim_, input_dim_};
}
Eigen::Map<Eigen::VectorXd> MlpModel::b1() {
  return {params_.data() + hidden_dim_ * input_dim_, hidden_dim_};
}
Eigen::Map<Eigen::MatrixXd> MlpModel::w2() {
  return {params_.data() + hidden_dim_ * input_dim_ + hidden_dim_, output_dim_, hidden_dim_};
}
Eigen::Map<Eigen::VectorXd> MlpModel::b2() {
  return {params_.data() + hidden_dim_ * input_dim_ + hidden_dim_ +
              static_cast<Eigen::Index>(output_dim_) * hidden_dim_,
          output_dim_};
}

Eigen::VectorXd MlpModel::logits(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_)
    throw ConfigError("input has dimension " + std::to_string(x.size()) +
                      ", model expects " + std::to_string(input_dim_));
  const Eigen::VectorXd hidden = ((w1() * x + b1()).cwiseMax(0.0)).eval();
  return w2() * hidden + b2();
}

Eigen::MatrixXd MlpModel::logits_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != input_dim_)
    throw ConfigError("input batch has dimension " + std::to_string(inputs.cols()) +
                      ", model expects " + std::to_string(input_dim_));
  Eigen::MatrixXd hidden =
      ((inputs * w1().transpose()).rowwise() + b1().transpose()).cwiseMax(0.0);
  return (hidden * w2().transpose()).rowwise() + b2().transpose();
}

int MlpModel::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd scores = logits(x);
  int best = 0;
  for (int k = 1; k < output_dim_; ++k)
    if (scores(k) > scores(best)) best = k;
  return best;
}

LossGrad loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                           const Eigen::VectorXi& labels) {
  const int count = static_cast<int>(inputs.rows());
  if (count < 1) throw ConfigError("empty batch");
  if (labels.size() != count) throw ConfigError("batch label count mismatch");

  const Eigen::MatrixXd pre_hidden =
      (inputs * model.w1().transpose()).rowwise() + model.b1().transpose();
  const Eigen::MatrixXd hidden = pre_hidden.cwiseMax(0.0);
  const Eigen::MatrixXd logits =
      (hidden * model.w2().transpose()).rowwise() + model.b2().transpose();

  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  const Eigen::MatrixXd expd = (logits.colwise() - row_max).array().exp();
  const Eigen::VectorXd sum_exp = expd.rowwise().sum();

  double loss = 0.0;
  for (int i = 0; i < count; ++i)
    loss += row_max(i) + std::log(sum_exp(i)) - logits(i, labels(i));
  loss /= count;

  // dLoss/dLogits = (softmax - onehot) / count
  Eigen::MatrixXd dlogits = expd.array().colwise() / sum_exp.array();
  for (int i = 0; i < count; ++i) dlogits(i, labels(i)) -= 1.0;
  dlogits /= count;

  LossGrad out;
  out.loss = loss;
  out.grad.resize(model.params().size());

  const int d = model.input_dim(), h = model.hidden_dim(), c = model.output_dim();
  Eigen::Map<Eigen::MatrixXd> gw1(out.grad.data(), h, d);
  Eigen::Map<Eigen::VectorXd> gb1(out.grad.data() + h * d, h);
  Eigen::Map<Eigen::MatrixXd> gw2(out.grad.data() + h * d + h, c, h);
  Eigen::Map<Eigen::VectorXd> gb2(out.grad.data() + h * d + h + c * h, c);

  gw2 = dlogits.transpose() * hidden;
  gb2 = dlogits.colwise().sum().transpose();
  const Eigen::MatrixXd dhidden =
      (dlogits * model.w2()).cwiseProduct((pre_hidden.array() > 0.0).cast<double>().matrix());
  gw1 = dhidden.transpose() * inputs;
  gb1 = dhidden.colwise().sum().transpose();
  return out;
}

double cross_entropy_loss(const MlpModel& model, const Eigen::MatrixXd& inputs,
                          const Eigen::VectorXi& labels) {
  const int count = static_cast<int>(inputs.rows());
  if (count < 1) throw ConfigError("empty batch");
  const Eigen::MatrixXd logits = model.logits_batch(inputs);
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  const Eigen::VectorXd sum_exp =
      (logits.colwise() - row_max).array().exp().rowwise().sum();
  double loss = 0.0;
  for (int i = 0; i < count; ++i)
    loss += row_max(i) + std::log(sum_exp(i)) - logits(i, labels(i));
  return loss / count;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               const TrainConfig& cfg) {
  state.step += 1;
  state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad;
  state.v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  const double m_scale = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double v_scale = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  params.array() -= cfg.learning_rate * (state.m.array() / m_scale) /
                    ((state.v.array() / v_scale).sqrt() + cfg.adam_epsilon);
}

double accuracy(const MlpModel& model, const Dataset& data) {
  if (data.size() == 0) throw ConfigError("accuracy over an empty dataset");
  const Eigen::MatrixXd logits = model.logits_batch(data.features);
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    int best = 0;
    for (int k = 1; k < model.output_dim(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    if (best == data.labels(i)) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

MlpModel train(const SplitPools& pools, const TrainConfig& cfg,
               std::vector<EpochStat>* log) {
  cfg.validate();
  if (pools.train.size() == 0) throw ConfigError("train split is empty");
  if (pools.holdout.size() == 0) throw ConfigError("holdout split is empty");

  MlpModel model = MlpModel::glorot_init(pools.train.dim(), cfg.hidden_units,
                                         pools.train.class_count, cfg.seed);
  std::mt19937_64 order_rng(mix_seed(cfg.seed, kBatchOrderSalt));

  MlpModel best = model;
  double best_accuracy = -1.0;
  fit(model, pools.train.features, pools.train.labels, cfg, order_rng,
      [&](int epoch, double mean_loss) {
        const double holdout_accuracy = accuracy(model, pools.holdout);
        if (log) log->push_back({epoch, mean_loss, holdout_accuracy});
        if (holdout_accuracy > best_accuracy) {
          best_accuracy = holdout_accuracy;
          best = model;
        }
      });
  return best;
}

std::pair<MlpModel, SplitPools> fine_tune(const MlpModel& model, const SplitPools& pools,
                                          double fraction, const TrainConfig& cfg,
                                          std::uint64_t seed, std::vector<int>* consumed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("fine_tune: fraction must lie in (0, 1)");
  cfg.validate();
  const int total = pools.holdout.size();
  const int count = static_cast<int>(std::floor(fraction * static_cast<double>(total)));
  if (count < 1) throw ConfigError("fine_tune: fraction selects no samples");

  std::vector<int> all_rows(static_cast<std::size_t>(total));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::mt19937_64 pick_rng(mix_seed(seed, kFineTunePickSalt));
  std::vector<int> rows =
      sample_without_replacement(pick_rng, all_rows, static_cast<std::size_t>(count));
  std::sort(rows.begin(), rows.end());

  Eigen::MatrixXd inputs(count, pools.holdout.dim());
  Eigen::VectorXi labels(count);
  for (int j = 0; j < count; ++j) {
    inputs.row(j) = pools.holdout.features.row(rows[static_cast<std::size_t>(j)]);
    labels(j) = pools.holdout.labels(rows[static_cast<std::size_t>(j)]);
  }

  MlpModel tuned = model;
  std::mt19937_64 order_rng(mix_seed(cfg.seed, kBatchOrderSalt));
  fit(tuned, inputs, labels, cfg, order_rng, [](int, double) {});

  SplitPools updated = exclude_holdout_rows(pools, rows);
  if (consumed) consumed->insert(consumed->end(), rows.begin(), rows.end());
  return {std::move(tuned), std::move(updated)};
}

MlpModel prune(const MlpModel& model, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("prune: rate must lie in [0, 1)");
  const int d = model.input_dim(), h = model.hidden_dim(), c = model.output_dim();
  const long zero_count = static_cast<long>(rate * model.weight_count());
  MlpModel pruned = model;
  if (zero_count == 0) return pruned;

  // Flat positions of W1 and W2 within the parameter vector.
  std::vector<Eigen::Index> weight_positions;
  weight_positions.reserve(static_cast<std::size_t>(model.weight_count()));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(h) * d; ++i)
    weight_positions.push_back(i);
  const Eigen::Index w2_offset = static_cast<Eigen::Index>(h) * d + h;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(c) * h; ++i)
    weight_positions.push_back(w2_offset + i);

  std::sort(weight_positions.begin(), weight_positions.end(),
            [&](Eigen::Index a, Eigen::Index b) {
              const double ma = std::abs(model.params()(a));
              const double mb = std::abs(model.params()(b));
              return ma != mb ? ma < mb : a < b;
            });
  for (long i = 0; i < zero_count; ++i)
    pruned.params()(weight_positions[static_cast<std::size_t>(i)]) = 0.0;
  return pruned;
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(kModelMagic, sizeof kModelMagic);
  write_u32le(out, kModelVersion);
  write_u32le(out, static_cast<std::uint32_t>(model.input_dim()));
  write_u32le(out, static_cast<std::uint32_t>(model.hidden_dim()));
  write_u32le(out, static_cast<std::uint32_t>(model.output_dim()));
  for (Eigen::Index i = 0; i < model.params().size(); ++i)
    write_f64le(out, model.params()(i));
  if (!out) throw IoError(path + ": write failed");
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  char magic[sizeof kModelMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw IoError(path + ": not a model file (bad magic)");
  const std::uint32_t version = read_u32le(in, path);
  if (version != kModelVersion)
    throw IoError(path + ": unsupported model format version " + std::to_string(version));
  const std::uint32_t d = read_u32le(in, path);
  const std::uint32_t h = read_u32le(in, path);
  const std::uint32_t c = read_u32le(in, path);
  if (d < 1 || h < 1 || c < 1) throw IoError(path + ": corrupt header");

  MlpModel model(static_cast<int>(d), static_cast<int>(h), static_cast<int>(c));
  for (Eigen::Index i = 0; i < model.params().size(); ++i)
    model.params()(i) = read_f64le(in, path);
  in.peek();
  if (!in.eof()) throw IoError(path + ": trailing bytes after parameters");
  if (!model.params().allFinite()) throw IoError(path + ": non-finite parameters");
  return model;
}

}  // namespace pmifp
