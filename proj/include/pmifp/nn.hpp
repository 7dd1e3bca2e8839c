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
#include <utility>
#include <vector>

#include "pmifp/dataset.hpp"
#include "pmifp/errors.hpp"

namespace pmifp {

struct TrainConfig {
  int hidden_units = 64;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 300;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// learning_rate 0 is accepted (it freezes the parameters, useful for
  /// probing the initialization); negative rates are rejected.
  void validate() const;
};

/// Single-hidden-layer rectifier classifier. Parameters live in one flat
/// vector laid out [W1 | b1 | W2 | b2] with matrices stored column-major,
/// which keeps the optimizer, pruning, and serialization uniform.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(int input_dim, int hidden_dim, int output_dim);  // zero-initialized

  static MlpModel glorot_init(int input_dim, int hidden_dim, int output_dim,
                              std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int output_dim() const { return output_dim_; }
  /// Weight entries in W1 and W2 (biases excluded).
  int weight_count() const { return hidden_dim_ * input_dim_ + output_dim_ * hidden_dim_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<const Eigen::MatrixXd> w1() const;
  Eigen::Map<const Eigen::VectorXd> b1() const;
  Eigen::Map<const Eigen::MatrixXd> w2() const;
  Eigen::Map<const Eigen::VectorXd> b2() const;
  Eigen::Map<Eigen::MatrixXd> w1();
  Eigen::Map<Eigen::VectorXd> b1();
  Eigen::Map<Eigen::MatrixXd> w2();
  Eigen::Map<Eigen::VectorXd> b2();

  /// Pre-softmax output W2*relu(W1*x + b1) + b2.
  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
  /// Row i of the result holds logits(inputs.row(i)).
  Eigen::MatrixXd logits_batch(const Eigen::MatrixXd& inputs) const;
  /// Argmax over logits; ties break toward the smallest class index.
  int predict(const Eigen::VectorXd& x) const;

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  int output_dim_ = 0;
  Eigen::VectorXd params_;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;  // same layout as MlpModel::params()
};

/// Mean softmax cross-entropy over the batch and its analytic gradient.
LossGrad loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                           const Eigen::VectorXi& labels);
double cross_entropy_loss(const MlpModel& model, const Eigen::MatrixXd& inputs,
                          const Eigen::VectorXi& labels);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  explicit AdamState(Eigen::Index size)
      : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               const TrainConfig& cfg);

struct EpochStat {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double holdout_accuracy = 0.0;
};

/// Fraction of samples whose prediction matches the label.
double accuracy(const MlpModel& model, const Dataset& data);

/// Adam on mean cross-entropy over the train split. Parameters start from
/// glorot_init(d, hidden_units, c, cfg.seed); after every epoch the holdout
/// accuracy is evaluated and the snapshot with the best value is returned
/// (ties keep the earlier epoch). Deterministic for a fixed seed. Throws
/// DivergenceError if the loss goes non-finite.
MlpModel train(const SplitPools& pools, const TrainConfig& cfg,
               std::vector<EpochStat>* log = nullptr);

/// Continues Adam training on floor(fraction*|holdout|) seeded-random
/// holdout samples and returns the final parameters together with updated
/// pools: the consumed rows leave every non-member pool, member pools are
/// unchanged. The consumed holdout rows (ascending) are appended to
/// *consumed when given.
std::pair<MlpModel, SplitPools> fine_tune(const MlpModel& model, const SplitPools& pools,
                                          double fraction, const TrainConfig& cfg,
                                          std::uint64_t seed,
                                          std::vector<int>* consumed = nullptr);

/// Zeroes the floor(rate * weight_count) weights of smallest magnitude,
/// ranked globally across W1 and W2 (ties by flat position); biases are
/// untouched. Idempotent at a fixed rate.
MlpModel prune(const MlpModel& model, double rate);

/// Versioned binary model file; a save/load round-trip is bit-exact.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace pmifp
