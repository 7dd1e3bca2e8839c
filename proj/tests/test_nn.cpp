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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

#include "pmifp/dataset.hpp"
#include "pmifp/nn.hpp"
#include "pmifp/rng.hpp"
#include "pmifp/selfcheck.hpp"

using namespace pmifp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "pmifp_nn_test";
  fs::create_directories(dir);
  return dir;
}

// 2-2-2 network with W1 = I, b1 = 0, W2 = [[1,2],[3,4]], b2 = (0.5, -0.5).
MlpModel hand_built_network() {
  MlpModel model(2, 2, 2);
  model.w1() << 1, 0, 0, 1;
  model.w2() << 1, 2, 3, 4;
  model.b2() << 0.5, -0.5;
  return model;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::VectorXd shifted = z.array() - z.maxCoeff();
  const Eigen::VectorXd expd = shifted.array().exp();
  return expd / expd.sum();
}

// Logistic regression fit by plain gradient descent; the reference
// learner for the separable-blobs training check.
double logistic_regression_holdout_accuracy(const SplitPools& pools, int steps,
                                            double rate) {
  const Eigen::MatrixXd& x = pools.train.features;
  Eigen::VectorXd y(pools.train.size());
  for (int i = 0; i < pools.train.size(); ++i) y(i) = pools.train.labels(i);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  const double count = static_cast<double>(x.rows());
  for (int it = 0; it < steps; ++it) {
    const Eigen::VectorXd p =
        ((x * w).array() + b).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Eigen::VectorXd err = p - y;
    w -= rate * (x.transpose() * err) / count;
    b -= rate * err.sum() / count;
  }
  int correct = 0;
  for (int i = 0; i < pools.holdout.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(pools.holdout.features.row(i).dot(w) + b)));
    if ((p > 0.5 ? 1 : 0) == pools.holdout.labels(i)) ++correct;
  }
  return static_cast<double>(correct) / pools.holdout.size();
}

}  // namespace

TEST_CASE("logits of the all-zero model vanish") {
  const MlpModel model(3, 4, 2);
  const Eigen::VectorXd out = model.logits(Eigen::Vector3d(1.0, -2.0, 3.0));
  CHECK(out == Eigen::VectorXd::Zero(2));
}

TEST_CASE("logits match the pencil-and-paper forward pass") {
  const MlpModel model = hand_built_network();
  const Eigen::VectorXd a = model.logits(Eigen::Vector2d(2.0, -3.0));
  CHECK(a(0) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(a(1) == doctest::Approx(5.5).epsilon(1e-12));
  const Eigen::VectorXd b = model.logits(Eigen::Vector2d(-1.0, 4.0));
  CHECK(b(0) == doctest::Approx(8.5).epsilon(1e-12));
  CHECK(b(1) == doctest::Approx(15.5).epsilon(1e-12));
}

TEST_CASE("logits are pure and reject dimension mismatches") {
  const MlpModel model = MlpModel::glorot_init(4, 5, 3, 11);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 1.0);
  CHECK(model.logits(x) == model.logits(x));
  CHECK_THROWS_AS(model.logits(Eigen::VectorXd::Zero(5)), ConfigError);
  CHECK_THROWS_AS(model.logits_batch(Eigen::MatrixXd::Zero(2, 3)), ConfigError);
}

TEST_CASE("softmax of the logits is a distribution and keeps the argmax") {
  const MlpModel model = MlpModel::glorot_init(3, 6, 4, 23);
  std::mt19937_64 rng(5);
  for (int it = 0; it < 10; ++it) {
    Eigen::VectorXd x(3);
    for (int k = 0; k < 3; ++k) x(k) = uniform_real(rng, -2.0, 2.0);
    const Eigen::VectorXd p = softmax(model.logits(x));
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    int argmax = 0;
    for (int k = 1; k < 4; ++k)
      if (p(k) > p(argmax)) argmax = k;
    CHECK(model.predict(x) == argmax);
  }
}

TEST_CASE("predict breaks ties toward the smallest class") {
  MlpModel model(2, 2, 3);
  model.b2() << 0.1, 3.0, -1.0;
  CHECK(model.predict(Eigen::Vector2d(0.0, 0.0)) == 1);

  MlpModel tied(2, 2, 2);
  tied.b2() << 2.0, 2.0;
  CHECK(tied.predict(Eigen::Vector2d(1.0, 1.0)) == 0);
}

TEST_CASE("training separable blobs reaches the logistic-regression reference") {
  const SplitPools pools = make_pools(generate_synthetic(101, 2, 2, 200, 0.1),
                                      generate_synthetic(102, 2, 2, 100, 0.1));
  CHECK(logistic_regression_holdout_accuracy(pools, 500, 0.5) >= 0.95);

  TrainConfig cfg;
  cfg.hidden_units = 64;
  cfg.epochs = 20;
  cfg.seed = 3;
  const MlpModel model = train(pools, cfg);
  CHECK(accuracy(model, pools.holdout) >= 0.95);
}

TEST_CASE("training with zero learning rate returns the initialization") {
  const SplitPools pools = make_pools(generate_synthetic(111, 2, 3, 20, 1.0),
                                      generate_synthetic(112, 2, 3, 20, 1.0));
  TrainConfig cfg;
  cfg.hidden_units = 5;
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  cfg.seed = 17;
  const MlpModel trained = train(pools, cfg);
  const MlpModel init = MlpModel::glorot_init(3, 5, 2, cfg.seed);
  CHECK(trained.params() == init.params());
}

TEST_CASE("training twice with the same seed gives identical parameters") {
  const SplitPools pools = make_pools(generate_synthetic(121, 3, 4, 50, 1.0),
                                      generate_synthetic(122, 3, 4, 50, 1.0));
  TrainConfig cfg;
  cfg.hidden_units = 8;
  cfg.epochs = 5;
  cfg.seed = 29;
  std::vector<EpochStat> log_a, log_b;
  const MlpModel a = train(pools, cfg, &log_a);
  const MlpModel b = train(pools, cfg, &log_b);
  CHECK(a.params() == b.params());
  REQUIRE(log_a.size() == 5);
  for (std::size_t i = 0; i < log_a.size(); ++i) {
    CHECK(log_a[i].train_loss == log_b[i].train_loss);
    CHECK(log_a[i].holdout_accuracy == log_b[i].holdout_accuracy);
  }
}

TEST_CASE("training aborts on non-finite loss") {
  SplitPools pools = make_pools(generate_synthetic(131, 2, 2, 10, 1.0),
                                generate_synthetic(132, 2, 2, 10, 1.0));
  pools.train.features(0, 0) = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.hidden_units = 4;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  CHECK_THROWS_AS(train(pools, cfg), DivergenceError);
}

TEST_CASE("adam with an all-zero gradient leaves parameters unchanged") {
  MlpModel model = MlpModel::glorot_init(3, 4, 2, 7);
  const Eigen::VectorXd before = model.params();
  AdamState state(model.params().size());
  TrainConfig cfg;
  for (int it = 0; it < 3; ++it)
    adam_step(state, model.params(), Eigen::VectorXd::Zero(before.size()), cfg);
  CHECK(model.params() == before);
}

TEST_CASE("analytic gradients match central finite differences") {
  CHECK(selfcheck::check_gradients(5, 99).passed);
}

TEST_CASE("fine-tuning consumes holdout samples and updates only Q") {
  const SplitPools pools = make_pools(generate_synthetic(141, 2, 3, 80, 1.0),
                                      generate_synthetic(142, 2, 3, 50, 1.0));
  const MlpModel model = MlpModel::glorot_init(3, 6, 2, 1);
  TrainConfig cfg;
  cfg.hidden_units = 6;
  cfg.epochs = 2;
  cfg.seed = 4;

  std::vector<int> consumed;
  const auto [tuned, updated] = fine_tune(model, pools, 0.2, cfg, 55, &consumed);
  CHECK(consumed.size() == 20);  // floor(0.2 * 100)
  CHECK(std::is_sorted(consumed.begin(), consumed.end()));
  CHECK(updated.member_pools == pools.member_pools);

  std::size_t q_total = 0;
  for (int r = 0; r < 2; ++r) {
    const auto& q = updated.nonmember_pools[static_cast<std::size_t>(r)];
    q_total += q.size();
    for (int row : consumed)
      CHECK(std::find(q.begin(), q.end(), row) == q.end());
  }
  CHECK(q_total == 80);
  CHECK(tuned.params() != model.params());

  const auto [tuned_again, updated_again] = fine_tune(model, pools, 0.2, cfg, 55);
  CHECK(tuned_again.params() == tuned.params());
}

TEST_CASE("fine-tuning rejects bad fractions and epoch counts") {
  const SplitPools pools = make_pools(generate_synthetic(151, 2, 2, 10, 1.0),
                                      generate_synthetic(152, 2, 2, 10, 1.0));
  const MlpModel model = MlpModel::glorot_init(2, 3, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(fine_tune(model, pools, 0.2, cfg, 1), ConfigError);
  cfg.epochs = 1;
  CHECK_THROWS_AS(fine_tune(model, pools, 0.0, cfg, 1), ConfigError);
  CHECK_THROWS_AS(fine_tune(model, pools, 1.0, cfg, 1), ConfigError);
}

TEST_CASE("fine-tuning flags an exhausted non-member pool") {
  const SplitPools pools = make_pools(generate_synthetic(161, 2, 2, 10, 1.0),
                                      generate_synthetic(162, 2, 2, 5, 1.0));
  const MlpModel model = MlpModel::glorot_init(2, 3, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  // floor(0.95 * 10) = 9 of 10 holdout samples consumed: one class empties
  const auto [tuned, updated] = fine_tune(model, pools, 0.95, cfg, 7);
  bool flagged = false;
  for (const std::string& warning : updated.warnings)
    flagged = flagged || warning.find("exhausted") != std::string::npos;
  CHECK(flagged);
}

TEST_CASE("prune zeroes exactly the smallest-magnitude weights") {
  MlpModel model(2, 2, 1);
  model.w1() << 0.1, -5.0, 2.0, 0.01;
  model.w2() << 1.0, -0.2;

  const MlpModel pruned = prune(model, 0.5);  // floor(0.5 * 6) = 3
  CHECK(pruned.w1()(0, 0) == 0.0);   // 0.1
  CHECK(pruned.w1()(1, 1) == 0.0);   // 0.01
  CHECK(pruned.w2()(0, 1) == 0.0);   // -0.2
  CHECK(pruned.w1()(0, 1) == -5.0);
  CHECK(pruned.w1()(1, 0) == 2.0);
  CHECK(pruned.w2()(0, 0) == 1.0);
}

TEST_CASE("prune at rate zero is the identity and rates are validated") {
  const MlpModel model = MlpModel::glorot_init(4, 6, 3, 13);
  CHECK(prune(model, 0.0).params() == model.params());
  CHECK_THROWS_AS(prune(model, 1.0), ConfigError);
  CHECK_THROWS_AS(prune(model, -0.1), ConfigError);
}

TEST_CASE("prune adds the documented number of zeros and is idempotent") {
  const MlpModel model = MlpModel::glorot_init(5, 7, 3, 19);
  const double rate = 0.3;
  const MlpModel pruned = prune(model, rate);
  const long expected = static_cast<long>(rate * model.weight_count());

  long zeros = 0;
  long unchanged = 0;
  auto count_block = [&](const Eigen::MatrixXd& before, const Eigen::MatrixXd& after) {
    for (Eigen::Index i = 0; i < before.size(); ++i) {
      if (after.data()[i] == 0.0 && before.data()[i] != 0.0) ++zeros;
      if (after.data()[i] == before.data()[i]) ++unchanged;
    }
  };
  count_block(model.w1(), pruned.w1());
  count_block(model.w2(), pruned.w2());
  CHECK(zeros == expected);
  CHECK(unchanged == model.weight_count() - expected);
  CHECK(pruned.b1() == model.b1());
  CHECK(pruned.b2() == model.b2());

  const MlpModel twice = prune(pruned, rate);
  CHECK(twice.params() == pruned.params());
}

TEST_CASE("model files round-trip bit-exactly") {
  const MlpModel model = MlpModel::glorot_init(6, 9, 4, 37);
  const fs::path path = temp_dir() / "model.bin";
  save_model(model, path.string());
  const MlpModel loaded = load_model(path.string());
  CHECK(loaded.input_dim() == 6);
  CHECK(loaded.hidden_dim() == 9);
  CHECK(loaded.output_dim() == 4);
  CHECK(loaded.params() == model.params());
}

TEST_CASE("model loading rejects corrupt files") {
  const fs::path dir = temp_dir();
  const MlpModel model = MlpModel::glorot_init(3, 4, 2, 41);
  const fs::path good = dir / "good.bin";
  save_model(model, good.string());

  const fs::path truncated = dir / "truncated.bin";
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  CHECK_THROWS_AS(load_model(truncated.string()), IoError);

  const fs::path bad_magic = dir / "bad_magic.bin";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "NOTAMODELFILE............";
  }
  CHECK_THROWS_WITH_AS(load_model(bad_magic.string()), doctest::Contains("magic"), IoError);

  const fs::path bad_version = dir / "bad_version.bin";
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes[8] = 2;  // version field follows the 8-byte magic
    std::ofstream out(bad_version, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_model(bad_version.string()), doctest::Contains("version"),
                       IoError);
  CHECK_THROWS_AS(load_model((dir / "missing.bin").string()), IoError);
}

TEST_CASE("a loaded model still rejects mismatched input dimensions") {
  const fs::path path = temp_dir() / "dim.bin";
  save_model(MlpModel::glorot_init(4, 3, 2, 43), path.string());
  const MlpModel loaded = load_model(path.string());
  CHECK_THROWS_AS(loaded.logits(Eigen::VectorXd::Zero(3)), ConfigError);
}
