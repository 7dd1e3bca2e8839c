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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pmifp/cli.hpp"
#include "pmifp/pmi.hpp"
#include "pmifp/rng.hpp"

using namespace pmifp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pmifp_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
  const fs::path path = dir / name;
  std::ofstream out(path);
  out << doc.dump(2);
  return path;
}

// Small synthetic run shared by the CLI tests.
json base_config(const fs::path& output_dir) {
  return json{
      {"seed", 424242},
      {"output_dir", output_dir.string()},
      {"dataset",
       {{"synthetic",
         {{"classes", 2}, {"dim", 3}, {"per_class_train", 40}, {"per_class_holdout", 30},
          {"spread", 1.0}}}}},
      {"train", {{"hidden_units", 4}, {"batch_size", 16}, {"epochs", 2}}},
      {"protocol", {{"m", 2}, {"n", 5}, {"t", 4}, {"rho", 0.2}}}};
}

}  // namespace

TEST_CASE("train writes the model, the per-epoch log, and the seeds") {
  const fs::path dir = fresh_dir("train");
  const fs::path out = dir / "out";
  const fs::path config = write_config(dir, "run.json", base_config(out));

  CHECK(cli::cmd_train(config.string()) == 0);
  CHECK(fs::exists(out / "model.bin"));
  CHECK(fs::exists(out / "seeds.json"));

  std::ifstream log(out / "training_log.csv");
  std::string line;
  int rows = 0;
  std::getline(log, line);
  CHECK(line == "epoch,train_loss,holdout_accuracy");
  while (std::getline(log, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);  // one per epoch
}

TEST_CASE("identical configs produce byte-identical models") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path out_a = dir / "a";
  const fs::path out_b = dir / "b";
  const fs::path config_a = write_config(dir, "a.json", base_config(out_a));
  const fs::path config_b = write_config(dir, "b.json", base_config(out_b));

  REQUIRE(cli::cmd_train(config_a.string()) == 0);
  REQUIRE(cli::cmd_train(config_b.string()) == 0);
  CHECK(read_bytes(out_a / "model.bin") == read_bytes(out_b / "model.bin"));
  CHECK(read_bytes(out_a / "training_log.csv") == read_bytes(out_b / "training_log.csv"));

  const fs::path config_c = write_config(dir, "c.json", base_config(dir / "c"));
  REQUIRE(cli::cmd_train(config_c.string(), 7) == 0);  // seed override
  CHECK(read_bytes(dir / "c" / "model.bin") != read_bytes(out_a / "model.bin"));
}

TEST_CASE("a missing idx path exits with the io code and no partial model") {
  const fs::path dir = fresh_dir("missing_idx");
  const fs::path out = dir / "out";
  json config = base_config(out);
  config["dataset"] = {{"idx", {{"images", (dir / "absent.idx").string()},
                                {"labels", (dir / "labels.idx").string()}}}};
  config["split"] = {{"train_fraction", 0.7}};
  const fs::path path = write_config(dir, "run.json", config);

  CHECK(cli::cmd_train(path.string()) == 4);
  CHECK_FALSE(fs::exists(out / "model.bin"));
}

TEST_CASE("config validation rejects bad documents with the config code") {
  const fs::path dir = fresh_dir("bad_config");
  json two_sources = base_config(dir / "out");
  two_sources["dataset"]["csv"] = {{"train", "x.csv"}, {"holdout", "y.csv"}};
  CHECK(cli::cmd_train(write_config(dir, "two.json", two_sources).string()) == 2);

  json unknown = base_config(dir / "out");
  unknown["train"]["epochz"] = 5;
  CHECK(cli::cmd_train(write_config(dir, "unknown.json", unknown).string()) == 2);

  json no_dataset = base_config(dir / "out");
  no_dataset.erase("dataset");
  CHECK(cli::cmd_train(write_config(dir, "none.json", no_dataset).string()) == 2);

  json bad_rho = base_config(dir / "out");
  bad_rho["protocol"]["rho"] = 0.9;  // above 1 - 1/m for m = 2
  REQUIRE(cli::cmd_train(write_config(dir, "rho.json", bad_rho).string()) == 0);
  CHECK(cli::cmd_fingerprint(write_config(dir, "rho.json", bad_rho).string()) == 2);

  CHECK(cli::cmd_train((dir / "missing.json").string()) == 4);
}

TEST_CASE("fingerprint writes the report pair and the sweep csv") {
  const fs::path dir = fresh_dir("fingerprint");
  const fs::path out = dir / "out";
  const fs::path config = write_config(dir, "run.json", base_config(out));
  REQUIRE(cli::cmd_train(config.string()) == 0);
  REQUIRE(cli::cmd_fingerprint(config.string()) == 0);

  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "sweep.csv"));
  const json report = json::parse(read_bytes(out / "report.json"));
  for (const char* key : {"config", "per_class", "r_opt", "margin", "verdict", "trials"})
    CHECK(report.contains(key));
  CHECK(report.at("per_class").size() == 2);
  CHECK(report.at("trials").size() == 8);  // 2 classes x 4 trials

  std::istringstream csv(read_bytes(out / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "m,n,attack,param,r,acc_r");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  CHECK(cli::cmd_report((out / "report.json").string()) == 0);
}

TEST_CASE("a pruning sweep reports every rate for every class") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path out = dir / "out";
  json config = base_config(out);
  config["sweep"] = {{"prune_rates", {0.0, 0.1, 0.2}}};
  const fs::path path = write_config(dir, "run.json", config);
  REQUIRE(cli::cmd_train(path.string()) == 0);
  REQUIRE(cli::cmd_fingerprint(path.string()) == 0);

  const json reports = json::parse(read_bytes(out / "report.json"));
  REQUIRE(reports.is_array());
  CHECK(reports.size() == 3);
  CHECK(reports[0].at("attack").at("rate") == 0.0);

  std::istringstream csv(read_bytes(out / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 6);  // 3 rates x 2 classes
  CHECK(cli::cmd_report((out / "report.json").string()) == 0);
}

TEST_CASE("prune attack writes a model with the documented zero count") {
  const fs::path dir = fresh_dir("prune_attack");
  const fs::path train_out = dir / "train";
  const fs::path attack_out = dir / "attack";
  const fs::path train_config = write_config(dir, "train.json", base_config(train_out));
  REQUIRE(cli::cmd_train(train_config.string()) == 0);

  json config = base_config(attack_out);
  config["model"] = (train_out / "model.bin").string();
  config["attack"] = {{"kind", "prune"}, {"rate", 0.25}};
  const fs::path path = write_config(dir, "attack.json", config);
  REQUIRE(cli::cmd_attack(path.string()) == 0);
  CHECK_FALSE(fs::exists(attack_out / "consumed.txt"));

  const MlpModel base = load_model((train_out / "model.bin").string());
  const MlpModel attacked = load_model((attack_out / "model_attacked.bin").string());
  long zeros = 0;
  auto count_zeros = [&](const Eigen::MatrixXd& w) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w.data()[i] == 0.0) ++zeros;
  };
  count_zeros(attacked.w1());
  count_zeros(attacked.w2());
  CHECK(zeros == static_cast<long>(0.25 * base.weight_count()));
}

TEST_CASE("fine-tune attack then fingerprint equals the in-process run") {
  const fs::path dir = fresh_dir("composition");
  const fs::path train_out = dir / "train";
  const fs::path attack_out = dir / "attack";
  const fs::path fp_out = dir / "fp";

  const fs::path train_config = write_config(dir, "train.json", base_config(train_out));
  REQUIRE(cli::cmd_train(train_config.string()) == 0);

  json attack_doc = base_config(attack_out);
  attack_doc["model"] = (train_out / "model.bin").string();
  attack_doc["attack"] = {{"kind", "finetune"}, {"fraction", 0.2}, {"epochs", 2}};
  const fs::path attack_config = write_config(dir, "attack.json", attack_doc);
  REQUIRE(cli::cmd_attack(attack_config.string()) == 0);

  std::ifstream manifest(attack_out / "consumed.txt");
  REQUIRE(manifest.good());
  int manifest_rows = 0;
  std::string line;
  while (std::getline(manifest, line))
    if (!line.empty()) ++manifest_rows;
  CHECK(manifest_rows == 12);  // floor(0.2 * 60)

  json fp_doc = base_config(fp_out);
  fp_doc["model"] = (attack_out / "model_attacked.bin").string();
  fp_doc["exclude_manifest"] = (attack_out / "consumed.txt").string();
  const fs::path fp_config = write_config(dir, "fp.json", fp_doc);
  REQUIRE(cli::cmd_fingerprint(fp_config.string()) == 0);
  const json file_report = json::parse(read_bytes(fp_out / "report.json"));

  // Same attack, run in one process through the protocol module.
  const cli::RunConfig parsed = cli::load_config(attack_config.string());
  REQUIRE(parsed.attack.has_value());
  const MlpModel base = load_model((train_out / "model.bin").string());
  const FingerprintReport direct =
      run_attacked(base, cli::build_pools(parsed), parsed.protocol, *parsed.attack);
  CHECK(file_report.dump() == report_to_json(direct).dump());
}

TEST_CASE("logit-file mode infers the shifted source and validates shapes") {
  const fs::path dir = fresh_dir("logits");
  const fs::path out = dir / "out";
  std::mt19937_64 rng(99);
  std::vector<std::string> files;
  for (int k = 0; k < 3; ++k) {
    FeatureMatrix fm;
    fm.values.resize(6, 2);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 2; ++j) fm.values(i, j) = uniform_real(rng, -1.0, 1.0);
    if (k == 1) fm.values.array() += 8.0;
    const fs::path path = dir / ("logits" + std::to_string(k) + ".csv");
    save_logit_file(fm, path.string());
    files.push_back(path.string());
  }

  json config{{"seed", 5},
              {"output_dir", out.string()},
              {"dataset", {{"logits", files}}},
              {"protocol", {{"m", 3}, {"n", 6}, {"t", 1}, {"rho", 0.1}}}};
  const fs::path path = write_config(dir, "run.json", config);
  REQUIRE(cli::cmd_fingerprint(path.string()) == 0);
  const json report = json::parse(read_bytes(out / "report.json"));
  CHECK(report.at("mode") == "inference");
  CHECK(report.at("predicted_index") == 1);
  CHECK(cli::cmd_report((out / "report.json").string()) == 0);

  // mismatched class count across files fails before any output
  FeatureMatrix wide;
  wide.values = Eigen::MatrixXd::Zero(6, 3);
  save_logit_file(wide, (dir / "wide.csv").string());
  json bad = config;
  bad["dataset"]["logits"].push_back((dir / "wide.csv").string());
  bad["output_dir"] = (dir / "out_bad").string();
  CHECK(cli::cmd_fingerprint(write_config(dir, "bad.json", bad).string()) == 2);
  CHECK_FALSE(fs::exists(dir / "out_bad" / "report.json"));

  // train has no sample pools to work with in logit mode
  CHECK(cli::cmd_train(path.string()) == 2);
}

TEST_CASE("pool capacity violations exit with the capacity code") {
  const fs::path dir = fresh_dir("capacity");
  json config = base_config(dir / "out");
  config["protocol"] = {{"m", 3}, {"n", 25}, {"t", 2}, {"rho", 0.2}};
  // n*(m-1) = 50 > 30 non-members per class
  const fs::path path = write_config(dir, "run.json", config);
  REQUIRE(cli::cmd_train(path.string()) == 0);
  CHECK(cli::cmd_fingerprint(path.string()) == 3);
}

TEST_CASE("exit codes map the error taxonomy") {
  CHECK(cli::exit_code_for(ConfigError("x")) == 2);
  CHECK(cli::exit_code_for(CapacityError("x")) == 3);
  CHECK(cli::exit_code_for(IoError("x")) == 4);
  CHECK(cli::exit_code_for(DivergenceError("x")) == 5);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("csv dataset sources build the same pools as in-memory data") {
  const fs::path dir = fresh_dir("csv_source");
  const Dataset train_ds = generate_synthetic(31, 2, 3, 20, 1.0);
  const Dataset holdout_ds = generate_synthetic(32, 2, 3, 15, 1.0);
  save_csv(train_ds, (dir / "train.csv").string());
  save_csv(holdout_ds, (dir / "holdout.csv").string());

  json config = base_config(dir / "out");
  config["dataset"] = {{"csv", {{"train", (dir / "train.csv").string()},
                                {"holdout", (dir / "holdout.csv").string()}}}};
  config["protocol"] = {{"m", 2}, {"n", 3}, {"t", 2}, {"rho", 0.2}};
  const fs::path path = write_config(dir, "run.json", config);
  const cli::RunConfig parsed = cli::load_config(path.string());
  const SplitPools pools = cli::build_pools(parsed);
  CHECK(pools.train.features == train_ds.features);
  CHECK(pools.holdout.features == holdout_ds.features);

  CHECK(cli::cmd_train(path.string()) == 0);
  CHECK(fs::exists(dir / "out" / "model.bin"));
}
