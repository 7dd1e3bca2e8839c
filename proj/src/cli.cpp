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

#include "pmifp/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pmifp/rng.hpp"
#include "pmifp/selfcheck.hpp"

namespace pmifp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDatasetSalt = 0xd5;
constexpr std::uint64_t kSplitSalt = 0x5b;
constexpr std::uint64_t kTrainSalt = 0x7a;
constexpr std::uint64_t kProtocolSalt = 0xb0;
constexpr std::uint64_t kAttackSalt = 0xa7;
constexpr std::uint64_t kSyntheticTrainSalt = 1;
constexpr std::uint64_t kSyntheticHoldoutSalt = 2;

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* key) { return item.key() == key; }))
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
  }
}

std::string format_g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << content;
  if (!out) throw IoError(path + ": write failed");
}

std::vector<int> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  std::vector<int> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    const long value = std::strtol(line.c_str(), &end, 10);
    if (end == line.c_str() || *end != '\0')
      throw IoError(path + ": malformed row index '" + line + "'");
    rows.push_back(static_cast<int>(value));
  }
  return rows;
}

std::string attack_name(const AttackSpec& attack) {
  switch (attack.kind) {
    case AttackSpec::Kind::none: return "none";
    case AttackSpec::Kind::prune: return "prune";
    case AttackSpec::Kind::fine_tune: return "finetune";
  }
  return "none";
}

double attack_param(const AttackSpec& attack) {
  switch (attack.kind) {
    case AttackSpec::Kind::none: return 0.0;
    case AttackSpec::Kind::prune: return attack.prune_rate;
    case AttackSpec::Kind::fine_tune: return attack.finetune_fraction;
  }
  return 0.0;
}

void append_sweep_rows(std::ostringstream& csv, const FingerprintReport& report,
                       const std::string& attack, double param) {
  for (const ClassResult& it : report.per_class)
    csv << report.config.m << ',' << report.config.n << ',' << attack << ','
        << format_g17(param) << ',' << it.label << ',' << format_g17(it.accuracy) << '\n';
}

std::string resolved_model_path(const RunConfig& cfg) {
  if (!cfg.model_path.empty()) return cfg.model_path;
  return (fs::path(cfg.output_dir) / "model.bin").string();
}

void require_output_dir(const RunConfig& cfg) {
  if (cfg.output_dir.empty()) throw ConfigError("config: output_dir is required");
  fs::create_directories(cfg.output_dir);
}

json seeds_json(const RunConfig& cfg) {
  json seeds{{"seed", cfg.seed},
             {"train_seed", cfg.train.seed},
             {"protocol_base_seed", cfg.protocol.base_seed}};
  if (cfg.synthetic) seeds["dataset_seed"] = cfg.synthetic->seed;
  if (cfg.train_fraction) seeds["split_seed"] = cfg.split_seed;
  if (cfg.attack && cfg.attack->kind == AttackSpec::Kind::fine_tune)
    seeds["attack_seed"] = cfg.attack->finetune_seed;
  return seeds;
}

}  // namespace

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }

  try {
    expect_keys(doc, "top level",
                {"seed", "output_dir", "dataset", "split", "train", "protocol", "attack",
                 "model", "sweep", "exclude_manifest"});

    RunConfig cfg;
    cfg.seed = doc.value("seed", std::uint64_t{0});
    if (seed_override) cfg.seed = *seed_override;
    cfg.output_dir = doc.value("output_dir", std::string{});
    cfg.model_path = doc.value("model", std::string{});
    cfg.exclude_manifest = doc.value("exclude_manifest", std::string{});

    int sources = 0;
    if (doc.contains("dataset")) {
      const json& ds = doc.at("dataset");
      expect_keys(ds, "dataset", {"synthetic", "idx", "csv", "logits"});
      if (ds.contains("synthetic")) {
        ++sources;
        const json& s = ds.at("synthetic");
        expect_keys(s, "dataset.synthetic",
                    {"classes", "dim", "per_class", "per_class_train", "per_class_holdout",
                     "spread", "seed"});
        SyntheticSpec spec;
        spec.classes = s.at("classes").get<int>();
        spec.dim = s.at("dim").get<int>();
        spec.per_class = s.value("per_class", 0);
        spec.per_class_train = s.value("per_class_train", 0);
        spec.per_class_holdout = s.value("per_class_holdout", 0);
        spec.spread = s.value("spread", 1.0);
        spec.seed = s.value("seed", mix_seed(cfg.seed, kDatasetSalt));
        const bool single = spec.per_class > 0;
        const bool pair = spec.per_class_train > 0 && spec.per_class_holdout > 0;
        if (single == pair)
          throw ConfigError(
              "config: synthetic needs either per_class or per_class_train/per_class_holdout");
        cfg.synthetic = spec;
      }
      if (ds.contains("idx")) {
        ++sources;
        const json& s = ds.at("idx");
        expect_keys(s, "dataset.idx", {"images", "labels"});
        cfg.idx = {s.at("images").get<std::string>(), s.at("labels").get<std::string>()};
      }
      if (ds.contains("csv")) {
        ++sources;
        const json& s = ds.at("csv");
        expect_keys(s, "dataset.csv", {"train", "holdout"});
        cfg.csv = {s.at("train").get<std::string>(), s.at("holdout").get<std::string>()};
      }
      if (ds.contains("logits")) {
        ++sources;
        cfg.logit_files = ds.at("logits").get<std::vector<std::string>>();
        if (cfg.logit_files.size() < 2)
          throw ConfigError("config: logits source needs at least 2 files");
      }
    }
    if (sources != 1) throw ConfigError("config: exactly one dataset source is required");

    if (doc.contains("split")) {
      const json& s = doc.at("split");
      expect_keys(s, "split", {"train_fraction", "seed"});
      cfg.train_fraction = s.at("train_fraction").get<double>();
      cfg.split_seed = s.value("seed", mix_seed(cfg.seed, kSplitSalt));
    }

    cfg.train.seed = mix_seed(cfg.seed, kTrainSalt);
    if (doc.contains("train")) {
      const json& t = doc.at("train");
      expect_keys(t, "train", {"hidden_units", "learning_rate", "batch_size", "epochs", "seed"});
      cfg.train.hidden_units = t.value("hidden_units", cfg.train.hidden_units);
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.seed = t.value("seed", cfg.train.seed);
    }

    cfg.protocol.base_seed = mix_seed(cfg.seed, kProtocolSalt);
    if (doc.contains("protocol")) {
      const json& p = doc.at("protocol");
      expect_keys(p, "protocol", {"m", "n", "t", "rho", "classes", "base_seed"});
      cfg.protocol.m = p.value("m", cfg.protocol.m);
      cfg.protocol.n = p.value("n", cfg.protocol.n);
      cfg.protocol.trials = p.value("t", cfg.protocol.trials);
      cfg.protocol.rho = p.value("rho", cfg.protocol.rho);
      if (p.contains("classes")) cfg.protocol.classes = p.at("classes").get<std::vector<int>>();
      cfg.protocol.base_seed = p.value("base_seed", cfg.protocol.base_seed);
    }

    if (doc.contains("attack")) {
      const json& a = doc.at("attack");
      expect_keys(a, "attack",
                  {"kind", "rate", "fraction", "epochs", "learning_rate", "batch_size", "seed"});
      AttackSpec spec;
      const std::string kind = a.at("kind").get<std::string>();
      if (kind == "prune") {
        spec.kind = AttackSpec::Kind::prune;
        spec.prune_rate = a.at("rate").get<double>();
      } else if (kind == "finetune") {
        spec.kind = AttackSpec::Kind::fine_tune;
        spec.finetune_fraction = a.value("fraction", 0.2);
        spec.finetune_cfg = cfg.train;
        spec.finetune_cfg.epochs = a.value("epochs", std::max(1, cfg.train.epochs / 10));
        spec.finetune_cfg.learning_rate = a.value("learning_rate", cfg.train.learning_rate);
        spec.finetune_cfg.batch_size = a.value("batch_size", cfg.train.batch_size);
        spec.finetune_cfg.seed = mix_seed(cfg.seed, kAttackSalt + 1);
        spec.finetune_seed = a.value("seed", mix_seed(cfg.seed, kAttackSalt));
      } else {
        throw ConfigError("config: attack.kind must be 'prune' or 'finetune'");
      }
      cfg.attack = spec;
    }

    if (doc.contains("sweep")) {
      const json& s = doc.at("sweep");
      expect_keys(s, "sweep", {"prune_rates"});
      cfg.sweep_prune_rates = s.at("prune_rates").get<std::vector<double>>();
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

SplitPools build_pools(const RunConfig& cfg) {
  SplitPools pools;
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    if (s.per_class > 0) {
      if (!cfg.train_fraction)
        throw ConfigError("config: a single synthetic dataset needs split.train_fraction");
      const Dataset data =
          generate_synthetic(s.seed, s.classes, s.dim, s.per_class, s.spread);
      pools = split_pools(data, *cfg.train_fraction, cfg.split_seed);
    } else {
      pools = make_pools(generate_synthetic(mix_seed(s.seed, kSyntheticTrainSalt), s.classes,
                                            s.dim, s.per_class_train, s.spread),
                         generate_synthetic(mix_seed(s.seed, kSyntheticHoldoutSalt), s.classes,
                                            s.dim, s.per_class_holdout, s.spread));
    }
  } else if (cfg.idx) {
    if (!cfg.train_fraction)
      throw ConfigError("config: the idx source needs split.train_fraction");
    const Dataset data = load_idx(cfg.idx->first, cfg.idx->second);
    pools = split_pools(data, *cfg.train_fraction, cfg.split_seed);
  } else if (cfg.csv) {
    pools = make_pools(load_csv(cfg.csv->first), load_csv(cfg.csv->second));
  } else {
    throw ConfigError("config: logit files provide no sample pools");
  }
  if (!cfg.exclude_manifest.empty())
    pools = exclude_holdout_rows(pools, load_manifest(cfg.exclude_manifest));
  return pools;
}

void run_train(const RunConfig& cfg) {
  if (!cfg.logit_files.empty())
    throw ConfigError("config: train needs a sample dataset source, not logit files");
  require_output_dir(cfg);
  const SplitPools pools = build_pools(cfg);

  std::vector<EpochStat> log;
  const MlpModel model = train(pools, cfg.train, &log);

  save_model(model, (fs::path(cfg.output_dir) / "model.bin").string());

  std::ostringstream csv;
  csv << "epoch,train_loss,holdout_accuracy\n";
  for (const EpochStat& it : log)
    csv << it.epoch << ',' << format_g17(it.train_loss) << ','
        << format_g17(it.holdout_accuracy) << '\n';
  write_text((fs::path(cfg.output_dir) / "training_log.csv").string(), csv.str());

  write_text((fs::path(cfg.output_dir) / "seeds.json").string(),
             seeds_json(cfg).dump(2) + "\n");
}

void run_attack(const RunConfig& cfg) {
  if (!cfg.attack) throw ConfigError("config: attack section is required");
  require_output_dir(cfg);
  const MlpModel model = load_model(resolved_model_path(cfg));

  MlpModel attacked;
  if (cfg.attack->kind == AttackSpec::Kind::prune) {
    attacked = prune(model, cfg.attack->prune_rate);
  } else {
    const SplitPools pools = build_pools(cfg);
    std::vector<int> consumed;
    auto [tuned, updated] = fine_tune(model, pools, cfg.attack->finetune_fraction,
                                      cfg.attack->finetune_cfg, cfg.attack->finetune_seed,
                                      &consumed);
    attacked = std::move(tuned);
    std::ostringstream manifest;
    for (int row : consumed) manifest << row << '\n';
    write_text((fs::path(cfg.output_dir) / "consumed.txt").string(), manifest.str());
  }
  save_model(attacked, (fs::path(cfg.output_dir) / "model_attacked.bin").string());
}

namespace {

void run_fingerprint_logits(const RunConfig& cfg) {
  std::vector<FeatureMatrix> features;
  features.reserve(cfg.logit_files.size());
  for (std::size_t i = 0; i < cfg.logit_files.size(); ++i)
    features.push_back(load_logit_file(cfg.logit_files[i], static_cast<int>(i)));
  const Eigen::Index n = features.front().values.rows();
  const Eigen::Index c = features.front().values.cols();
  for (std::size_t i = 1; i < features.size(); ++i) {
    if (features[i].values.cols() != c)
      throw ConfigError("logit files disagree on the class count: " + cfg.logit_files[i]);
    if (features[i].values.rows() != n)
      throw ConfigError("logit files disagree on the sample count: " + cfg.logit_files[i]);
  }

  const std::vector<FeatureMatrix> normalized = normalize_features(features);
  const DistanceMatrix distances = distance_matrix(normalized);
  const ClusterTree tree = agglomerative_cluster(distances);
  const int predicted = select_outlier(tree, cfg.protocol.base_seed);

  json merges = json::array();
  for (const Merge& merge : tree.merges)
    merges.push_back({{"left", merge.left}, {"right", merge.right},
                      {"distance", merge.distance}});
  json dist_rows = json::array();
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < distances.cols(); ++j) row.push_back(distances(i, j));
    dist_rows.push_back(row);
  }
  const json doc{{"mode", "inference"},
                 {"m", static_cast<int>(features.size())},
                 {"files", cfg.logit_files},
                 {"predicted_index", predicted},
                 {"distances", dist_rows},
                 {"merges", merges}};
  write_text((fs::path(cfg.output_dir) / "report.json").string(), doc.dump(2) + "\n");

  std::ostringstream txt;
  txt << "pooled membership inference over " << features.size() << " logit files\n";
  for (std::size_t i = 0; i < cfg.logit_files.size(); ++i)
    txt << "  [" << i << "] " << cfg.logit_files[i] << '\n';
  txt << "  predicted member index: " << predicted << '\n';
  write_text((fs::path(cfg.output_dir) / "report.txt").string(), txt.str());
}

}  // namespace

void run_fingerprint(const RunConfig& cfg) {
  require_output_dir(cfg);
  if (!cfg.logit_files.empty()) {
    run_fingerprint_logits(cfg);
    return;
  }
  if (cfg.attack && !cfg.sweep_prune_rates.empty())
    throw ConfigError("config: choose either attack or sweep, not both");

  const MlpModel model = load_model(resolved_model_path(cfg));
  const SplitPools pools = build_pools(cfg);

  std::ostringstream csv;
  csv << "m,n,attack,param,r,acc_r\n";

  if (!cfg.sweep_prune_rates.empty()) {
    json reports = json::array();
    std::ostringstream txt;
    for (double rate : cfg.sweep_prune_rates) {
      AttackSpec attack;
      attack.kind = AttackSpec::Kind::prune;
      attack.prune_rate = rate;
      const FingerprintReport report = run_attacked(model, pools, cfg.protocol, attack);
      json entry = report_to_json(report);
      entry["attack"] = {{"kind", "prune"}, {"rate", rate}};
      reports.push_back(std::move(entry));
      txt << "== prune rate " << format_g17(rate) << " ==\n" << format_report(report);
      append_sweep_rows(csv, report, "prune", rate);
    }
    write_text((fs::path(cfg.output_dir) / "report.json").string(), reports.dump(2) + "\n");
    write_text((fs::path(cfg.output_dir) / "report.txt").string(), txt.str());
  } else {
    FingerprintReport report;
    std::string attack = "none";
    double param = 0.0;
    if (cfg.attack) {
      report = run_attacked(model, pools, cfg.protocol, *cfg.attack);
      attack = attack_name(*cfg.attack);
      param = attack_param(*cfg.attack);
    } else {
      report = run_all(model, pools, cfg.protocol);
    }
    json doc = report_to_json(report);
    if (cfg.attack) doc["attack"] = {{"kind", attack}, {"param", param}};
    write_text((fs::path(cfg.output_dir) / "report.json").string(), doc.dump(2) + "\n");
    write_text((fs::path(cfg.output_dir) / "report.txt").string(), format_report(report));
    append_sweep_rows(csv, report, attack, param);
  }
  write_text((fs::path(cfg.output_dir) / "sweep.csv").string(), csv.str());
}

void run_report(const std::string& report_path) {
  std::ifstream in(report_path);
  if (!in) throw IoError(report_path + ": cannot open");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(report_path + ": " + e.what());
  }
  try {
    if (doc.is_array()) {
      for (const auto& entry : doc) {
        if (entry.contains("attack"))
          std::cout << "== " << entry.at("attack").at("kind").get<std::string>() << " "
                    << entry.at("attack").value("rate", 0.0) << " ==\n";
        std::cout << format_report(report_from_json(entry));
      }
    } else if (doc.value("mode", std::string{}) == "inference") {
      std::cout << "pooled membership inference over " << doc.at("m").get<int>()
                << " logit files\n  predicted member index: "
                << doc.at("predicted_index").get<int>() << "\n";
    } else {
      std::cout << format_report(report_from_json(doc));
    }
  } catch (const json::exception& e) {
    throw ConfigError(report_path + ": not a fingerprint report (" + e.what() + ")");
  }
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return 2;
  if (dynamic_cast<const CapacityError*>(&error)) return 3;
  if (dynamic_cast<const IoError*>(&error)) return 4;
  if (dynamic_cast<const DivergenceError*>(&error)) return 5;
  return 1;
}

namespace {

const char* kind_name(int code) {
  switch (code) {
    case 2: return "config";
    case 3: return "capacity";
    case 4: return "io";
    case 5: return "divergence";
    default: return "internal";
  }
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    std::cerr << "error code=" << code << " kind=" << kind_name(code) << " message=\""
              << e.what() << "\"\n";
    return code;
  }
}

}  // namespace

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed) {
  return guarded([&] { run_train(load_config(config_path, seed)); });
}

int cmd_attack(const std::string& config_path, std::optional<std::uint64_t> seed) {
  return guarded([&] { run_attack(load_config(config_path, seed)); });
}

int cmd_fingerprint(const std::string& config_path, std::optional<std::uint64_t> seed) {
  return guarded([&] { run_fingerprint(load_config(config_path, seed)); });
}

int cmd_report(const std::string& report_path) {
  return guarded([&] { run_report(report_path); });
}

int cmd_selfcheck(std::uint64_t seed) {
  bool all_passed = true;
  for (const auto& result : selfcheck::run_all_checks(seed)) {
    std::cout << (result.passed ? "PASS" : "FAIL") << "  " << result.name << ": "
              << result.detail << "\n";
    all_passed = all_passed && result.passed;
  }
  return all_passed ? 0 : 1;
}

}  // namespace pmifp::cli
