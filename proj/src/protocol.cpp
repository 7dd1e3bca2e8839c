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

#include "pmifp/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "pmifp/rng.hpp"

namespace pmifp {

namespace {

constexpr std::uint64_t kClassStreamSalt = 0x636c617373ULL;

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

}  // namespace

void ProtocolConfig::validate(int class_count) const {
  if (m < 2) throw ConfigError("protocol: m must be >= 2");
  if (n < 2) throw ConfigError("protocol: n must be >= 2");
  if (trials < 1) throw ConfigError("protocol: t must be >= 1");
  const double upper = 1.0 - 1.0 / static_cast<double>(m);
  if (!(rho > 0.0 && rho <= upper))
    throw ConfigError("protocol: rho must lie in (0, 1 - 1/m]");
  for (int r : classes)
    if (r < 0 || r >= class_count)
      throw ConfigError("protocol: class " + std::to_string(r) + " out of range");
}

std::vector<int> ProtocolConfig::resolved_classes(int class_count) const {
  std::vector<int> out = classes;
  if (out.empty()) {
    out.resize(static_cast<std::size_t>(class_count));
    for (int r = 0; r < class_count; ++r) out[static_cast<std::size_t>(r)] = r;
    return out;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint64_t trial_seed(std::uint64_t base_seed, int label, int trial_index) {
  const std::uint64_t class_stream =
      mix_seed(base_seed, kClassStreamSalt + static_cast<std::uint64_t>(label));
  return class_stream + static_cast<std::uint64_t>(trial_index);
}

double run_class(const MlpModel& model, const SplitPools& pools, int label,
                 const ProtocolConfig& cfg, std::vector<TrialRecord>* log) {
  cfg.validate(pools.class_count());
  int successes = 0;
  for (int i = 0; i < cfg.trials; ++i) {
    const std::uint64_t seed = trial_seed(cfg.base_seed, label, i);
    // sample_trial names the class and the violated bound on capacity errors
    const std::vector<MiniDataset> minis = sample_trial(pools, label, cfg.m, cfg.n, seed);
    int member_index = -1;
    for (const MiniDataset& mini : minis)
      if (mini.origin == Origin::member) member_index = mini.index;
    const int predicted = infer_member(model, minis, seed);
    const bool success = predicted == member_index;
    if (success) ++successes;
    if (log) log->push_back({label, seed, predicted, member_index, success});
  }
  return static_cast<double>(successes) / cfg.trials;
}

FingerprintReport summarize(const std::vector<ClassResult>& per_class,
                            const ProtocolConfig& cfg) {
  if (per_class.empty()) throw ConfigError("no tested classes");
  FingerprintReport report;
  report.config = cfg;
  report.per_class = per_class;
  report.baseline = 1.0 / static_cast<double>(cfg.m);

  double mean = 0.0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < per_class.size(); ++i) {
    mean += per_class[i].accuracy;
    if (per_class[i].accuracy > per_class[best].accuracy) best = i;
  }
  report.mean_accuracy = mean / static_cast<double>(per_class.size());
  report.r_opt = per_class[best].label;
  report.acc_opt = per_class[best].accuracy;
  report.margin = report.acc_opt - report.baseline;
  report.owned = report.margin >= cfg.rho;
  report.mean_significant = report.mean_accuracy - report.baseline >= cfg.rho;
  return report;
}

FingerprintReport run_all(const MlpModel& model, const SplitPools& pools,
                          const ProtocolConfig& cfg) {
  cfg.validate(pools.class_count());
  const std::vector<int> classes = cfg.resolved_classes(pools.class_count());
  if (classes.empty()) throw ConfigError("no tested classes");

  std::vector<ClassResult> per_class;
  std::vector<TrialRecord> trial_log;
  per_class.reserve(classes.size());
  for (int r : classes)
    per_class.push_back({r, run_class(model, pools, r, cfg, &trial_log)});

  FingerprintReport report = summarize(per_class, cfg);
  report.trial_log = std::move(trial_log);
  return report;
}

FingerprintReport run_attacked(const MlpModel& model, const SplitPools& pools,
                               const ProtocolConfig& cfg, const AttackSpec& attack) {
  switch (attack.kind) {
    case AttackSpec::Kind::none:
      return run_all(model, pools, cfg);
    case AttackSpec::Kind::prune:
      return run_all(prune(model, attack.prune_rate), pools, cfg);
    case AttackSpec::Kind::fine_tune: {
      auto [tuned, updated] = fine_tune(model, pools, attack.finetune_fraction,
                                        attack.finetune_cfg, attack.finetune_seed);
      return run_all(tuned, updated, cfg);
    }
  }
  throw ConfigError("unknown attack kind");
}

nlohmann::json report_to_json(const FingerprintReport& report) {
  nlohmann::json config{{"m", report.config.m},
                        {"n", report.config.n},
                        {"t", report.config.trials},
                        {"rho", report.config.rho},
                        {"classes", nlohmann::json::array()},
                        {"base_seed", report.config.base_seed}};
  for (const ClassResult& it : report.per_class) config["classes"].push_back(it.label);

  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassResult& it : report.per_class)
    per_class.push_back({{"r", it.label}, {"acc", it.accuracy}});

  nlohmann::json trials = nlohmann::json::array();
  for (const TrialRecord& it : report.trial_log)
    trials.push_back({{"r", it.label},
                      {"seed", it.seed},
                      {"predicted", it.predicted_index},
                      {"member", it.member_index},
                      {"success", it.success}});

  return nlohmann::json{{"config", config},
                        {"per_class", per_class},
                        {"r_opt", report.r_opt},
                        {"acc_opt", report.acc_opt},
                        {"baseline", report.baseline},
                        {"margin", report.margin},
                        {"mean_accuracy", report.mean_accuracy},
                        {"mean_significant", report.mean_significant},
                        {"discrepancy", report.discrepancy()},
                        {"verdict", report.verdict()},
                        {"trials", trials}};
}

FingerprintReport report_from_json(const nlohmann::json& doc) {
  FingerprintReport report;
  const auto& config = doc.at("config");
  report.config.m = config.at("m").get<int>();
  report.config.n = config.at("n").get<int>();
  report.config.trials = config.at("t").get<int>();
  report.config.rho = config.at("rho").get<double>();
  report.config.classes = config.at("classes").get<std::vector<int>>();
  report.config.base_seed = config.at("base_seed").get<std::uint64_t>();
  for (const auto& it : doc.at("per_class"))
    report.per_class.push_back({it.at("r").get<int>(), it.at("acc").get<double>()});
  report.r_opt = doc.at("r_opt").get<int>();
  report.acc_opt = doc.at("acc_opt").get<double>();
  report.baseline = doc.at("baseline").get<double>();
  report.margin = doc.at("margin").get<double>();
  report.mean_accuracy = doc.at("mean_accuracy").get<double>();
  report.mean_significant = doc.at("mean_significant").get<bool>();
  report.owned = doc.at("verdict").get<std::string>() == "owned";
  for (const auto& it : doc.at("trials"))
    report.trial_log.push_back({it.at("r").get<int>(), it.at("seed").get<std::uint64_t>(),
                                it.at("predicted").get<int>(), it.at("member").get<int>(),
                                it.at("success").get<bool>()});
  return report;
}

std::string format_report(const FingerprintReport& report) {
  std::ostringstream out;
  out << "fingerprint report\n";
  out << "  m=" << report.config.m << "  n=" << report.config.n
      << "  t=" << report.config.trials << "  rho=" << format_double(report.config.rho)
      << "  base_seed=" << report.config.base_seed << "\n";
  out << "  baseline (1/m): " << format_double(report.baseline) << "\n";
  out << "  class  acc\n";
  for (const ClassResult& it : report.per_class) {
    char line[64];
    std::snprintf(line, sizeof line, "  %5d  %.4f\n", it.label, it.accuracy);
    out << line;
  }
  out << "  r_opt: " << report.r_opt << "   acc: " << format_double(report.acc_opt)
      << "   margin: " << format_double(report.margin) << "\n";
  out << "  mean accuracy: " << format_double(report.mean_accuracy) << "  (margin "
      << format_double(report.mean_accuracy - report.baseline) << ", significant: "
      << (report.mean_significant ? "yes" : "no") << ")\n";
  out << "  verdict: " << report.verdict() << "\n";
  if (report.discrepancy())
    out << "  note: the verdict passes at r_opt while the mean-accuracy margin"
           " falls short of rho\n";
  return out.str();
}

}  // namespace pmifp
