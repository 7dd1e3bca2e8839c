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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmifp/dataset.hpp"
#include "pmifp/nn.hpp"
#include "pmifp/pmi.hpp"

namespace pmifp {

struct ProtocolConfig {
  int m = 3;                 // mini-datasets per trial
  int n = 100;               // samples per mini-dataset
  int trials = 100;          // t
  double rho = 0.1;          // required margin over the 1/m baseline
  std::vector<int> classes;  // classes to test; empty = all
  std::uint64_t base_seed = 0;

  void validate(int class_count) const;
  std::vector<int> resolved_classes(int class_count) const;
};

struct TrialRecord {
  int label = 0;
  std::uint64_t seed = 0;
  int predicted_index = 0;
  int member_index = 0;
  bool success = false;
};

struct ClassResult {
  int label = 0;
  double accuracy = 0.0;
};

struct FingerprintReport {
  ProtocolConfig config;
  std::vector<ClassResult> per_class;  // ordered by class label
  int r_opt = 0;
  double acc_opt = 0.0;
  double baseline = 0.0;  // 1/m
  double margin = 0.0;    // acc_opt - baseline
  double mean_accuracy = 0.0;
  bool owned = false;             // margin >= rho
  bool mean_significant = false;  // mean_accuracy - baseline >= rho
  std::vector<TrialRecord> trial_log;  // ordered by (class, trial)

  std::string verdict() const { return owned ? "owned" : "not-proven"; }
  /// Verdict passes while the mean-accuracy margin falls short of rho.
  bool discrepancy() const { return owned && !mean_significant; }
};

/// Seed for one trial: base_seed + trial_index within a class-mixed stream,
/// so per-class runs are independent and reproducible in isolation.
std::uint64_t trial_seed(std::uint64_t base_seed, int label, int trial_index);

/// Runs cfg.trials seeded trials for one class and returns the fraction in
/// which the member mini-dataset was identified. Capacity errors surface
/// with class context.
double run_class(const MlpModel& model, const SplitPools& pools, int label,
                 const ProtocolConfig& cfg, std::vector<TrialRecord>* log = nullptr);

/// Runs every tested class, picks r_opt = argmax (acc_r - 1/m) with ties
/// toward the smallest class, and issues the verdict: owned iff the margin
/// at r_opt reaches rho. The mean accuracy over tested classes is reported
/// alongside as a secondary significance indicator.
FingerprintReport run_all(const MlpModel& model, const SplitPools& pools,
                          const ProtocolConfig& cfg);

/// Report assembly from per-class accuracies (exposed for direct checks).
FingerprintReport summarize(const std::vector<ClassResult>& per_class,
                            const ProtocolConfig& cfg);

struct AttackSpec {
  enum class Kind { none, fine_tune, prune };
  Kind kind = Kind::none;
  double prune_rate = 0.0;
  double finetune_fraction = 0.2;
  TrainConfig finetune_cfg{};
  std::uint64_t finetune_seed = 0;
};

/// Applies the attack (fine-tuning updates the pools, pruning does not) and
/// re-runs the full protocol with a fresh enumeration of classes; r_opt is
/// recomputed, never inherited from the clean model.
FingerprintReport run_attacked(const MlpModel& model, const SplitPools& pools,
                               const ProtocolConfig& cfg, const AttackSpec& attack);

nlohmann::json report_to_json(const FingerprintReport& report);
FingerprintReport report_from_json(const nlohmann::json& doc);
std::string format_report(const FingerprintReport& report);

}  // namespace pmifp
