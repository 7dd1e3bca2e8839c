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
#include <optional>
#include <string>
#include <vector>

#include "pmifp/dataset.hpp"
#include "pmifp/nn.hpp"
#include "pmifp/protocol.hpp"

namespace pmifp::cli {

struct SyntheticSpec {
  int classes = 0;
  int dim = 0;
  int per_class = 0;        // single dataset, combined with a split
  int per_class_train = 0;  // pre-split pair of datasets
  int per_class_holdout = 0;
  double spread = 1.0;
  std::uint64_t seed = 0;
};

/// Everything affecting reproducibility lives in the config file; the
/// command line only selects the command, the config path, and an optional
/// seed override.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;

  // exactly one dataset source
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::pair<std::string, std::string>> idx;  // images, labels
  std::optional<std::pair<std::string, std::string>> csv;  // train, holdout
  std::vector<std::string> logit_files;

  std::optional<double> train_fraction;
  std::uint64_t split_seed = 0;

  TrainConfig train;
  std::string model_path;  // input model for attack/fingerprint
  ProtocolConfig protocol;
  std::optional<AttackSpec> attack;
  std::vector<double> sweep_prune_rates;
  std::string exclude_manifest;
};

RunConfig load_config(const std::string& path,
                      std::optional<std::uint64_t> seed_override = {});

/// Builds the pools named by the config (not valid for the logit source).
SplitPools build_pools(const RunConfig& cfg);

// Throwing command cores; outputs land in cfg.output_dir and are
// byte-identical across reruns of the same config.
void run_train(const RunConfig& cfg);
void run_attack(const RunConfig& cfg);
void run_fingerprint(const RunConfig& cfg);
void run_report(const std::string& report_path);

/// Exit-code mapping: 0 success, 2 config, 3 capacity, 4 I/O, 5 divergence.
int exit_code_for(const std::exception& error);

// Shell entry points: run the core, print a single machine-parsable error
// line on failure, and return the exit code.
int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed = {});
int cmd_attack(const std::string& config_path, std::optional<std::uint64_t> seed = {});
int cmd_fingerprint(const std::string& config_path, std::optional<std::uint64_t> seed = {});
int cmd_report(const std::string& report_path);
int cmd_selfcheck(std::uint64_t seed = 0);

}  // namespace pmifp::cli
