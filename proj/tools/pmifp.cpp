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

#include <cstdint>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pmifp/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"model ownership fingerprinting via pooled membership inference"};
  app.require_subcommand(1);

  std::string config_path;
  std::string report_path;
  std::uint64_t seed_value = 0;
  bool seed_given = false;
  std::uint64_t selfcheck_seed = 0;

  auto add_config_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed_value, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
  };

  CLI::App* train = app.add_subcommand(
      "train", "train a classifier and write the model file plus training log");
  add_config_options(train);

  CLI::App* attack = app.add_subcommand(
      "attack", "prune or fine-tune a trained model; fine-tuning writes the"
                " consumed-sample manifest");
  add_config_options(attack);

  CLI::App* fingerprint = app.add_subcommand(
      "fingerprint", "run the trial protocol and write the ownership report");
  add_config_options(fingerprint);

  CLI::App* report = app.add_subcommand("report", "pretty-print a report file");
  report->add_option("report", report_path, "report.json produced by fingerprint")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* selfcheck =
      app.add_subcommand("selfcheck", "run the built-in oracle check suites");
  selfcheck->add_option("--seed", selfcheck_seed, "seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::optional<std::uint64_t> seed =
      seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;

  if (train->parsed()) return pmifp::cli::cmd_train(config_path, seed);
  if (attack->parsed()) return pmifp::cli::cmd_attack(config_path, seed);
  if (fingerprint->parsed()) return pmifp::cli::cmd_fingerprint(config_path, seed);
  if (report->parsed()) return pmifp::cli::cmd_report(report_path);
  if (selfcheck->parsed()) return pmifp::cli::cmd_selfcheck(selfcheck_seed);
  return 2;
}
