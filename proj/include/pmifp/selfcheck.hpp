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
#include <vector>

#include "pmifp/nn.hpp"
#include "pmifp/pmi.hpp"

// Independent reference implementations and the randomized check suites
// built on them. The oracles deliberately share no code with the production
// paths they validate; the `selfcheck` CLI command and the test suites both
// run them.

namespace pmifp::selfcheck {

/// Plain double loop over ordered index pairs; dot-product kernel.
double mmd_bruteforce(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys);

/// Single linkage by re-scanning every cross-leaf pair at every step, with
/// the same tie rule as the production path.
ClusterTree single_linkage_bruteforce(const DistanceMatrix& distances);

/// Central finite differences of the batch cross-entropy loss.
Eigen::VectorXd numerical_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   const Eigen::VectorXi& labels, double step);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

CheckResult check_mmd(int pairs, std::uint64_t seed);
CheckResult check_clustering(int instances, std::uint64_t seed);
CheckResult check_normalization(int instances, std::uint64_t seed);
CheckResult check_gradients(int networks, std::uint64_t seed, double step = 1e-5,
                            double rel_tol = 1e-4);

std::vector<CheckResult> run_all_checks(std::uint64_t seed);

}  // namespace pmifp::selfcheck
