// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grip/config.hpp"
#include "grip/constraints.hpp"
#include "grip/unlearn.hpp"

namespace grip {

/// The pre-unlearning state of one seed.
struct SeedFixture {
  std::uint64_t seed = 0;
  SyntheticTask task;
  PretrainResult pretrained;
  RetainCache cache;  // of retain_train under the pretrained network
};

/// Task generation, pretraining and cache capture. Throws FixtureError when
/// pretraining misses its accuracy target.
SeedFixture prepare_seed(const ExperimentConfig& config, std::uint64_t seed);

/// One-sided sign test: P[X ≥ wins] for X ~ Binomial(trials, 1/2).
double sign_test_pvalue(std::size_t wins, std::size_t trials);

/// Paired-seed outcome of a constrained mode against the unconstrained one.
struct PairedComparison {
  std::string objective;
  std::string mode;
  std::size_t pairs = 0;
  std::size_t matched = 0;   // FA(mode) ≤ FA(none) + tolerance
  std::size_t rs_wins = 0;   // matched and RS(mode) > RS(none)
  std::size_t ra_wins = 0;   // matched and RA(mode) > RA(none)
  std::size_t wins = 0;      // matched, RS and RA both better
  std::size_t vulnerability_wins = 0;  // vuln(none) > vuln(mode)
  double p_value = 1.0;                // sign test on `wins`
  double vulnerability_p_value = 1.0;  // sign test on `vulnerability_wins`
};

/// `none[i]` and `constrained[i]` must come from the same seed. Aborted runs
/// count as losses for the constrained side.
PairedComparison compare_paired(const std::vector<RunReport>& none,
                                const std::vector<RunReport>& constrained,
                                double fa_tolerance = 0.05);

nlohmann::json to_json(const PairedComparison& c);

}  // namespace grip
