// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "grip/moe.hpp"

namespace grip {

enum class ForcingMode {
  /// Route through the experts the pre-unlearning model chose.
  PreSelection,
  /// Route through the m highest-scoring experts outside the current selection.
  TopMNonselected,
};

struct ForcingPolicy {
  ForcingMode mode = ForcingMode::PreSelection;
  std::size_t m = 5;
  /// TopMNonselected only: probe each of the m experts alone and count a hit
  /// if any probe is correct, instead of one joint forward pass.
  bool best_of = false;
};

std::string to_string(ForcingMode m);
ForcingMode parse_forcing_mode(const std::string& s);

/// Forward pass with every layer's selection replaced per `policy`.
/// `pre_selection` (one set per layer) is required for PreSelection.
Vector forced_forward(const MoENetwork& net, std::span<const double> x, const ForcingPolicy& policy,
                      const std::vector<SelectionSet>* pre_selection);

struct AttackResult {
  ForcingPolicy policy;
  std::size_t queries = 0;
  std::size_t shifted_queries = 0;
  double random_baseline = 0.0;
  // Over forget queries whose routing shifted at ≥ 1 layer.
  double normal_fa = 0.0;
  double forced_fa = 0.0;
  double vulnerability = 0.0;
  // Over every forget query.
  double normal_fa_all = 0.0;
  double forced_fa_all = 0.0;
  double vulnerability_all = 0.0;
};

nlohmann::json to_json(const AttackResult& r);

/// (forced − 1/C)₊ / max(normal − 1/C, 0.01)
double vulnerability_ratio(double forced_fa, double normal_fa, std::size_t classes);

/// `pre_selections[q]` is the pre-unlearning selection of forget query q.
AttackResult forcing_attack(const MoENetwork& net_post, const Matrix& forget_inputs,
                            const std::vector<int>& forget_labels,
                            const std::vector<std::vector<SelectionSet>>& pre_selections,
                            const ForcingPolicy& policy);

}  // namespace grip
