// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "grip/unlearn.hpp"

namespace grip {

/// Everything one experiment needs. Loaded from JSON; every section and key
/// is optional, unknown keys are rejected.
///
///   {
///     "seeds": [1, 2, 3],
///     "output_dir": "runs",
///     "threads": 0,
///     "model":    {"layers", "experts", "dim", "k", "classes"},
///     "task":     {"latent_dim", "retain_clusters", "forget_clusters", "cluster_radius",
///                  "center_norm", "forget_alignment", "min_separation",
///                  "retain_train", "forget_train", "retain_test", "forget_test"},
///     "pretrain": {"steps", "lr", "min_accuracy", "target_loss",
///                  "router_scale", "expert_scale"},
///     "unlearn":  {"objective", "enforcement", "steps", "lr", "router_lr_scale",
///                  "expert_momentum", "grad_clip", "clip_per_group", "kl_weight",
///                  "npo_beta", "rmu_coeff", "rmu_retain_weight", "rmu_layer", "eps",
///                  "eps_relative", "lambda", "ptc_sequential", "k_max",
///                  "budget_per_violation", "on_infeasible", "selection_guard",
///                  "margin_slack", "check_every",
///                  "halfspace_rows", "stop_fa", "update_routers", "update_experts",
///                  "update_readout"},
///     "attack":   {"policy", "m", "best_of"}
///   }
///
/// The task dimension and class count always follow "model".
struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "runs";
  int threads = 0;  // 0 = OpenMP default
  NetworkShape shape{};
  TaskConfig task{};
  PretrainConfig pretrain{};
  UnlearnConfig unlearn{};

  TaskConfig task_for(std::uint64_t seed) const;
  PretrainConfig pretrain_for(std::uint64_t seed) const;
  UnlearnConfig unlearn_for(std::uint64_t seed) const;
};

/// Throws FormatError on malformed JSON, unknown keys or wrong types and
/// ContractViolation on out-of-range values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

}  // namespace grip
