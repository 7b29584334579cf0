// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "grip/constraints.hpp"

// Training-time enforcement of routing constraints on router update rows.
//
// Rows handed to these functions are *additive updates* to a router row
// (ΔΘ_j, i.e. -lr·∇ for plain gradient descent). Equality constraints keep
// ΔΘ_j·x_i = 0 for samples that selected expert j; half-space constraints keep
// ΔΘ_j·x_i ≤ τ_ij - slack for samples that did not.

namespace grip {

enum class HalfspaceRows {
  /// Kaczmarz on the raw retain rows, then the equality projector once more.
  Ambient,
  /// Kaczmarz on the rows pushed through the equality projector; iterates
  /// never leave the equality subspace, so no re-projection is needed.
  Projected,
};

/// What constrain_router_gradients does with a row Kaczmarz leaves infeasible.
enum class InfeasiblePolicy {
  /// Keep the iterate and flag it.
  Accept,
  /// Scale the iterate toward zero (feasible whenever every bound is ≥ 0)
  /// until each half-space with a nonnegative bound holds.
  Shrink,
};

struct KaczmarzConfig {
  std::size_t k_max = 100;
  double margin_slack = 1e-6;
  std::size_t check_every = 25;
  std::uint64_t seed = 0;
  HalfspaceRows rows = HalfspaceRows::Ambient;
  /// Allow k_max samples per initially violated constraint rather than k_max in total.
  bool budget_per_violation = true;
  InfeasiblePolicy on_infeasible = InfeasiblePolicy::Accept;
};

struct EnforcementStats {
  std::size_t layer = 0;
  std::size_t expert = 0;
  std::size_t iterations = 0;
  std::size_t projections = 0;
  std::size_t constraints = 0;
  std::size_t violated_initial = 0;
  std::size_t violated_final = 0;
  double initial_max_violation = 0.0;
  double final_max_violation = 0.0;
  /// Max violation after the closing equality re-projection (Ambient mode).
  double reprojected_max_violation = 0.0;
  bool feasible = true;
  /// Factor applied by InfeasiblePolicy::Shrink (1 when not applied).
  double shrink_factor = 1.0;
  std::vector<std::uint32_t> sample_histogram;
  double flops = 0.0;
};

nlohmann::json to_json(const EnforcementStats& s);

/// Half-space system a_i·g ≤ b_i with sampling weights ‖a_i‖².
struct HalfspaceSystem {
  const Matrix& rows;
  std::span<const double> bounds;
  std::span<const double> sq_norms;
  std::span<const double> cumulative;
};

struct KaczmarzResult {
  Vector row;
  EnforcementStats stats;
};

/// Randomized Kaczmarz for linear inequalities: sample i with p_i ∝ ‖a_i‖²,
/// project onto {a_i·g ≤ b_i} if violated. A full scan runs before the first
/// sample and every `check_every` samples; the loop stops when a scan finds
/// no violation or `k_max` samples have been drawn.
KaczmarzResult kaczmarz_solve(std::span<const double> start, const HalfspaceSystem& system,
                              const KaczmarzConfig& cfg, std::mt19937_64& rng);

/// Deterministic stream for (seed, layer, expert, step).
std::mt19937_64 make_stream(std::uint64_t seed, std::size_t layer, std::size_t expert,
                            std::uint64_t step);

Vector project_equality(std::span<const double> row, const ExpertConstraintSet& cs);

/// Half-space projection against the capture-time margins (bounds τ - slack).
KaczmarzResult kaczmarz_halfspace(std::span<const double> row, const ExpertConstraintSet& cs,
                                  const KaczmarzConfig& cfg);

struct ConstrainedUpdate {
  std::vector<Matrix> rows;  // per layer, E×d
  std::vector<EnforcementStats> stats;
  bool all_feasible = true;
  double flops = 0.0;
};

/// Per layer and expert: equality projection, then Kaczmarz against the
/// current margin on the cached inputs minus slack. `accumulated` is the
/// router change (E×d per layer) applied since capture; null means none, in
/// which case the bound is τ - slack.
/// Pairs run in parallel with independent RNG streams.
ConstrainedUpdate constrain_router_gradients(const std::vector<Matrix>& updates,
                                             const ConstraintBank& bank, const KaczmarzConfig& cfg,
                                             const std::vector<Matrix>* accumulated = nullptr,
                                             std::uint64_t step = 0);

struct GuardResult {
  std::size_t halvings = 0;       // summed over layers
  std::size_t zeroed_layers = 0;  // layers whose update was dropped entirely
  double flops = 0.0;
};

/// Backtracking safeguard for parallel per-expert solves, which cannot see
/// each other's leakage through approximate null spaces. Predicts the scores
/// S + (accumulated + update)·X on the cached inputs and halves a layer's
/// update until every cached top-k selection is reproduced; after
/// `max_halvings` the layer update is zeroed. Assumes `accumulated` alone
/// reproduces the selections.
GuardResult guard_cached_selections(std::vector<Matrix>& updates, const RetainCache& cache,
                                    const std::vector<Matrix>& accumulated,
                                    std::size_t max_halvings = 20);

struct GlobalProjectors {
  double eps = 1e-2;
  std::vector<Projector> layers;
  std::vector<ConstraintWarning> warnings;
  double build_flops = 0.0;
};

/// One projector per layer onto the approximate null space of the full
/// retain matrix X_{r,ℓ}.
GlobalProjectors build_global_projectors(const RetainCache& cache, double eps,
                                         bool eps_relative = false);

/// Projects every router row of layer ℓ with the layer's projector. An empty
/// null space zeroes the layer's router update.
std::vector<Matrix> global_nullspace_constrain(const std::vector<Matrix>& updates,
                                               const GlobalProjectors& projectors,
                                               double* flops = nullptr);

/// Scaled condition number ‖A‖_F·‖A⁺‖₂ of the half-space rows, estimated by
/// power iteration. Diagnostic only.
double kaczmarz_condition_estimate(const Matrix& rows);

/// max_i (a_i·g - b_i), clamped at 0, and the number of strictly violated rows.
std::pair<double, std::size_t> max_violation(std::span<const double> row, const Matrix& rows,
                                             std::span<const double> bounds);

}  // namespace grip
