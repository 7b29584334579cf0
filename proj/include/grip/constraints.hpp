// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grip/moe.hpp"
#include "grip/numerics.hpp"

namespace grip {

/// Pre-router representations, scores and selections of the retain set,
/// captured once from the reference network.
struct RetainCache {
  std::size_t layers = 0;
  std::size_t dim = 0;
  std::size_t samples = 0;
  std::size_t experts = 0;
  std::size_t k = 0;
  std::vector<Matrix> reps;    // per layer, d×N (column i = sample i)
  std::vector<Matrix> scores;  // per layer, E×N
  std::vector<std::vector<SelectionSet>> selections;  // [layer][sample]

  void validate() const;
};

/// One forward pass per row of `inputs` (N×d).
RetainCache capture_retain_cache(const MoENetwork& net, const Matrix& inputs);

// GRIPCACH file: magic, u32 version (=1), u32 L, d, N, E, k, then per layer
// reps (d·N f64, row-major d×N), scores (E·N f64, row-major E×N),
// selections (N·k u32, sample-major). Little-endian throughout.
std::vector<std::uint8_t> encode_cache(const RetainCache& cache);
RetainCache decode_cache(std::span<const std::uint8_t> bytes);
void save_cache(const std::filesystem::path& path, const RetainCache& cache);
RetainCache load_cache(const std::filesystem::path& path);

struct SelectionPartition {
  std::vector<std::size_t> selected;    // I_j
  std::vector<std::size_t> complement;  // everything else, ascending
};

SelectionPartition partition_by_selection(const RetainCache& cache, std::size_t layer,
                                          std::size_t expert);

struct SelectionMargins {
  std::vector<std::size_t> indices;  // samples that did not select the expert
  Vector tau;                        // min over the selected set of (s_k - s_j)
};

SelectionMargins compute_margins(const RetainCache& cache, std::size_t layer, std::size_t expert);

/// Equality and half-space constraints on one router row.
struct ExpertConstraintSet {
  std::size_t layer = 0;
  std::size_t expert = 0;

  std::vector<std::size_t> eq_indices;
  Projector eq_projector;  // identity when eq_indices is empty
  /// Samples select this expert but the approximate null space is {0}: the
  /// equality-constrained component of every update is zeroed.
  bool empty_nullspace = false;

  std::vector<std::size_t> ineq_indices;
  Matrix ineq_rows;  // one retain representation per row
  Vector margins;    // τ_{i,j} ≥ 0
  // Capture-time scores behind each margin: the expert's own score and the
  // scores of the experts input i selected (rivals[r] lists their indices).
  Vector own_scores;
  std::vector<std::vector<std::uint32_t>> rivals;
  std::vector<Vector> rival_scores;
  Vector sq_norms;   // ‖x_i‖²
  Vector cumulative_weights;  // prefix sums of sq_norms, for sampling

  // The same rows pushed through eq_projector (P·x_i), for Kaczmarz inside
  // the equality subspace.
  Matrix projected_rows;
  Vector projected_sq_norms;
  Vector projected_cumulative;

  double build_flops = 0.0;
};

ExpertConstraintSet build_expert_constraints(const RetainCache& cache, std::size_t layer,
                                             std::size_t expert, double eps,
                                             bool eps_relative = false);

struct ConstraintWarning {
  std::string kind;
  std::size_t layer = 0;
  std::size_t expert = 0;
  std::string detail;
};

struct ConstraintBank {
  double eps = 1e-2;
  bool eps_relative = false;
  std::vector<std::vector<ExpertConstraintSet>> sets;  // [layer][expert]
  std::vector<ConstraintWarning> warnings;
  double build_flops = 0.0;

  const ExpertConstraintSet& at(std::size_t layer, std::size_t expert) const {
    return sets.at(layer).at(expert);
  }
  std::size_t empty_nullspace_count() const;
};

/// Builds every (layer, expert) constraint set; pairs are independent and run in parallel.
ConstraintBank build_constraint_bank(const RetainCache& cache, double eps,
                                     bool eps_relative = false);

}  // namespace grip
