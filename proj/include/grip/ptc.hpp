// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <json.hpp>

#include "grip/constraints.hpp"
#include "grip/moe.hpp"

namespace grip {

/// Post-unlearning representations of the retain inputs, one d×N matrix per
/// layer, column-aligned with the original cache.
std::vector<Matrix> recapture_drifted(const MoENetwork& net, const Matrix& retain_inputs,
                                      std::size_t expected_samples);

/// ΔΘ = Θ(X − X′)·X′ᵀ(X′X′ᵀ + λI)⁻¹, the ridge least-squares router change
/// that maps drifted inputs back onto the original scores.
Matrix ptc_correction(const RouterParams& theta, const Matrix& x, const Matrix& x_drift,
                      double lambda);

/// Same least-squares problem with an explicit score target:
/// ΔΘ = (S − ΘX′)·X′†. ptc_correction is the case S = ΘX.
Matrix ptc_correction_to_target(const RouterParams& theta, const Matrix& target_scores,
                                const Matrix& x_drift, double lambda);

struct PtcOptions {
  double lambda = 1e-6;
  /// Recapture layer ℓ's inputs after layers < ℓ have been corrected.
  bool sequential = true;
};

struct PtcResult {
  std::vector<Matrix> deltas;
  std::vector<double> residuals;           // ‖(Θ+ΔΘ)X′ − S‖_F
  std::vector<double> relative_residuals;  // residual / ‖S‖_F
  double lambda = 1e-6;
  bool sequential = true;
  double flops = 0.0;
};

nlohmann::json to_json(const PtcResult& r);

struct CorrectedNetwork {
  MoENetwork net;
  PtcResult result;
};

/// Corrects every router so that cached retain scores are reproduced on the
/// post-unlearning representations. Layers are processed in ascending order.
CorrectedNetwork apply_ptc(const MoENetwork& net_post, const RetainCache& cache,
                           const Matrix& retain_inputs, PtcOptions opts = {});

}  // namespace grip
