// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/ptc.hpp"

#include "grip/errors.hpp"
#include "grip/kernels.hpp"
#include "grip/numerics.hpp"

namespace grip {

std::vector<Matrix> recapture_drifted(const MoENetwork& net, const Matrix& retain_inputs,
                                      std::size_t expected_samples) {
  GRIP_REQUIRE(retain_inputs.rows() == expected_samples,
               "recapture_drifted: retain input count differs from the cache (" +
                   std::to_string(retain_inputs.rows()) + " vs " + std::to_string(expected_samples) +
                   ")");
  const NetworkShape shape = net.shape();
  std::vector<Matrix> reps(shape.layers, Matrix(shape.dim, retain_inputs.rows()));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(retain_inputs.rows()); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const Tape tape = forward_tape(net, retain_inputs.row(i));
    for (std::size_t l = 0; l < shape.layers; ++l) reps[l].set_column(i, tape.inputs[l]);
  }
  return reps;
}

Matrix ptc_correction_to_target(const RouterParams& theta, const Matrix& target_scores,
                                const Matrix& x_drift, double lambda) {
  GRIP_REQUIRE(theta.theta.cols() == x_drift.rows(), "ptc_correction: Θ and X′ dimensions differ");
  GRIP_REQUIRE(target_scores.rows() == theta.theta.rows() && target_scores.cols() == x_drift.cols(),
               "ptc_correction: target scores must be E×N");
  const Matrix residual = target_scores - kernels::matmul(theta.theta, x_drift);
  return kernels::matmul(residual, ridge_pseudoinverse(x_drift, lambda));
}

Matrix ptc_correction(const RouterParams& theta, const Matrix& x, const Matrix& x_drift,
                      double lambda) {
  GRIP_REQUIRE(x.rows() == x_drift.rows() && x.cols() == x_drift.cols(),
               "ptc_correction: X and X′ must have the same shape");
  GRIP_REQUIRE(theta.theta.cols() == x.rows(), "ptc_correction: Θ and X dimensions differ");
  const Matrix diff = x - x_drift;
  return kernels::matmul(kernels::matmul(theta.theta, diff), ridge_pseudoinverse(x_drift, lambda));
}

nlohmann::json to_json(const PtcResult& r) {
  std::vector<double> delta_norms;
  for (const auto& d : r.deltas) delta_norms.push_back(frobenius_norm(d));
  return {{"lambda", r.lambda},
          {"sequential", r.sequential},
          {"delta_norms", delta_norms},
          {"residuals", r.residuals},
          {"relative_residuals", r.relative_residuals},
          {"flops", r.flops}};
}

namespace {

double solve_cost(std::size_t d, std::size_t n, std::size_t e) {
  const double m = static_cast<double>(std::min(d, n));
  const double dd = static_cast<double>(d);
  const double nn = static_cast<double>(n);
  const double ee = static_cast<double>(e);
  // Gram, factorisation, d (or N) triangular solves, residual and product.
  return 2.0 * dd * nn * m + cholesky_cost(static_cast<std::size_t>(m)) +
         2.0 * m * m * std::max(dd, nn) + 4.0 * ee * dd * nn;
}

}  // namespace

CorrectedNetwork apply_ptc(const MoENetwork& net_post, const RetainCache& cache,
                           const Matrix& retain_inputs, PtcOptions opts) {
  GRIP_REQUIRE(opts.lambda > 0.0, "apply_ptc: lambda must be positive");
  cache.validate();
  const NetworkShape shape = net_post.shape();
  GRIP_REQUIRE(shape.layers == cache.layers && shape.dim == cache.dim && shape.experts == cache.experts,
               "apply_ptc: network does not match the cache shape");

  CorrectedNetwork out{net_post, {}};
  out.result.lambda = opts.lambda;
  out.result.sequential = opts.sequential;
  const double recapture_cost = forward_cost(shape) * static_cast<double>(cache.samples);

  std::vector<Matrix> drifted;
  if (!opts.sequential) {
    drifted = recapture_drifted(net_post, retain_inputs, cache.samples);
    out.result.flops += recapture_cost;
  }
  for (std::size_t l = 0; l < shape.layers; ++l) {
    if (opts.sequential) {
      drifted = recapture_drifted(out.net, retain_inputs, cache.samples);
      out.result.flops += recapture_cost;
    }
    const Matrix& xd = drifted[l];
    RouterParams& router = out.net.layers[l].router;
    Matrix delta = ptc_correction_to_target(router, cache.scores[l], xd, opts.lambda);
    router.theta += delta;
    const Matrix restored = kernels::matmul(router.theta, xd);
    const double res = frobenius_norm(restored - cache.scores[l]);
    const double ref = frobenius_norm(cache.scores[l]);
    out.result.residuals.push_back(res);
    out.result.relative_residuals.push_back(ref > 0.0 ? res / ref : res);
    out.result.deltas.push_back(std::move(delta));
    out.result.flops += solve_cost(shape.dim, cache.samples, shape.experts);
  }
  return out;
}

}  // namespace grip
