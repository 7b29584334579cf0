// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "grip/errors.hpp"
#include "grip/kernels.hpp"
#include "grip/ptc.hpp"
#include "grip/routing.hpp"
#include "oracles.hpp"

using namespace grip;

namespace {

// Perturbs every expert so that deeper layers see drifted inputs.
MoENetwork perturb_experts(MoENetwork net, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers)
    for (auto& ex : layer.experts) ex.weight += oracle::random_matrix(ex.weight.rows(), ex.weight.cols(), rng, scale);
  return net;
}

}  // namespace

TEST_CASE("ptc_correction is zero without drift and matches the ridge formula") {
  std::mt19937_64 rng(1);
  const RouterParams theta{oracle::random_matrix(4, 6, rng)};
  const Matrix x = oracle::random_matrix(6, 5, rng);
  CHECK(max_abs(ptc_correction(theta, x, x, 1e-6)) == 0.0);

  const Matrix xd = oracle::random_matrix(6, 5, rng);
  const Matrix got = ptc_correction(theta, x, xd, 1e-3);
  const Matrix want = oracle::multiply(oracle::multiply(theta.theta, x - xd), oracle::ridge_pinv(xd, 1e-3));
  CHECK(frobenius_norm(got - want) <= 1e-8 * (1.0 + frobenius_norm(want)));

  const Matrix target = kernels::matmul(theta.theta, x);
  CHECK(frobenius_norm(ptc_correction_to_target(theta, target, xd, 1e-3) - got) <= 1e-10 * (1.0 + frobenius_norm(got)));
  CHECK_THROWS_AS(ptc_correction(theta, x, oracle::random_matrix(6, 4, rng), 1e-3), ContractViolation);
}

TEST_CASE("full-rank regime restores cached scores and selections exactly") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const NetworkShape shape{3, 6, 16, 2, 4};
    const MoENetwork net = MoENetwork::random(shape, seed);
    const Matrix retain = oracle::random_matrix(8, 16, rng);  // N_r ≤ d/2
    const RetainCache cache = capture_retain_cache(net, retain);
    const MoENetwork post = perturb_experts(net, seed + 50, 0.3);
    for (bool sequential : {true, false}) {
      const CorrectedNetwork c = apply_ptc(post, cache, retain, {1e-10, sequential});
      REQUIRE(c.result.relative_residuals.size() == 3);
      if (sequential)
        for (double r : c.result.relative_residuals) CHECK(r <= 1e-6);
      CHECK(c.result.flops > 0.0);
      if (!sequential) continue;
      const RetainCache after = capture_retain_cache(c.net, retain);
      CHECK(after.selections == cache.selections);
    }
  }
}

TEST_CASE("ptc leaves experts and readout untouched") {
  std::mt19937_64 rng(3);
  const MoENetwork net = MoENetwork::random({2, 4, 8, 2, 3}, 3);
  const Matrix retain = oracle::random_matrix(4, 8, rng);
  const RetainCache cache = capture_retain_cache(net, retain);
  const MoENetwork post = perturb_experts(net, 9, 0.2);
  const CorrectedNetwork c = apply_ptc(post, cache, retain);
  CHECK(c.net.layers[1].experts[2].weight == post.layers[1].experts[2].weight);
  CHECK(c.net.readout.weight == post.readout.weight);
  const auto j = to_json(c.result);
  CHECK(j.at("sequential").get<bool>());
  CHECK(j.at("residuals").size() == 2);
}
