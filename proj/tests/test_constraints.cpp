// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>
#include <set>

#include "grip/constraints.hpp"
#include "grip/errors.hpp"
#include "grip/kernels.hpp"
#include "oracles.hpp"

using namespace grip;

namespace {

// One layer with the given router and zero experts; the cache then holds the
// raw inputs as layer-0 representations.
MoENetwork single_layer(const Matrix& theta, std::size_t k) {
  MoENetwork net;
  MoELayer layer;
  layer.k = k;
  layer.router.theta = theta;
  for (std::size_t j = 0; j < theta.rows(); ++j)
    layer.experts.push_back({Matrix(theta.cols(), theta.cols()), Vector(theta.cols(), 0.0)});
  net.layers.push_back(layer);
  net.readout = {Matrix(2, theta.cols()), Vector(2, 0.0)};
  return net;
}

}  // namespace

TEST_CASE("partition examples and completeness") {
  // Scores per sample: x0 → (1,0,·), x1 → (0,1,·); k=1 over three experts.
  const Matrix theta{{1, 0}, {0, 1}, {-1, -1}};
  const Matrix x{{1, 0}, {0, 1}, {2, 1}};
  const RetainCache cache = capture_retain_cache(single_layer(theta, 1), x);
  auto p0 = partition_by_selection(cache, 0, 0);
  CHECK(p0.selected == std::vector<std::size_t>{0, 2});
  CHECK(p0.complement == std::vector<std::size_t>{1});
  auto p2 = partition_by_selection(cache, 0, 2);
  CHECK(p2.selected.empty());
  CHECK(p2.complement.size() == 3);
  CHECK_THROWS_AS(partition_by_selection(cache, 1, 0), ContractViolation);
  CHECK_THROWS_AS(partition_by_selection(cache, 0, 3), ContractViolation);

  const MoENetwork net = MoENetwork::random({3, 6, 5, 2, 2}, 4);
  std::mt19937_64 rng(4);
  const RetainCache big = capture_retain_cache(net, oracle::random_matrix(40, 5, rng));
  for (std::size_t l = 0; l < 3; ++l) {
    std::size_t total_selected = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      const auto p = partition_by_selection(big, l, j);
      std::set<std::size_t> all(p.selected.begin(), p.selected.end());
      all.insert(p.complement.begin(), p.complement.end());
      CHECK(all.size() == 40);
      CHECK(p.selected.size() + p.complement.size() == 40);
      for (auto i : p.selected) CHECK(big.selections[l][i].contains(static_cast<std::uint32_t>(j)));
      total_selected += p.selected.size();
    }
    CHECK(total_selected == 40 * 2);
  }
}

TEST_CASE("margins: tie gives zero and random fixtures match brute force") {
  const Matrix theta{{1}, {1}, {0}};  // scores (1,1,0) for x = 1
  const RetainCache tie = capture_retain_cache(single_layer(theta, 1), Matrix{{1.0}});
  const SelectionMargins m = compute_margins(tie, 0, 1);
  REQUIRE(m.indices == std::vector<std::size_t>{0});
  CHECK(m.tau[0] == 0.0);
  CHECK(compute_margins(tie, 0, 2).tau[0] == 1.0);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const std::size_t e = 3 + rng() % 5, k = 1 + rng() % (e - 1), d = 2 + rng() % 6;
    const Matrix th = oracle::random_matrix(e, d, rng);
    const Matrix x = oracle::random_matrix(15, d, rng);
    const RetainCache cache = capture_retain_cache(single_layer(th, k), x);
    for (std::size_t j = 0; j < e; ++j) {
      const SelectionMargins mj = compute_margins(cache, 0, j);
      for (std::size_t r = 0; r < mj.indices.size(); ++r) {
        const std::size_t i = mj.indices[r];
        const Vector s = matvec(th, x.row(i));
        const auto sel = oracle::topk(s, k);
        double best = 1e300;
        for (auto q : sel) best = std::min(best, s[q] - s[j]);
        CHECK(mj.tau[r] >= 0.0);
        CHECK(mj.tau[r] == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("constraint set examples") {
  SUBCASE("one selected input e1 in d=2 gives diag(0,1)") {
    const RetainCache cache = capture_retain_cache(single_layer(Matrix{{1, 0}, {-1, 0}}, 1), Matrix{{1, 0}});
    const ExpertConstraintSet cs = build_expert_constraints(cache, 0, 0, 1e-2);
    const Matrix p = cs.eq_projector.matrix();
    CHECK(std::abs(p(0, 0)) <= 1e-15);
    CHECK(p(1, 1) == doctest::Approx(1.0));
    CHECK_FALSE(cs.empty_nullspace);
    const ExpertConstraintSet other = build_expert_constraints(cache, 0, 1, 1e-2);
    CHECK(other.eq_indices.empty());
    CHECK(other.eq_projector.is_identity());
    REQUIRE(other.ineq_indices.size() == 1);
    CHECK(other.margins[0] == doctest::Approx(2.0));
  }
  SUBCASE("selected inputs spanning the space block the row") {
    const RetainCache cache =
        capture_retain_cache(single_layer(Matrix{{1, 1}, {0, 0}}, 1), Matrix{{1, 0}, {0, 1}});
    const ExpertConstraintSet cs = build_expert_constraints(cache, 0, 0, 1e-2);
    CHECK(cs.empty_nullspace);
    CHECK(cs.eq_projector.is_empty());
    CHECK(cs.ineq_indices.empty());
    const ConstraintBank bank = build_constraint_bank(cache, 1e-2);
    CHECK(bank.empty_nullspace_count() == 1);
    REQUIRE_FALSE(bank.warnings.empty());
    CHECK(bank.warnings[0].kind == "empty_nullspace");
  }
}

TEST_CASE("equality projectors annihilate the selected inputs") {
  std::mt19937_64 rng(12);
  const std::size_t d = 12;
  const MoENetwork net = MoENetwork::random({2, 4, d, 2, 2}, 12);
  const RetainCache cache = capture_retain_cache(net, oracle::random_matrix(16, d, rng));
  const ConstraintBank bank = build_constraint_bank(cache, 1e-2);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t j = 0; j < 4; ++j) {
      const auto& cs = bank.at(l, j);
      const Matrix p = cs.eq_projector.matrix();
      if (cs.eq_indices.size() >= d) continue;  // rank < d only when strictly fewer samples
      for (auto i : cs.eq_indices) {
        const Vector px = matvec(p, cache.reps[l].column(i));
        CHECK(norm(px) <= 1e-8 * (1.0 + norm(cache.reps[l].column(i))));
      }
      CHECK(cs.ineq_rows.rows() == cs.ineq_indices.size());
      CHECK(cs.eq_indices.size() + cs.ineq_indices.size() == 16);
      for (double tau : cs.margins) CHECK(tau >= 0.0);
    }
}

TEST_CASE("relative eps keeps more directions than raw eps on large inputs") {
  std::mt19937_64 rng(5);
  const MoENetwork net = MoENetwork::random({1, 2, 6, 1, 2}, 5);
  const RetainCache cache = capture_retain_cache(net, oracle::random_matrix(40, 6, rng, 10.0));
  const auto raw = build_constraint_bank(cache, 1e-1, false);
  const auto rel = build_constraint_bank(cache, 1e-1, true);
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(rel.at(0, j).eq_projector.dimension() >= raw.at(0, j).eq_projector.dimension());
}
