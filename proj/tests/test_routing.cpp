// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>
#include <sstream>

#include "grip/errors.hpp"
#include "grip/routing.hpp"
#include "oracles.hpp"

using namespace grip;

namespace {

SelectionTrace make_trace(std::vector<std::vector<SelectionSet>> sel, std::string tag = "pre") {
  SelectionTrace t;
  t.tag = std::move(tag);
  for (std::size_t q = 0; q < sel.size(); ++q) t.query_ids.push_back("q" + std::to_string(q));
  t.selections = std::move(sel);
  return t;
}

}  // namespace

TEST_CASE("jaccard examples and properties") {
  CHECK(jaccard({1, 2}, {1, 2}) == 1.0);
  CHECK(jaccard({1, 2}, {3, 4}) == 0.0);
  CHECK(jaccard({1, 2}, {2, 3}) == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard(SelectionSet{}, SelectionSet{}) == 1.0);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint32_t> a, b;
    for (std::uint32_t e = 0; e < 8; ++e) {
      if (rng() % 2) a.push_back(e);
      if (rng() % 2) b.push_back(e);
    }
    const SelectionSet sa(a), sb(b);
    const double j = jaccard(sa, sb);
    CHECK(j == jaccard(sb, sa));
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
    CHECK(jaccard(sa, sa) == 1.0);
  }
}

TEST_CASE("routing_stability examples") {
  const auto pre = make_trace({{{0, 1}}, {{1, 2}}});
  CHECK(routing_stability(pre, pre).mean_rs == 1.0);
  const auto disjoint = make_trace({{{2, 3}}, {{0, 3}}}, "post");
  CHECK(routing_stability(pre, disjoint).rs_per_layer[0] == 0.0);
  const auto mixed = make_trace({{{0, 1}}, {{2, 3}}}, "post");
  const auto rep = routing_stability(pre, mixed);
  CHECK(rep.rs_per_layer[0] == doctest::Approx(2.0 / 3.0));
  CHECK(rep.per_query[1][0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("RS averages layers after queries and ignores query order") {
  const auto pre = make_trace({{{0}, {0}}, {{1}, {1}}, {{2}, {2}}});
  auto post = make_trace({{{0}, {1}}, {{1}, {1}}, {{0}, {2}}}, "post");
  const auto a = routing_stability(pre, post);
  CHECK(a.rs_per_layer[0] == doctest::Approx(2.0 / 3.0));
  CHECK(a.rs_per_layer[1] == doctest::Approx(2.0 / 3.0));
  CHECK(a.mean_rs == doctest::Approx(2.0 / 3.0));
  std::swap(post.query_ids[0], post.query_ids[2]);
  std::swap(post.selections[0], post.selections[2]);
  CHECK(routing_stability(pre, post).mean_rs == a.mean_rs);
}

TEST_CASE("mismatched query sets are a contract violation naming the difference") {
  const auto pre = make_trace({{{0}}, {{1}}});
  auto post = make_trace({{{0}}, {{1}}});
  post.query_ids[1] = "other";
  try {
    routing_stability(pre, post);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()).find("other") != std::string::npos);
  }
  const auto two_layers = make_trace({{{0}, {0}}, {{1}, {1}}});
  CHECK_THROWS_AS(routing_stability(pre, two_layers), ContractViolation);
}

TEST_CASE("drift is local to the layer that changed") {
  const auto pre = make_trace({{{0, 1}, {0, 1}, {0, 1}, {0, 1}}, {{2, 3}, {2, 3}, {2, 3}, {2, 3}}});
  CHECK(drift_report(pre, pre).layers[2].changed_fraction == 0.0);
  auto post = pre;
  post.selections[1][2] = {2, 0};
  const DriftReport d = drift_report(pre, post);
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(d.layers[l].changed_fraction == (l == 2 ? 0.5 : 0.0));
    CHECK(d.layers[l].mean_set_difference == (l == 2 ? 0.5 : 0.0));
  }
  CHECK_FALSE(d.rs_nonincreasing_with_depth);  // layer 4 recovers after layer 3
}

TEST_CASE("monotone drift fixture is detected as nonincreasing RS by depth") {
  std::vector<std::vector<SelectionSet>> pre_sel(8), post_sel(8);
  for (std::size_t q = 0; q < 8; ++q)
    for (std::size_t l = 0; l < 4; ++l) {
      pre_sel[q].push_back({0, 1});
      // Query q changes at layer l when q < 2l: more change deeper down.
      post_sel[q].push_back(q < 2 * l ? SelectionSet{2, 3} : SelectionSet{0, 1});
    }
  const DriftReport d = drift_report(make_trace(pre_sel), make_trace(post_sel, "post"));
  CHECK(d.rs_nonincreasing_with_depth);
  CHECK(d.layers[3].rs < d.layers[0].rs);
}

TEST_CASE("dense routing is always perfectly stable") {
  const MoENetwork a = MoENetwork::random({2, 3, 4, 3, 2}, 1);
  const MoENetwork b = MoENetwork::random({2, 3, 4, 3, 2}, 2);
  std::mt19937_64 rng(3);
  const Matrix x = oracle::random_matrix(10, 4, rng);
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("x" + std::to_string(i));
  CHECK(routing_stability(record_trace(a, x, ids, "pre"), record_trace(b, x, ids, "post")).mean_rs == 1.0);
}

TEST_CASE("trace text round trip and malformed input") {
  const MoENetwork net = MoENetwork::random({3, 5, 4, 2, 2}, 6);
  std::mt19937_64 rng(6);
  const Matrix x = oracle::random_matrix(7, 4, rng);
  std::vector<std::string> ids;
  for (int i = 0; i < 7; ++i) ids.push_back("id" + std::to_string(i));
  const SelectionTrace t = record_trace(net, x, ids, "pre");
  std::stringstream ss;
  write_trace(ss, t);
  const std::string text = ss.str();
  CHECK(text.find("id0,0,") != std::string::npos);
  const SelectionTrace back = read_trace(ss);
  CHECK(back.tag == "pre");
  CHECK(back.query_ids == t.query_ids);
  CHECK(back.selections == t.selections);

  std::istringstream bad1("q0,0,x\n");
  CHECK_THROWS_AS(read_trace(bad1), FormatError);
  std::istringstream bad2("q0,1,0\nq0,0,1\n");
  CHECK_THROWS_AS(read_trace(bad2), FormatError);
  std::istringstream bad3("q0\n");
  CHECK_THROWS_AS(read_trace(bad3), FormatError);
}
