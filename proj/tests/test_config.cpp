// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "grip/config.hpp"
#include "grip/errors.hpp"

using namespace grip;
using nlohmann::json;

TEST_CASE("empty config gives defaults") {
  const ExperimentConfig c = parse_config(json::object());
  CHECK(c.seeds == std::vector<std::uint64_t>{1});
  CHECK(c.shape == NetworkShape{});
  CHECK(c.unlearn.eps == 1e-2);
  CHECK(c.unlearn.kaczmarz.rows == HalfspaceRows::Projected);
  CHECK(c.unlearn.selection_guard);
}

TEST_CASE("keys are parsed into every section") {
  const json j = json::parse(R"({
    "seeds": [3, 4], "output_dir": "out", "threads": 2,
    "model": {"layers": 2, "experts": 4, "dim": 8, "k": 1, "classes": 3},
    "task": {"latent_dim": 0, "retain_train": 10},
    "pretrain": {"steps": 7},
    "unlearn": {"objective": "npo", "enforcement": "ptc", "k_max": 9, "on_infeasible": "shrink",
                "halfspace_rows": "ambient", "eps_relative": true, "selection_guard": false},
    "attack": {"policy": "top_m_nonselected", "m": 2, "best_of": true}
  })");
  const ExperimentConfig c = parse_config(j);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.output_dir == "out");
  CHECK(c.shape.experts == 4);
  CHECK(c.task.latent_dim == 0);
  CHECK(c.pretrain.steps == 7);
  CHECK(c.unlearn.objective == Objective::NPO);
  CHECK(c.unlearn.enforcement == Enforcement::PTC);
  CHECK(c.unlearn.kaczmarz.k_max == 9);
  CHECK(c.unlearn.kaczmarz.on_infeasible == InfeasiblePolicy::Shrink);
  CHECK(c.unlearn.kaczmarz.rows == HalfspaceRows::Ambient);
  CHECK(c.unlearn.eps_relative);
  CHECK_FALSE(c.unlearn.selection_guard);
  CHECK(c.unlearn.attack.mode == ForcingMode::TopMNonselected);
  CHECK(c.unlearn.attack.best_of);

  const TaskConfig t = c.task_for(4);
  CHECK(t.seed == 4);
  CHECK(t.dim == 8);
  CHECK(t.classes == 3);
  CHECK(c.unlearn_for(4).seed == 4);

  const ExperimentConfig back = parse_config(to_json(c));
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("malformed configs are rejected") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"bogus": 1})")), FormatError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"unlearn": {"stepz": 1}})")), FormatError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"model": {"layers": "two"}})")), FormatError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"unlearn": {"on_infeasible": "maybe"}})")), ContractViolation);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"model": {"k": 9}})")), ContractViolation);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"seeds": []})")), ContractViolation);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), std::runtime_error);
}
