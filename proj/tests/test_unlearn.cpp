// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "grip/checkpoint.hpp"
#include "grip/errors.hpp"
#include "grip/experiment.hpp"
#include "oracles.hpp"

using namespace grip;

namespace {

TaskConfig tiny_task_config(std::uint64_t seed = 1) {
  TaskConfig t;
  t.seed = seed;
  t.dim = 6;
  t.classes = 3;
  t.latent_dim = 0;
  t.retain_clusters = 3;
  t.forget_clusters = 2;
  t.min_separation = 2.0;
  t.retain_train = 6;
  t.forget_train = 4;
  t.retain_test = 6;
  t.forget_test = 4;
  return t;
}

// Shared pretrained fixture at the default experiment scale.
const SeedFixture& default_fixture() {
  static const SeedFixture f = [] {
    ExperimentConfig c;
    c.shape.layers = 2;
    return prepare_seed(c, 1);
  }();
  return f;
}

UnlearnConfig short_run(Objective o, Enforcement e, std::size_t steps = 30) {
  UnlearnConfig u;
  u.objective = o;
  u.enforcement = e;
  u.steps = steps;
  u.stop_fa = -1.0;
  return u;
}

}  // namespace

TEST_CASE("task generation is deterministic and separated") {
  TaskConfig cfg;
  cfg.seed = 3;
  const SyntheticTask a = generate_task(cfg);
  const SyntheticTask b = generate_task(cfg);
  CHECK(a.retain_train.inputs == b.retain_train.inputs);
  CHECK(a.forget_test.labels == b.forget_test.labels);
  CHECK(a.retain_train.size() == cfg.retain_train);
  CHECK(a.forget_test.size() == cfg.forget_test);
  CHECK(a.min_center_distance >= cfg.min_separation * cfg.cluster_radius);
  for (int y : a.forget_train.labels) CHECK((y >= 0 && y < static_cast<int>(cfg.classes)));
  cfg.seed = 4;
  CHECK_FALSE(generate_task(cfg).retain_train.inputs == a.retain_train.inputs);

  TaskConfig crowded = tiny_task_config();
  crowded.min_separation = 1e6;
  CHECK_THROWS_AS(generate_task(crowded), ContractViolation);
}

TEST_CASE("pretrained fixture is accurate and has a forget specialist") {
  const SeedFixture& f = default_fixture();
  CHECK(f.pretrained.train_accuracy >= 0.95);
  CHECK(accuracy(f.pretrained.net, f.task.forget_test) >= 0.9);
  CHECK(selection_census(f.pretrained.net, f.task).has_forget_specialist());
  CHECK(f.cache.samples == f.task.retain_train.size());
}

TEST_CASE("pretraining loss does not rise across 100-step windows") {
  PretrainConfig pc;
  pc.steps = 400;
  pc.target_loss = 0.0;
  pc.min_accuracy = 0.0;
  const SyntheticTask task = generate_task(tiny_task_config(3));
  const auto curve = pretrain(MoENetwork::random({2, 3, 6, 2, 3}, 3), task, pc).loss_curve;
  REQUIRE(curve.size() == 400);
  double prev = 1e300;
  for (std::size_t w = 0; w + 100 <= curve.size(); w += 100) {
    double mean = 0.0;
    for (std::size_t i = w; i < w + 100; ++i) mean += curve[i] / 100.0;
    CHECK(mean <= prev);
    prev = mean;
  }
}

TEST_CASE("objective values at the reference point") {
  const SyntheticTask task = generate_task(tiny_task_config());
  const MoENetwork net = MoENetwork::random({2, 3, 6, 2, 3}, 5);
  for (double beta : {0.5, 1.0, 2.0}) {
    UnlearnConfig u;
    u.objective = Objective::NPO;
    u.npo_beta = beta;
    const ObjectiveReference ref = make_reference(net, task, u);
    CHECK(objective_grad(net, task, u, &ref).loss == doctest::Approx(2.0 / beta * std::log(2.0)).epsilon(1e-12));
  }
  UnlearnConfig kl;
  kl.objective = Objective::KL;
  CHECK_THROWS_AS(objective_grad(net, task, kl, nullptr), ContractViolation);
}

TEST_CASE("objective gradients match finite differences") {
  const SyntheticTask task = generate_task(tiny_task_config(2));
  for (Objective o : {Objective::GD, Objective::KL, Objective::NPO, Objective::RMU}) {
    const MoENetwork ref_net = MoENetwork::random({2, 3, 6, 2, 3}, 7, 1.0, 0.5);
    MoENetwork net = ref_net;
    std::mt19937_64 rng(8);
    for (auto& l : net.layers) l.router.theta += oracle::random_matrix(3, 6, rng, 0.01);
    UnlearnConfig u;
    u.objective = o;
    u.rmu_layer = 0;
    const ObjectiveReference ref = make_reference(ref_net, task, u);
    const ObjectiveValue v = objective_grad(net, task, u, &ref);
    auto loss = [&] { return objective_grad(net, task, u, &ref).loss; };
    double worst = 0.0, scale = 0.0;
    auto check = [&](double* p, double an) {
      worst = std::max(worst, std::abs(oracle::central_difference(p, loss, 1e-5) - an));
      scale = std::max(scale, std::abs(an));
    };
    for (std::size_t i = 0; i < net.readout.weight.size(); ++i)
      check(&net.readout.weight.data()[i], v.grads.readout_weight.data()[i]);
    for (std::size_t i = 0; i < 6; ++i) check(&net.layers[0].experts[1].bias[i], v.grads.expert_bias[0][1][i]);
    for (std::size_t i = 0; i < net.layers[0].router.theta.size(); ++i)
      check(&net.layers[0].router.theta.data()[i], v.grads.router[0].data()[i]);
    INFO("objective " << to_string(o));
    CHECK(worst <= 1e-4 * std::max(scale, 1e-8));
  }
}

TEST_CASE("zero steps leave the network unchanged") {
  const SeedFixture& f = default_fixture();
  const RunOutput out = unlearn_run(f.pretrained.net, f.task, f.cache, short_run(Objective::GD, Enforcement::None, 0));
  CHECK(encode_checkpoint(out.net) == encode_checkpoint(f.pretrained.net));
  CHECK(out.report.steps_run == 0);
  CHECK(out.report.rs_eval.mean_rs == 1.0);
  CHECK(out.report.fa_post == out.report.fa_pre);
}

TEST_CASE("gradient ascent lowers forget accuracy and shifts routing") {
  const SeedFixture& f = default_fixture();
  const RunOutput out = unlearn_run(f.pretrained.net, f.task, f.cache, short_run(Objective::GD, Enforcement::None, 300));
  CHECK(out.report.fa_post < out.report.fa_pre);
  CHECK(out.report.rs_eval.mean_rs < 1.0);
  CHECK(out.report.loss_curve.size() == 300);
}

TEST_CASE("runs are reproducible and round-trip through csv") {
  const SeedFixture& f = default_fixture();
  const UnlearnConfig u = short_run(Objective::KL, Enforcement::ExpertSpecific, 20);
  const RunOutput a = unlearn_run(f.pretrained.net, f.task, f.cache, u);
  const RunOutput b = unlearn_run(f.pretrained.net, f.task, f.cache, u);
  CHECK(encode_checkpoint(a.net) == encode_checkpoint(b.net));
  CHECK(a.report.loss_curve == b.report.loss_curve);
  CHECK(a.report.attack.vulnerability == b.report.attack.vulnerability);

  const RunReport back = report_from_csv_row(csv_row(a.report));
  CHECK(csv_row(back) == csv_row(a.report));
  CHECK(back.config.objective == Objective::KL);
  CHECK_THROWS_AS(report_from_csv_row("gd,none,1"), FormatError);
  CHECK(to_json(a.report).contains("rs"));
}

TEST_CASE("constrained modes keep cached retain routing in the frozen single-layer regime") {
  ExperimentConfig c;
  c.shape.layers = 1;
  const SeedFixture f = prepare_seed(c, 2);
  for (Enforcement e : {Enforcement::ExpertSpecific, Enforcement::FullNull}) {
    UnlearnConfig u = short_run(Objective::GD, e, 100);
    u.update_experts = false;
    u.update_readout = false;
    u.track_cached_rs = true;
    const RunReport r = unlearn_run(f.pretrained.net, f.task, f.cache, u).report;
    INFO(to_string(e));
    CHECK(r.min_cached_rs_during_run == 1.0);
    CHECK(r.rs_cached == 1.0);
  }
}

TEST_CASE("ptc restores cached retain selections") {
  const SeedFixture& f = default_fixture();
  const RunReport r = unlearn_run(f.pretrained.net, f.task, f.cache, short_run(Objective::GD, Enforcement::PTC, 100)).report;
  REQUIRE(r.ptc.has_value());
  CHECK(r.rs_cached >= 0.99);
  CHECK(r.cost.ptc_flops > 0.0);
}

TEST_CASE("parse helpers") {
  for (auto o : {Objective::GD, Objective::KL, Objective::NPO, Objective::RMU}) CHECK(parse_objective(to_string(o)) == o);
  for (auto e : {Enforcement::None, Enforcement::ExpertSpecific, Enforcement::FullNull, Enforcement::PTC})
    CHECK(parse_enforcement(to_string(e)) == e);
  CHECK_THROWS_AS(parse_objective("sgd"), ContractViolation);
}
