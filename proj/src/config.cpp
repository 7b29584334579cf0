// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/config.hpp"

#include <fstream>
#include <set>

#include "grip/errors.hpp"

namespace grip {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw FormatError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.contains(key)) throw FormatError("config: unknown key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

}  // namespace

TaskConfig ExperimentConfig::task_for(std::uint64_t seed) const {
  TaskConfig t = task;
  t.seed = seed;
  t.dim = shape.dim;
  t.classes = shape.classes;
  return t;
}

PretrainConfig ExperimentConfig::pretrain_for(std::uint64_t seed) const {
  PretrainConfig p = pretrain;
  p.init_seed = seed * 7919 + 17;
  return p;
}

UnlearnConfig ExperimentConfig::unlearn_for(std::uint64_t seed) const {
  UnlearnConfig u = unlearn;
  u.seed = seed;
  return u;
}

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j, "", {"seeds", "output_dir", "threads", "model", "task", "pretrain", "unlearn", "attack"});
  ExperimentConfig c;
  read(j, "seeds", c.seeds, "");
  std::string out_dir = c.output_dir.string();
  read(j, "output_dir", out_dir, "");
  c.output_dir = out_dir;
  read(j, "threads", c.threads, "");

  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, "model", {"layers", "experts", "dim", "k", "classes"});
    read(m, "layers", c.shape.layers, "model");
    read(m, "experts", c.shape.experts, "model");
    read(m, "dim", c.shape.dim, "model");
    read(m, "k", c.shape.k, "model");
    read(m, "classes", c.shape.classes, "model");
  }
  if (j.contains("task")) {
    const json& t = j["task"];
    reject_unknown(t, "task", {"latent_dim", "retain_clusters", "forget_clusters", "cluster_radius",
                               "center_norm", "forget_alignment", "min_separation", "retain_train",
                               "forget_train", "retain_test", "forget_test"});
    read(t, "latent_dim", c.task.latent_dim, "task");
    read(t, "retain_clusters", c.task.retain_clusters, "task");
    read(t, "forget_clusters", c.task.forget_clusters, "task");
    read(t, "cluster_radius", c.task.cluster_radius, "task");
    read(t, "center_norm", c.task.center_norm, "task");
    read(t, "forget_alignment", c.task.forget_alignment, "task");
    read(t, "min_separation", c.task.min_separation, "task");
    read(t, "retain_train", c.task.retain_train, "task");
    read(t, "forget_train", c.task.forget_train, "task");
    read(t, "retain_test", c.task.retain_test, "task");
    read(t, "forget_test", c.task.forget_test, "task");
  }
  if (j.contains("pretrain")) {
    const json& p = j["pretrain"];
    reject_unknown(p, "pretrain", {"steps", "lr", "min_accuracy", "target_loss", "router_scale", "expert_scale"});
    read(p, "steps", c.pretrain.steps, "pretrain");
    read(p, "lr", c.pretrain.lr, "pretrain");
    read(p, "min_accuracy", c.pretrain.min_accuracy, "pretrain");
    read(p, "target_loss", c.pretrain.target_loss, "pretrain");
    read(p, "router_scale", c.pretrain.router_scale, "pretrain");
    read(p, "expert_scale", c.pretrain.expert_scale, "pretrain");
  }
  if (j.contains("unlearn")) {
    const json& u = j["unlearn"];
    reject_unknown(u, "unlearn",
                   {"objective", "enforcement", "steps", "lr", "router_lr_scale", "expert_momentum", "grad_clip", "clip_per_group", "kl_weight",
                    "npo_beta", "rmu_coeff", "rmu_retain_weight", "rmu_layer", "eps", "eps_relative",
                    "lambda", "ptc_sequential", "k_max", "budget_per_violation", "on_infeasible", "selection_guard", "margin_slack", "check_every",
                    "halfspace_rows", "stop_fa", "update_routers", "update_experts", "update_readout"});
    UnlearnConfig& x = c.unlearn;
    std::string s;
    if (u.contains("objective")) {
      read(u, "objective", s, "unlearn");
      x.objective = parse_objective(s);
    }
    if (u.contains("enforcement")) {
      read(u, "enforcement", s, "unlearn");
      x.enforcement = parse_enforcement(s);
    }
    read(u, "steps", x.steps, "unlearn");
    read(u, "lr", x.lr, "unlearn");
    read(u, "router_lr_scale", x.router_lr_scale, "unlearn");
    read(u, "expert_momentum", x.expert_momentum, "unlearn");
    read(u, "grad_clip", x.grad_clip, "unlearn");
    read(u, "clip_per_group", x.clip_per_group, "unlearn");
    read(u, "kl_weight", x.kl_weight, "unlearn");
    read(u, "npo_beta", x.npo_beta, "unlearn");
    read(u, "rmu_coeff", x.rmu_coeff, "unlearn");
    read(u, "rmu_retain_weight", x.rmu_retain_weight, "unlearn");
    read(u, "rmu_layer", x.rmu_layer, "unlearn");
    read(u, "eps", x.eps, "unlearn");
    read(u, "eps_relative", x.eps_relative, "unlearn");
    read(u, "lambda", x.lambda, "unlearn");
    read(u, "ptc_sequential", x.ptc_sequential, "unlearn");
    read(u, "k_max", x.kaczmarz.k_max, "unlearn");
    read(u, "budget_per_violation", x.kaczmarz.budget_per_violation, "unlearn");
    read(u, "selection_guard", x.selection_guard, "unlearn");
    read(u, "margin_slack", x.kaczmarz.margin_slack, "unlearn");
    read(u, "check_every", x.kaczmarz.check_every, "unlearn");
    if (u.contains("halfspace_rows")) {
      read(u, "halfspace_rows", s, "unlearn");
      if (s == "ambient") x.kaczmarz.rows = HalfspaceRows::Ambient;
      else if (s == "projected") x.kaczmarz.rows = HalfspaceRows::Projected;
      else throw ContractViolation("config: halfspace_rows must be 'ambient' or 'projected'");
    }
    if (u.contains("on_infeasible")) {
      read(u, "on_infeasible", s, "unlearn");
      if (s == "accept") x.kaczmarz.on_infeasible = InfeasiblePolicy::Accept;
      else if (s == "shrink") x.kaczmarz.on_infeasible = InfeasiblePolicy::Shrink;
      else throw ContractViolation("config: on_infeasible must be 'accept' or 'shrink'");
    }
    read(u, "stop_fa", x.stop_fa, "unlearn");
    read(u, "update_routers", x.update_routers, "unlearn");
    read(u, "update_experts", x.update_experts, "unlearn");
    read(u, "update_readout", x.update_readout, "unlearn");
  }
  if (j.contains("attack")) {
    const json& a = j["attack"];
    reject_unknown(a, "attack", {"policy", "m", "best_of"});
    std::string s;
    if (a.contains("policy")) {
      read(a, "policy", s, "attack");
      c.unlearn.attack.mode = parse_forcing_mode(s);
    }
    read(a, "m", c.unlearn.attack.m, "attack");
    read(a, "best_of", c.unlearn.attack.best_of, "attack");
  }

  GRIP_REQUIRE(!c.seeds.empty(), "config: at least one seed is required");
  GRIP_REQUIRE(c.threads >= 0, "config: threads must be >= 0");
  GRIP_REQUIRE(c.shape.layers >= 1 && c.shape.experts >= 2 && c.shape.dim >= 1 && c.shape.classes >= 2,
               "config: model needs layers >= 1, experts >= 2, dim >= 1, classes >= 2");
  GRIP_REQUIRE(c.shape.k >= 1 && c.shape.k < c.shape.experts, "config: need 1 <= k < experts");
  GRIP_REQUIRE(c.unlearn.router_lr_scale > 0.0, "config: router_lr_scale must be positive");
  GRIP_REQUIRE(c.unlearn.eps >= 0.0 && c.unlearn.lambda > 0.0 && c.unlearn.lr > 0.0,
               "config: need eps >= 0, lambda > 0, lr > 0");
  GRIP_REQUIRE(c.unlearn.kaczmarz.check_every >= 1, "config: check_every must be >= 1");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  const TaskConfig& t = c.task;
  const PretrainConfig& p = c.pretrain;
  json u = to_json(c.unlearn);
  json attack = u["attack"];
  u.erase("attack");
  u.erase("seed");
  return {{"seeds", c.seeds},
          {"output_dir", c.output_dir.string()},
          {"threads", c.threads},
          {"model",
           {{"layers", c.shape.layers},
            {"experts", c.shape.experts},
            {"dim", c.shape.dim},
            {"k", c.shape.k},
            {"classes", c.shape.classes}}},
          {"task",
           {{"latent_dim", t.latent_dim},
            {"retain_clusters", t.retain_clusters},
            {"forget_clusters", t.forget_clusters},
            {"cluster_radius", t.cluster_radius},
            {"center_norm", t.center_norm},
            {"forget_alignment", t.forget_alignment},
            {"min_separation", t.min_separation},
            {"retain_train", t.retain_train},
            {"forget_train", t.forget_train},
            {"retain_test", t.retain_test},
            {"forget_test", t.forget_test}}},
          {"pretrain",
           {{"steps", p.steps},
            {"lr", p.lr},
            {"min_accuracy", p.min_accuracy},
            {"target_loss", p.target_loss},
            {"router_scale", p.router_scale},
            {"expert_scale", p.expert_scale}}},
          {"unlearn", u},
          {"attack", attack}};
}

}  // namespace grip
