// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grip/attack.hpp"
#include "grip/constraints.hpp"
#include "grip/enforce.hpp"
#include "grip/moe.hpp"
#include "grip/ptc.hpp"
#include "grip/routing.hpp"

namespace grip {

struct Dataset {
  Matrix inputs;  // one sample per row
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Concatenates datasets (rows and ids in argument order).
Dataset concat(const Dataset& a, const Dataset& b);

struct TaskConfig {
  std::uint64_t seed = 1;
  std::size_t dim = 32;
  std::size_t classes = 8;
  /// Dimension of the subspace the inputs live in (0 = all of ℝ^d).
  std::size_t latent_dim = 4;
  std::size_t retain_clusters = 16;
  std::size_t forget_clusters = 8;
  double cluster_radius = 0.5;
  double center_norm = 5.0;
  /// Share of each forget center along the common forget direction.
  double forget_alignment = 0.6;
  double min_separation = 4.0;  // in units of cluster_radius
  std::size_t retain_train = 64;
  std::size_t forget_train = 32;
  std::size_t retain_test = 128;
  std::size_t forget_test = 64;
};

struct SyntheticTask {
  TaskConfig config;
  Dataset retain_train, retain_test, forget_train, forget_test;
  Matrix retain_centers;  // one center per row, ambient coordinates
  Matrix forget_centers;
  double min_center_distance = 0.0;
};

/// Gaussian clusters in a random latent subspace; forget clusters sit in a
/// shared region so trained routers develop forget-specialised experts.
SyntheticTask generate_task(const TaskConfig& cfg);

struct PretrainConfig {
  std::size_t steps = 3000;
  double lr = 3e-3;
  double min_accuracy = 0.95;
  /// Stop once the mean training loss falls below this (disabled when ≤ 0).
  double target_loss = 5e-3;
  std::uint64_t init_seed = 1;
  double router_scale = 2.0;
  double expert_scale = 0.3;
};

struct PretrainResult {
  MoENetwork net;
  std::vector<double> loss_curve;
  double train_accuracy = 0.0;
  std::size_t steps_run = 0;
};

/// Thrown when a seed cannot produce a usable reference network.
class FixtureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full-batch Adam on cross-entropy over retain ∪ forget. Throws FixtureError
/// when `min_accuracy` is not reached (unless it is ≤ 0).
PretrainResult pretrain(MoENetwork net, const SyntheticTask& task, const PretrainConfig& cfg);

double accuracy(const MoENetwork& net, const Dataset& data);

struct SelectionCensus {
  // [layer][expert] fraction of samples whose selection contains the expert
  std::vector<std::vector<double>> forget_frequency;
  std::vector<std::vector<double>> retain_frequency;
  /// Some expert is picked by forget inputs at least `ratio`× as often as by retain inputs.
  bool has_forget_specialist(double ratio = 2.0) const;
};

SelectionCensus selection_census(const MoENetwork& net, const SyntheticTask& task);

enum class Objective { GD, KL, NPO, RMU };
enum class Enforcement { None, ExpertSpecific, FullNull, PTC };

std::string to_string(Objective o);
std::string to_string(Enforcement e);
Objective parse_objective(const std::string& s);
Enforcement parse_enforcement(const std::string& s);

struct UnlearnConfig {
  Objective objective = Objective::GD;
  Enforcement enforcement = Enforcement::None;
  std::size_t steps = 1000;
  double lr = 0.01;
  /// Router steps use lr·router_lr_scale.
  double router_lr_scale = 10.0;
  double expert_momentum = 0.0;
  /// Rescale the full gradient to at most this L2 norm (disabled when ≤ 0).
  double grad_clip = 1.0;
  bool clip_per_group = false;  // clip routers and other parameters separately
  double kl_weight = 1.0;
  double npo_beta = 1.0;
  double rmu_coeff = 5.0;
  double rmu_retain_weight = 1.0;
  /// Hidden state after this layer is steered (clamped to L-1).
  std::size_t rmu_layer = 1;
  double eps = 1e-2;
  bool eps_relative = false;
  double lambda = 1e-6;
  bool ptc_sequential = true;
  KaczmarzConfig kaczmarz{100, 1e-6, 25, 0, HalfspaceRows::Projected};
  /// Expert-specific mode: back off router steps that would change a cached
  /// top-k selection (see guard_cached_selections).
  bool selection_guard = true;
  /// Stop once forget-train accuracy drops to this level (disabled when < 0).
  double stop_fa = 0.2;
  bool update_routers = true;
  bool update_experts = true;
  bool update_readout = true;
  /// Record selections on the cached retain inputs after every step.
  bool track_cached_rs = false;
  std::uint64_t seed = 1;
  ForcingPolicy attack{};
};

struct ObjectiveValue {
  double loss = 0.0;
  NetworkGradients grads;
};

/// Precomputed reference-model quantities the objectives compare against.
struct ObjectiveReference {
  std::vector<Vector> retain_logits;   // reference logits on retain_train
  Vector forget_true_logprob;          // reference log p(y|x) on forget_train
  std::vector<Vector> retain_hidden;   // reference hidden state at rmu_layer
  Vector rmu_direction;                // fixed random unit vector
};

ObjectiveReference make_reference(const MoENetwork& ref_net, const SyntheticTask& task,
                                  const UnlearnConfig& cfg);

/// Loss and gradients of the configured objective. KL and NPO read the
/// reference quantities; passing none for them is a ContractViolation.
ObjectiveValue objective_grad(const MoENetwork& net, const SyntheticTask& task,
                              const UnlearnConfig& cfg, const ObjectiveReference* ref);

struct CostCounters {
  double constraint_build_flops = 0.0;
  double constraint_step_flops = 0.0;
  double ptc_flops = 0.0;
  double training_flops = 0.0;
  double build_seconds = 0.0;
  double step_seconds = 0.0;
  double enforce_seconds = 0.0;
  double correction_seconds = 0.0;
  double total_seconds = 0.0;

  double constraint_flops() const {
    return constraint_build_flops + constraint_step_flops + ptc_flops;
  }
};

struct RunReport {
  UnlearnConfig config;
  std::size_t steps_run = 0;
  bool aborted = false;
  std::string abort_reason;

  double fa_pre = 0.0, ra_pre = 0.0;
  double fa_post = 0.0, ra_post = 0.0;
  double forget_train_acc_post = 0.0;

  StabilityReport rs_eval;    // 𝒬 = retain_test ∪ forget_test
  double rs_retain = 1.0;     // held-out retain only
  double rs_forget = 1.0;     // held-out forget only
  double rs_cached = 1.0;     // retain_train vs capture-time selections
  double min_cached_rs_during_run = 1.0;
  DriftReport drift;

  AttackResult attack;
  std::vector<double> loss_curve;
  CostCounters cost;
  std::optional<PtcResult> ptc;
  std::vector<ConstraintWarning> warnings;
  std::size_t infeasible_enforcements = 0;  // steps with a row left infeasible
  std::size_t shrunk_enforcements = 0;      // steps where InfeasiblePolicy::Shrink acted
  std::size_t guard_halvings = 0;
  std::size_t guard_zeroed_layers = 0;
  std::size_t kaczmarz_projections = 0;
};

nlohmann::json to_json(const RunReport& r);
nlohmann::json to_json(const UnlearnConfig& c);
std::string csv_header();
std::string csv_row(const RunReport& r);
/// Inverse of csv_row for the fields the row carries; the rest stay default.
RunReport report_from_csv_row(const std::string& line);

struct RunOutput {
  RunReport report;
  MoENetwork net;
};

/// Optional per-step observer (stats streaming).
using StepObserver = std::function<void(std::size_t step, const ConstrainedUpdate&)>;

/// K steps of the objective with the configured enforcement, then evaluation.
RunOutput unlearn_run(const MoENetwork& pretrained, const SyntheticTask& task,
                      const RetainCache& cache, const UnlearnConfig& cfg,
                      const StepObserver& observer = {});

/// Selection trace of `net` on 𝒬 = retain_test ∪ forget_test.
SelectionTrace eval_trace(const MoENetwork& net, const SyntheticTask& task, std::string tag);

}  // namespace grip
