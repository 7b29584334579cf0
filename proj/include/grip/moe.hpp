// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "grip/matrix.hpp"

namespace grip {

/// Sorted set of expert indices chosen by a router.
class SelectionSet {
 public:
  SelectionSet() = default;
  /// Sorts and validates uniqueness.
  explicit SelectionSet(std::vector<std::uint32_t> indices);
  SelectionSet(std::initializer_list<std::uint32_t> indices)
      : SelectionSet(std::vector<std::uint32_t>(indices)) {}

  const std::vector<std::uint32_t>& indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(std::uint32_t e) const noexcept;
  auto begin() const noexcept { return indices_.begin(); }
  auto end() const noexcept { return indices_.end(); }

  friend bool operator==(const SelectionSet&, const SelectionSet&) = default;

 private:
  std::vector<std::uint32_t> indices_;
};

struct RouterParams {
  Matrix theta;  // E×d, one row per expert
};

/// Affine expert map x ↦ W x + b on ℝ^d.
struct ExpertParams {
  Matrix weight;  // d×d
  Vector bias;    // d
};

struct MoELayer {
  RouterParams router;
  std::vector<ExpertParams> experts;
  std::size_t k = 1;

  std::size_t num_experts() const noexcept { return experts.size(); }
  std::size_t dim() const noexcept { return router.theta.cols(); }
};

struct Readout {
  Matrix weight;  // C×d
  Vector bias;    // C
};

struct NetworkShape {
  std::size_t layers = 4;
  std::size_t experts = 8;
  std::size_t dim = 32;
  std::size_t k = 2;
  std::size_t classes = 8;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Stack of residual MoE layers followed by a linear class readout.
struct MoENetwork {
  std::vector<MoELayer> layers;
  Readout readout;

  NetworkShape shape() const;
  /// Throws ContractViolation if dimensions are inconsistent or non-finite.
  void validate() const;

  /// Gaussian initialisation, deterministic in `seed`.
  static MoENetwork random(const NetworkShape& shape, std::uint64_t seed, double router_scale = 1.0,
                           double expert_scale = 0.3);
};

Vector route_scores(const MoELayer& layer, std::span<const double> x);
/// Indices of the k largest scores; ties resolve to the lower index.
SelectionSet topk_select(std::span<const double> scores, std::size_t k);
/// Softmax over `scores` restricted to `selection`, aligned with selection order.
Vector selection_weights(std::span<const double> scores, const SelectionSet& selection);

struct LayerOutput {
  Vector y;
  SelectionSet selection;
  Vector scores;
};

LayerOutput moe_forward(const MoELayer& layer, std::span<const double> x);

/// Optional hook that replaces a layer's natural selection (expert forcing).
using SelectionOverride =
    std::function<SelectionSet(std::size_t layer, std::span<const double> scores,
                               const SelectionSet& natural)>;

/// Everything backward() needs from one forward pass.
struct Tape {
  std::vector<Vector> inputs;  // pre-router representation per layer, plus final hidden state
  std::vector<Vector> scores;
  std::vector<SelectionSet> selections;
  std::vector<Vector> weights;                     // softmax weights, selection order
  std::vector<std::vector<Vector>> expert_outputs;  // selection order
  Vector logits;

  const Vector& hidden(std::size_t layer) const { return inputs[layer]; }
  const Vector& final_hidden() const { return inputs.back(); }
};

Tape forward_tape(const MoENetwork& net, std::span<const double> x,
                  const SelectionOverride& override_fn = {});

struct ForwardResult {
  Vector logits;
  std::vector<SelectionSet> selections;
  std::vector<Vector> scores;
};

ForwardResult network_forward(const MoENetwork& net, std::span<const double> x);

/// Gradient container mirroring the network's parameters.
struct NetworkGradients {
  std::vector<Matrix> router;                     // per layer, E×d
  std::vector<std::vector<Matrix>> expert_weight;  // per layer, per expert, d×d
  std::vector<std::vector<Vector>> expert_bias;
  Matrix readout_weight;
  Vector readout_bias;

  static NetworkGradients zeros_like(const MoENetwork& net);
  NetworkGradients& operator+=(const NetworkGradients& other);
  NetworkGradients& operator*=(double s);
  double max_abs() const;
};

/// Reverse-mode pass for one sample. `dlogits` is ∂loss/∂logits. `hidden_grads`,
/// when non-empty, adds ∂loss/∂h at the output of each layer (size L, entries may
/// be empty). Top-k membership is held constant; gradients flow through the
/// softmax weights of the selected experts only.
void backward(const MoENetwork& net, const Tape& tape, std::span<const double> dlogits,
              std::span<const Vector> hidden_grads, NetworkGradients& grads);

/// Per-sample loss hook for batch_gradients. Fills dlogits (and optionally
/// hidden_grads, size L) and returns the loss contribution.
using SampleLoss = std::function<double(std::size_t sample, const Tape& tape, Vector& dlogits,
                                        std::vector<Vector>& hidden_grads)>;

struct BatchGradients {
  double loss = 0.0;
  NetworkGradients grads;
};

/// Sum of per-sample losses and gradients over the rows of `inputs`. Samples
/// are split into a fixed number of chunks evaluated in parallel and reduced
/// in chunk order, so results do not depend on the thread count.
BatchGradients batch_gradients(const MoENetwork& net, const Matrix& inputs, const SampleLoss& loss);

/// Applies net -= lr * grads to the selected parameter groups.
struct UpdateMask {
  bool routers = true;
  bool experts = true;
  bool readout = true;
};
void apply_update(MoENetwork& net, const NetworkGradients& grads, double lr, UpdateMask mask = {});

/// Floating-point operations of one forward pass (used for cost accounting).
double forward_cost(const NetworkShape& shape);

// Cross-entropy helpers shared by training and unlearning objectives.
Vector log_softmax(std::span<const double> logits);
Vector softmax(std::span<const double> logits);
std::size_t argmax(std::span<const double> v);

}  // namespace grip
