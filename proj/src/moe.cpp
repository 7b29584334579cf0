// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "grip/errors.hpp"

namespace grip {

SelectionSet::SelectionSet(std::vector<std::uint32_t> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  GRIP_REQUIRE(std::adjacent_find(indices_.begin(), indices_.end()) == indices_.end(),
               "SelectionSet: duplicate expert index");
}

bool SelectionSet::contains(std::uint32_t e) const noexcept {
  return std::binary_search(indices_.begin(), indices_.end(), e);
}

NetworkShape MoENetwork::shape() const {
  NetworkShape s;
  s.layers = layers.size();
  s.classes = readout.weight.rows();
  s.dim = readout.weight.cols();
  if (!layers.empty()) {
    s.experts = layers.front().num_experts();
    s.k = layers.front().k;
  } else {
    s.experts = 0;
    s.k = 0;
  }
  return s;
}

void MoENetwork::validate() const {
  const std::size_t d = readout.weight.cols();
  GRIP_REQUIRE(readout.bias.size() == readout.weight.rows(), "network: readout bias size");
  for (const auto& layer : layers) {
    const std::size_t e = layer.num_experts();
    GRIP_REQUIRE(e >= 2, "network: a layer needs at least two experts");
    GRIP_REQUIRE(layer.k >= 1 && layer.k <= e, "network: k must lie in [1, E]");
    GRIP_REQUIRE(layer.router.theta.rows() == e && layer.router.theta.cols() == d,
                 "network: router shape must be E×d");
    GRIP_REQUIRE(layer.router.theta.all_finite(), "network: non-finite router");
    for (const auto& ex : layer.experts) {
      GRIP_REQUIRE(ex.weight.rows() == d && ex.weight.cols() == d && ex.bias.size() == d,
                   "network: expert shape must be d×d plus d");
      GRIP_REQUIRE(ex.weight.all_finite(), "network: non-finite expert weight");
    }
  }
}

MoENetwork MoENetwork::random(const NetworkShape& shape, std::uint64_t seed, double router_scale,
                              double expert_scale) {
  GRIP_REQUIRE(shape.dim > 0 && shape.classes > 0, "network: empty shape");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(shape.dim));
  auto fill = [&](Matrix& m, double scale) {
    for (double& v : m.data()) v = scale * gauss(rng);
  };

  MoENetwork net;
  net.layers.resize(shape.layers);
  for (auto& layer : net.layers) {
    layer.k = shape.k;
    layer.router.theta = Matrix(shape.experts, shape.dim);
    fill(layer.router.theta, router_scale * inv_sqrt_d);
    layer.experts.resize(shape.experts);
    for (auto& ex : layer.experts) {
      ex.weight = Matrix(shape.dim, shape.dim);
      fill(ex.weight, expert_scale * inv_sqrt_d);
      ex.bias.assign(shape.dim, 0.0);
    }
  }
  net.readout.weight = Matrix(shape.classes, shape.dim);
  fill(net.readout.weight, inv_sqrt_d);
  net.readout.bias.assign(shape.classes, 0.0);
  net.validate();
  return net;
}

Vector route_scores(const MoELayer& layer, std::span<const double> x) {
  GRIP_REQUIRE(x.size() == layer.dim(), "route_scores: input dimension mismatch");
  return matvec(layer.router.theta, x);
}

SelectionSet topk_select(std::span<const double> scores, std::size_t k) {
  GRIP_REQUIRE(k >= 1 && k <= scores.size(), "topk_select: k must lie in [1, E]");
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(k);
  return SelectionSet(std::move(order));
}

Vector selection_weights(std::span<const double> scores, const SelectionSet& selection) {
  Vector w;
  w.reserve(selection.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (auto j : selection) mx = std::max(mx, scores[j]);
  double total = 0.0;
  for (auto j : selection) {
    w.push_back(std::exp(scores[j] - mx));
    total += w.back();
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

Vector expert_apply(const ExpertParams& ex, std::span<const double> x) {
  Vector u = matvec(ex.weight, x);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += ex.bias[i];
  return u;
}

}  // namespace

LayerOutput moe_forward(const MoELayer& layer, std::span<const double> x) {
  LayerOutput out;
  out.scores = route_scores(layer, x);
  out.selection = topk_select(out.scores, layer.k);
  const Vector w = selection_weights(out.scores, out.selection);
  out.y.assign(x.size(), 0.0);
  std::size_t a = 0;
  for (auto j : out.selection) {
    axpy(w[a++], expert_apply(layer.experts[j], x), out.y);
  }
  return out;
}

Tape forward_tape(const MoENetwork& net, std::span<const double> x,
                  const SelectionOverride& override_fn) {
  GRIP_REQUIRE(x.size() == net.readout.weight.cols(), "network_forward: input dimension mismatch");
  const std::size_t layers = net.layers.size();
  Tape tape;
  tape.inputs.reserve(layers + 1);
  tape.scores.reserve(layers);
  tape.selections.reserve(layers);
  tape.weights.reserve(layers);
  tape.expert_outputs.reserve(layers);

  Vector h(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const MoELayer& layer = net.layers[l];
    Vector s = route_scores(layer, h);
    SelectionSet sel = topk_select(s, layer.k);
    if (override_fn) sel = override_fn(l, s, sel);
    Vector w = selection_weights(s, sel);
    std::vector<Vector> outs;
    outs.reserve(sel.size());
    Vector next = h;
    std::size_t a = 0;
    for (auto j : sel) {
      GRIP_REQUIRE(j < layer.num_experts(), "network_forward: selection index out of range");
      outs.push_back(expert_apply(layer.experts[j], h));
      axpy(w[a++], outs.back(), next);
    }
    tape.inputs.push_back(std::move(h));
    tape.scores.push_back(std::move(s));
    tape.selections.push_back(std::move(sel));
    tape.weights.push_back(std::move(w));
    tape.expert_outputs.push_back(std::move(outs));
    h = std::move(next);
  }
  tape.logits = matvec(net.readout.weight, h);
  for (std::size_t c = 0; c < tape.logits.size(); ++c) tape.logits[c] += net.readout.bias[c];
  tape.inputs.push_back(std::move(h));
  return tape;
}

ForwardResult network_forward(const MoENetwork& net, std::span<const double> x) {
  Tape tape = forward_tape(net, x);
  return {std::move(tape.logits), std::move(tape.selections), std::move(tape.scores)};
}

NetworkGradients NetworkGradients::zeros_like(const MoENetwork& net) {
  NetworkGradients g;
  for (const auto& layer : net.layers) {
    g.router.emplace_back(layer.router.theta.rows(), layer.router.theta.cols());
    std::vector<Matrix> ws;
    std::vector<Vector> bs;
    for (const auto& ex : layer.experts) {
      ws.emplace_back(ex.weight.rows(), ex.weight.cols());
      bs.emplace_back(ex.bias.size(), 0.0);
    }
    g.expert_weight.push_back(std::move(ws));
    g.expert_bias.push_back(std::move(bs));
  }
  g.readout_weight = Matrix(net.readout.weight.rows(), net.readout.weight.cols());
  g.readout_bias.assign(net.readout.bias.size(), 0.0);
  return g;
}

NetworkGradients& NetworkGradients::operator+=(const NetworkGradients& o) {
  for (std::size_t l = 0; l < router.size(); ++l) {
    router[l] += o.router[l];
    for (std::size_t j = 0; j < expert_weight[l].size(); ++j) {
      expert_weight[l][j] += o.expert_weight[l][j];
      axpy(1.0, o.expert_bias[l][j], expert_bias[l][j]);
    }
  }
  readout_weight += o.readout_weight;
  axpy(1.0, o.readout_bias, readout_bias);
  return *this;
}

NetworkGradients& NetworkGradients::operator*=(double s) {
  for (std::size_t l = 0; l < router.size(); ++l) {
    router[l] *= s;
    for (std::size_t j = 0; j < expert_weight[l].size(); ++j) {
      expert_weight[l][j] *= s;
      for (double& v : expert_bias[l][j]) v *= s;
    }
  }
  readout_weight *= s;
  for (double& v : readout_bias) v *= s;
  return *this;
}

double NetworkGradients::max_abs() const {
  double m = grip::max_abs(readout_weight);
  for (double v : readout_bias) m = std::max(m, std::abs(v));
  for (std::size_t l = 0; l < router.size(); ++l) {
    m = std::max(m, grip::max_abs(router[l]));
    for (std::size_t j = 0; j < expert_weight[l].size(); ++j) {
      m = std::max(m, grip::max_abs(expert_weight[l][j]));
      for (double v : expert_bias[l][j]) m = std::max(m, std::abs(v));
    }
  }
  return m;
}

namespace {

// m += scale · g hᵀ
void add_outer(Matrix& m, double scale, std::span<const double> g, std::span<const double> h) {
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = scale * g[r];
    if (gr == 0.0) continue;
    auto mr = m.row(r);
    for (std::size_t c = 0; c < h.size(); ++c) mr[c] += gr * h[c];
  }
}

}  // namespace

void backward(const MoENetwork& net, const Tape& tape, std::span<const double> dlogits,
              std::span<const Vector> hidden_grads, NetworkGradients& grads) {
  const std::size_t layers = net.layers.size();
  GRIP_REQUIRE(dlogits.size() == net.readout.weight.rows(), "backward: dlogits size mismatch");
  GRIP_REQUIRE(hidden_grads.empty() || hidden_grads.size() == layers,
               "backward: hidden_grads must be empty or one entry per layer");

  const Vector& top = tape.final_hidden();
  add_outer(grads.readout_weight, 1.0, dlogits, top);
  axpy(1.0, dlogits, grads.readout_bias);
  Vector gh = matvec_transposed(net.readout.weight, dlogits);

  for (std::size_t l = layers; l-- > 0;) {
    if (!hidden_grads.empty() && !hidden_grads[l].empty()) axpy(1.0, hidden_grads[l], gh);
    const MoELayer& layer = net.layers[l];
    const Vector& h = tape.inputs[l];
    const SelectionSet& sel = tape.selections[l];
    const Vector& w = tape.weights[l];
    const auto& outs = tape.expert_outputs[l];

    Vector dh = gh;  // residual path
    Vector dw(sel.size());
    std::size_t a = 0;
    for (auto j : sel) {
      const ExpertParams& ex = layer.experts[j];
      add_outer(grads.expert_weight[l][j], w[a], gh, h);
      axpy(w[a], gh, grads.expert_bias[l][j]);
      const Vector back = matvec_transposed(ex.weight, gh);
      axpy(w[a], back, dh);
      dw[a] = dot(gh, outs[a]);
      ++a;
    }
    double mean = 0.0;
    for (std::size_t b = 0; b < sel.size(); ++b) mean += w[b] * dw[b];
    a = 0;
    for (auto j : sel) {
      const double ds = w[a] * (dw[a] - mean);
      ++a;
      if (ds == 0.0) continue;
      axpy(ds, h, grads.router[l].row(j));
      axpy(ds, layer.router.theta.row(j), dh);
    }
    gh = std::move(dh);
  }
}

BatchGradients batch_gradients(const MoENetwork& net, const Matrix& inputs,
                               const SampleLoss& loss) {
  constexpr std::size_t kChunks = 8;
  const std::size_t n = inputs.rows();
  const std::size_t chunks = std::max<std::size_t>(1, std::min(kChunks, n));
  std::vector<BatchGradients> partial(chunks);
  for (auto& p : partial) p.grads = NetworkGradients::zeros_like(net);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(chunks); ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    const std::size_t lo = n * c / chunks;
    const std::size_t hi = n * (c + 1) / chunks;
    Vector dlogits;
    std::vector<Vector> hidden;
    for (std::size_t i = lo; i < hi; ++i) {
      const Tape tape = forward_tape(net, inputs.row(i));
      dlogits.assign(tape.logits.size(), 0.0);
      hidden.clear();
      partial[c].loss += loss(i, tape, dlogits, hidden);
      backward(net, tape, dlogits, hidden, partial[c].grads);
    }
  }

  BatchGradients out = std::move(partial.front());
  for (std::size_t c = 1; c < chunks; ++c) {
    out.loss += partial[c].loss;
    out.grads += partial[c].grads;
  }
  return out;
}

void apply_update(MoENetwork& net, const NetworkGradients& g, double lr, UpdateMask mask) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    if (mask.routers) layer.router.theta -= lr * g.router[l];
    if (mask.experts) {
      for (std::size_t j = 0; j < layer.experts.size(); ++j) {
        layer.experts[j].weight -= lr * g.expert_weight[l][j];
        axpy(-lr, g.expert_bias[l][j], layer.experts[j].bias);
      }
    }
  }
  if (mask.readout) {
    net.readout.weight -= lr * g.readout_weight;
    axpy(-lr, g.readout_bias, net.readout.bias);
  }
}

double forward_cost(const NetworkShape& s) {
  const double d = static_cast<double>(s.dim);
  const double per_layer = 2.0 * static_cast<double>(s.experts) * d +
                           static_cast<double>(s.k) * (2.0 * d * d + 3.0 * d);
  return static_cast<double>(s.layers) * per_layer + 2.0 * static_cast<double>(s.classes) * d;
}

Vector log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  const double lse = mx + std::log(total);
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Vector softmax(std::span<const double> logits) {
  Vector p = log_softmax(logits);
  for (double& v : p) v = std::exp(v);
  return p;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace grip
