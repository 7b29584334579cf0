// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grip/binary_io.hpp"
#include "grip/errors.hpp"
#include "grip/kernels.hpp"

namespace grip {

namespace {
constexpr std::string_view kMagic = "GRIPCACH";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void RetainCache::validate() const {
  GRIP_REQUIRE(reps.size() == layers && scores.size() == layers && selections.size() == layers,
               "cache: per-layer arrays must have L entries");
  for (std::size_t l = 0; l < layers; ++l) {
    GRIP_REQUIRE(reps[l].rows() == dim && reps[l].cols() == samples, "cache: reps must be d×N");
    GRIP_REQUIRE(scores[l].rows() == experts && scores[l].cols() == samples,
                 "cache: scores must be E×N");
    GRIP_REQUIRE(selections[l].size() == samples, "cache: one selection per sample");
    for (const auto& sel : selections[l]) {
      GRIP_REQUIRE(sel.size() == k, "cache: selection size must equal k");
      for (auto e : sel) GRIP_REQUIRE(e < experts, "cache: selection index out of range");
    }
  }
}

RetainCache capture_retain_cache(const MoENetwork& net, const Matrix& inputs) {
  GRIP_REQUIRE(inputs.rows() > 0, "capture_retain_cache: retain set is empty");
  const NetworkShape shape = net.shape();
  RetainCache cache;
  cache.layers = shape.layers;
  cache.dim = shape.dim;
  cache.samples = inputs.rows();
  cache.experts = shape.experts;
  cache.k = shape.k;
  cache.reps.assign(shape.layers, Matrix(shape.dim, inputs.rows()));
  cache.scores.assign(shape.layers, Matrix(shape.experts, inputs.rows()));
  cache.selections.assign(shape.layers, std::vector<SelectionSet>(inputs.rows()));

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(inputs.rows()); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const Tape tape = forward_tape(net, inputs.row(i));
    for (std::size_t l = 0; l < shape.layers; ++l) {
      cache.reps[l].set_column(i, tape.inputs[l]);
      cache.scores[l].set_column(i, tape.scores[l]);
      cache.selections[l][i] = tape.selections[l];
    }
  }
  return cache;
}

std::vector<std::uint8_t> encode_cache(const RetainCache& cache) {
  cache.validate();
  io::ByteWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  for (std::size_t v : {cache.layers, cache.dim, cache.samples, cache.experts, cache.k})
    w.u32(static_cast<std::uint32_t>(v));
  for (std::size_t l = 0; l < cache.layers; ++l) {
    w.f64s(cache.reps[l].data());
    w.f64s(cache.scores[l].data());
    for (const auto& sel : cache.selections[l])
      for (auto e : sel) w.u32(e);
  }
  return w.take();
}

RetainCache decode_cache(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("cache: unsupported version " + std::to_string(version));
  RetainCache c;
  c.layers = r.u32();
  c.dim = r.u32();
  c.samples = r.u32();
  c.experts = r.u32();
  c.k = r.u32();
  const std::size_t per_layer = 8 * (c.dim * c.samples + c.experts * c.samples) + 4 * c.samples * c.k;
  if (r.remaining() != per_layer * c.layers)
    throw FormatError("cache: payload size does not match header");
  try {
    for (std::size_t l = 0; l < c.layers; ++l) {
      c.reps.emplace_back(c.dim, c.samples, r.f64s(c.dim * c.samples));
      c.scores.emplace_back(c.experts, c.samples, r.f64s(c.experts * c.samples));
      std::vector<SelectionSet> sels;
      sels.reserve(c.samples);
      for (std::size_t i = 0; i < c.samples; ++i) {
        std::vector<std::uint32_t> idx(c.k);
        for (auto& e : idx) e = r.u32();
        sels.emplace_back(std::move(idx));
      }
      c.selections.push_back(std::move(sels));
    }
    c.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("cache: ") + e.what());
  }
  return c;
}

void save_cache(const std::filesystem::path& path, const RetainCache& cache) {
  io::write_file(path, encode_cache(cache));
}

RetainCache load_cache(const std::filesystem::path& path) { return decode_cache(io::read_file(path)); }

SelectionPartition partition_by_selection(const RetainCache& cache, std::size_t layer,
                                          std::size_t expert) {
  GRIP_REQUIRE(layer < cache.layers && expert < cache.experts,
               "partition_by_selection: layer/expert out of range");
  SelectionPartition p;
  const auto e = static_cast<std::uint32_t>(expert);
  for (std::size_t i = 0; i < cache.samples; ++i)
    (cache.selections[layer][i].contains(e) ? p.selected : p.complement).push_back(i);
  return p;
}

SelectionMargins compute_margins(const RetainCache& cache, std::size_t layer, std::size_t expert) {
  const SelectionPartition p = partition_by_selection(cache, layer, expert);
  SelectionMargins m;
  m.indices = p.complement;
  m.tau.reserve(p.complement.size());
  const Matrix& s = cache.scores[layer];
  for (std::size_t i : p.complement) {
    double tau = std::numeric_limits<double>::infinity();
    for (auto sel : cache.selections[layer][i]) tau = std::min(tau, s(sel, i) - s(expert, i));
    m.tau.push_back(tau);
  }
  return m;
}

ExpertConstraintSet build_expert_constraints(const RetainCache& cache, std::size_t layer,
                                             std::size_t expert, double eps,
                                             bool eps_relative) {
  GRIP_REQUIRE(eps >= 0.0, "build_expert_constraints: eps must be non-negative");
  const SelectionPartition part = partition_by_selection(cache, layer, expert);
  const Matrix& x = cache.reps[layer];
  const std::size_t d = cache.dim;

  ExpertConstraintSet cs;
  cs.layer = layer;
  cs.expert = expert;
  cs.eq_indices = part.selected;
  if (part.selected.empty()) {
    cs.eq_projector = Projector::identity(d);
  } else {
    const Matrix x_eq = x.select_columns(part.selected);
    const EigenDecomposition eig = sym_eig(kernels::gram(x_eq));
    cs.eq_projector = nullspace_projector_from(eig, eps, eps_relative);
    cs.empty_nullspace = cs.eq_projector.is_empty();
    cs.build_flops += 2.0 * static_cast<double>(d * d * x_eq.cols()) + sym_eig_cost(d, eig.sweeps);
  }

  const SelectionMargins margins = compute_margins(cache, layer, expert);
  std::vector<Vector> rows;
  double running = 0.0;
  for (std::size_t a = 0; a < margins.indices.size(); ++a) {
    const std::size_t i = margins.indices[a];
    Vector xi = x.column(i);
    const double w = dot(xi, xi);
    if (w == 0.0) continue;  // 0 ≤ τ holds trivially
    cs.ineq_indices.push_back(i);
    cs.margins.push_back(margins.tau[a]);
    cs.own_scores.push_back(cache.scores[layer](expert, i));
    const auto& sel = cache.selections[layer][i].indices();
    cs.rivals.push_back(sel);
    Vector rs;
    for (auto k : sel) rs.push_back(cache.scores[layer](k, i));
    cs.rival_scores.push_back(std::move(rs));
    cs.sq_norms.push_back(w);
    running += w;
    cs.cumulative_weights.push_back(running);
    rows.push_back(std::move(xi));
  }
  cs.ineq_rows = Matrix(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), cs.ineq_rows.row(r).begin());
  cs.projected_rows = Matrix(rows.size(), d);
  running = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector px = cs.eq_projector.apply(rows[r]);
    std::copy(px.begin(), px.end(), cs.projected_rows.row(r).begin());
    const double w = dot(px, px);
    running += w;
    cs.projected_sq_norms.push_back(w);
    cs.projected_cumulative.push_back(running);
  }
  cs.build_flops += 2.0 * static_cast<double>(d * cache.samples) +
                    static_cast<double>(rows.size()) * cs.eq_projector.apply_cost();
  return cs;
}

std::size_t ConstraintBank::empty_nullspace_count() const {
  std::size_t n = 0;
  for (const auto& layer : sets)
    for (const auto& cs : layer) n += cs.empty_nullspace ? 1 : 0;
  return n;
}

ConstraintBank build_constraint_bank(const RetainCache& cache, double eps, bool eps_relative) {
  cache.validate();
  ConstraintBank bank;
  bank.eps = eps;
  bank.eps_relative = eps_relative;
  bank.sets.assign(cache.layers, std::vector<ExpertConstraintSet>(cache.experts));
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(cache.layers * cache.experts);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < total; ++t) {
    const std::size_t l = static_cast<std::size_t>(t) / cache.experts;
    const std::size_t j = static_cast<std::size_t>(t) % cache.experts;
    bank.sets[l][j] = build_expert_constraints(cache, l, j, eps, eps_relative);
  }
  for (const auto& layer : bank.sets) {
    for (const auto& cs : layer) {
      bank.build_flops += cs.build_flops;
      if (cs.empty_nullspace) {
        bank.warnings.push_back(
            {"empty_nullspace", cs.layer, cs.expert,
             std::to_string(cs.eq_indices.size()) + " selecting samples span every direction at eps=" +
                 std::to_string(eps) + "; equality-constrained update zeroed"});
      }
    }
  }
  return bank;
}

}  // namespace grip
