// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/enforce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "grip/errors.hpp"
#include "grip/kernels.hpp"

namespace grip {

namespace {
// Rows whose residual stays below this after a projection are treated as
// satisfied; it only absorbs rounding, the margin slack is orders larger.
constexpr double kFeasibilityTol = 1e-12;
}  // namespace

nlohmann::json to_json(const EnforcementStats& s) {
  return {{"layer", s.layer},
          {"expert", s.expert},
          {"iterations", s.iterations},
          {"projections", s.projections},
          {"constraints", s.constraints},
          {"violated_initial", s.violated_initial},
          {"violated_final", s.violated_final},
          {"initial_max_violation", s.initial_max_violation},
          {"final_max_violation", s.final_max_violation},
          {"reprojected_max_violation", s.reprojected_max_violation},
          {"feasible", s.feasible},
          {"shrink_factor", s.shrink_factor},
          {"sample_histogram", s.sample_histogram}};
}

std::pair<double, std::size_t> max_violation(std::span<const double> row, const Matrix& rows,
                                             std::span<const double> bounds) {
  double worst = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const double v = dot(rows.row(i), row) - bounds[i];
    if (v > kFeasibilityTol) ++count;
    worst = std::max(worst, v);
  }
  return {worst, count};
}

std::mt19937_64 make_stream(std::uint64_t seed, std::size_t layer, std::size_t expert,
                            std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(expert),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

KaczmarzResult kaczmarz_solve(std::span<const double> start, const HalfspaceSystem& sys,
                              const KaczmarzConfig& cfg, std::mt19937_64& rng) {
  GRIP_REQUIRE(cfg.k_max >= 1, "kaczmarz: k_max must be at least 1");
  GRIP_REQUIRE(cfg.check_every >= 1, "kaczmarz: check_every must be at least 1");
  const std::size_t n = sys.rows.rows();
  GRIP_REQUIRE(sys.bounds.size() == n && sys.sq_norms.size() == n && sys.cumulative.size() == n,
               "kaczmarz: system arrays must have one entry per row");
  const double d = static_cast<double>(start.size());

  KaczmarzResult out;
  out.row.assign(start.begin(), start.end());
  auto& st = out.stats;
  st.constraints = n;
  st.sample_histogram.assign(n, 0);
  if (n == 0) return out;

  const double scan_cost = 2.0 * d * static_cast<double>(n);
  auto [v0, c0] = max_violation(out.row, sys.rows, sys.bounds);
  st.flops += scan_cost;
  st.initial_max_violation = v0;
  st.violated_initial = c0;
  st.final_max_violation = v0;
  st.violated_final = c0;
  const double total = sys.cumulative.back();
  if (c0 == 0 || !(total > 0.0)) {
    st.feasible = c0 == 0;
    st.reprojected_max_violation = v0;
    return out;
  }

  const std::size_t budget = cfg.budget_per_violation ? cfg.k_max * c0 : cfg.k_max;
  std::uniform_real_distribution<double> pick(0.0, total);
  while (st.iterations < budget) {
    const double u = pick(rng);
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(sys.cumulative.begin(), sys.cumulative.end(), u) - sys.cumulative.begin());
    i = std::min(i, n - 1);
    ++st.sample_histogram[i];
    const auto a = sys.rows.row(i);
    const double residual = dot(a, out.row) - sys.bounds[i];
    st.flops += 2.0 * d;
    if (residual > 0.0 && sys.sq_norms[i] > 0.0) {
      axpy(-residual / sys.sq_norms[i], a, out.row);
      ++st.projections;
      st.flops += 2.0 * d;
    }
    ++st.iterations;
    if (st.iterations % cfg.check_every == 0) {
      auto [v, c] = max_violation(out.row, sys.rows, sys.bounds);
      st.flops += scan_cost;
      st.final_max_violation = v;
      st.violated_final = c;
      if (c == 0) break;
    }
  }
  if (st.iterations % cfg.check_every != 0) {
    auto [v, c] = max_violation(out.row, sys.rows, sys.bounds);
    st.flops += scan_cost;
    st.final_max_violation = v;
    st.violated_final = c;
  }
  st.feasible = st.violated_final == 0;
  st.reprojected_max_violation = st.final_max_violation;
  return out;
}

Vector project_equality(std::span<const double> row, const ExpertConstraintSet& cs) {
  return cs.eq_projector.apply(row);
}

namespace {

struct ExpertResult {
  Vector row;
  EnforcementStats stats;
};

// Margin of each inequality row under the router change `acc` applied since
// capture: min over the input's selected experts of the current score gap.
Vector current_margins(const ExpertConstraintSet& cs, const Matrix& acc) {
  const std::size_t n = cs.ineq_rows.rows();
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = cs.ineq_rows.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < cs.rivals[i].size(); ++r)
      best = std::min(best, cs.rival_scores[i][r] + dot(acc.row(cs.rivals[i][r]), x));
    out[i] = best - (cs.own_scores[i] + dot(acc.row(cs.expert), x));
  }
  return out;
}

ExpertResult enforce_one(std::span<const double> update, const ExpertConstraintSet& cs,
                         const KaczmarzConfig& cfg, const Matrix* accumulated,
                         std::mt19937_64& rng) {
  const std::size_t n = cs.ineq_rows.rows();
  const double d = static_cast<double>(update.size());
  double flops = cs.eq_projector.apply_cost();
  const Vector start = project_equality(update, cs);

  Vector bounds = accumulated != nullptr ? current_margins(cs, *accumulated) : cs.margins;
  for (auto& b : bounds) b -= cfg.margin_slack;
  if (accumulated != nullptr) {
    const double k = n > 0 ? static_cast<double>(cs.rivals.front().size()) + 1.0 : 0.0;
    flops += 2.0 * d * k * static_cast<double>(n);
  }

  const bool projected = cfg.rows == HalfspaceRows::Projected;
  const HalfspaceSystem system{projected ? cs.projected_rows : cs.ineq_rows, bounds,
                               projected ? cs.projected_sq_norms : cs.sq_norms,
                               projected ? cs.projected_cumulative : cs.cumulative_weights};
  KaczmarzResult res = kaczmarz_solve(start, system, cfg, rng);
  res.stats.layer = cs.layer;
  res.stats.expert = cs.expert;
  res.stats.flops += flops;

  if (!projected && !cs.eq_projector.is_identity() && res.stats.projections > 0) {
    cs.eq_projector.apply_inplace(res.row);
    const auto [v, c] = max_violation(res.row, cs.ineq_rows, bounds);
    res.stats.reprojected_max_violation = v;
    res.stats.feasible = c == 0;
    res.stats.flops += cs.eq_projector.apply_cost() + 2.0 * d * static_cast<double>(n);
  }
  if (!res.stats.feasible && cfg.on_infeasible == InfeasiblePolicy::Shrink) {
    const Matrix& rows = projected ? cs.projected_rows : cs.ineq_rows;
    double t = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = dot(rows.row(i), res.row);
      if (bounds[i] >= 0.0 && r > bounds[i]) t = std::min(t, bounds[i] / r);
    }
    for (double& x : res.row) x *= t;
    const auto [v, c] = max_violation(res.row, rows, bounds);
    res.stats.shrink_factor = t;
    res.stats.final_max_violation = v;
    res.stats.violated_final = c;
    res.stats.reprojected_max_violation = v;
    res.stats.feasible = c == 0;
    res.stats.flops += 4.0 * d * static_cast<double>(n);
  }
  return {std::move(res.row), std::move(res.stats)};
}

}  // namespace

KaczmarzResult kaczmarz_halfspace(std::span<const double> row, const ExpertConstraintSet& cs,
                                  const KaczmarzConfig& cfg) {
  GRIP_REQUIRE(row.size() == cs.ineq_rows.cols() || cs.ineq_rows.rows() == 0,
               "kaczmarz_halfspace: dimension mismatch");
  Vector bounds(cs.margins.size());
  for (std::size_t i = 0; i < bounds.size(); ++i) bounds[i] = cs.margins[i] - cfg.margin_slack;
  auto rng = make_stream(cfg.seed, cs.layer, cs.expert, 0);
  const HalfspaceSystem system{cs.ineq_rows, bounds, cs.sq_norms, cs.cumulative_weights};
  KaczmarzResult res = kaczmarz_solve(row, system, cfg, rng);
  res.stats.layer = cs.layer;
  res.stats.expert = cs.expert;
  return res;
}

ConstrainedUpdate constrain_router_gradients(const std::vector<Matrix>& updates,
                                             const ConstraintBank& bank, const KaczmarzConfig& cfg,
                                             const std::vector<Matrix>* accumulated,
                                             std::uint64_t step) {
  GRIP_REQUIRE(updates.size() == bank.sets.size(),
               "constrain_router_gradients: one update matrix per constrained layer required");
  GRIP_REQUIRE(accumulated == nullptr || accumulated->size() == updates.size(),
               "constrain_router_gradients: accumulated updates must match layer count");
  ConstrainedUpdate out;
  out.rows = updates;
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t l = 0; l < updates.size(); ++l) {
    GRIP_REQUIRE(updates[l].rows() == bank.sets[l].size(),
                 "constrain_router_gradients: constraint set missing for an expert");
    for (std::size_t j = 0; j < updates[l].rows(); ++j) jobs.emplace_back(l, j);
  }
  out.stats.resize(jobs.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(jobs.size()); ++t) {
    const auto [l, j] = jobs[static_cast<std::size_t>(t)];
    auto rng = make_stream(cfg.seed, l, j, step);
    const Matrix* acc = accumulated != nullptr ? &(*accumulated)[l] : nullptr;
    ExpertResult r = enforce_one(updates[l].row(j), bank.at(l, j), cfg, acc, rng);
    std::copy(r.row.begin(), r.row.end(), out.rows[l].row(j).begin());
    out.stats[static_cast<std::size_t>(t)] = std::move(r.stats);
  }
  for (const auto& s : out.stats) {
    out.flops += s.flops;
    out.all_feasible = out.all_feasible && s.feasible;
  }
  return out;
}

namespace {

bool selections_preserved(const Matrix& theta_change, const RetainCache& cache, std::size_t l) {
  const Matrix delta = kernels::matmul(theta_change, cache.reps[l]);  // E×N
  Vector col(cache.experts);
  for (std::size_t i = 0; i < cache.samples; ++i) {
    for (std::size_t e = 0; e < cache.experts; ++e) col[e] = cache.scores[l](e, i) + delta(e, i);
    if (topk_select(col, cache.k) != cache.selections[l][i]) return false;
  }
  return true;
}

}  // namespace

GuardResult guard_cached_selections(std::vector<Matrix>& updates, const RetainCache& cache,
                                    const std::vector<Matrix>& accumulated,
                                    std::size_t max_halvings) {
  GRIP_REQUIRE(updates.size() == cache.layers && accumulated.size() == cache.layers,
               "guard_cached_selections: one update and accumulator per layer required");
  GuardResult g;
  const double check_cost =
      2.0 * static_cast<double>(cache.experts * cache.dim * cache.samples) +
      static_cast<double>(cache.experts * cache.samples);
  for (std::size_t l = 0; l < cache.layers; ++l) {
    std::size_t h = 0;
    for (;; ++h) {
      g.flops += check_cost;
      if (selections_preserved(accumulated[l] + updates[l], cache, l)) break;
      if (h == max_halvings) {
        updates[l] *= 0.0;
        ++g.zeroed_layers;
        break;
      }
      updates[l] *= 0.5;
    }
    g.halvings += h;
  }
  return g;
}

GlobalProjectors build_global_projectors(const RetainCache& cache, double eps,
                                         bool eps_relative) {
  GlobalProjectors g;
  g.eps = eps;
  g.layers.resize(cache.layers);
  std::vector<int> sweeps(cache.layers, 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ll = 0; ll < static_cast<std::ptrdiff_t>(cache.layers); ++ll) {
    const std::size_t l = static_cast<std::size_t>(ll);
    const EigenDecomposition eig = sym_eig(kernels::gram(cache.reps[l]));
    g.layers[l] = nullspace_projector_from(eig, eps, eps_relative);
    sweeps[l] = eig.sweeps;
  }
  const std::size_t d = cache.dim;
  for (std::size_t l = 0; l < cache.layers; ++l) {
    g.build_flops += 2.0 * static_cast<double>(d * d * cache.samples) + sym_eig_cost(d, sweeps[l]);
    if (g.layers[l].is_empty())
      g.warnings.push_back({"empty_nullspace", l, 0,
                            "retain representations span every direction at eps=" +
                                std::to_string(eps) + "; router update zeroed for the layer"});
  }
  return g;
}

std::vector<Matrix> global_nullspace_constrain(const std::vector<Matrix>& updates,
                                               const GlobalProjectors& projectors, double* flops) {
  GRIP_REQUIRE(updates.size() == projectors.layers.size(),
               "global_nullspace_constrain: one projector per layer required");
  std::vector<Matrix> out = updates;
  double cost = 0.0;
  for (std::size_t l = 0; l < out.size(); ++l) {
    for (std::size_t j = 0; j < out[l].rows(); ++j) projectors.layers[l].apply_inplace(out[l].row(j));
    cost += static_cast<double>(out[l].rows()) * projectors.layers[l].apply_cost();
  }
  if (flops != nullptr) *flops += cost;
  return out;
}

double kaczmarz_condition_estimate(const Matrix& rows) {
  if (rows.rows() == 0) return 1.0;
  const Matrix ata = kernels::matmul_tn(rows, rows);
  const double lmax = power_iteration_max_eig(ata);
  const EigenDecomposition eig = sym_eig(ata);
  double lmin = std::numeric_limits<double>::infinity();
  for (double v : eig.eigenvalues)
    if (v > 1e-12 * lmax) lmin = std::min(lmin, v);
  if (!std::isfinite(lmin)) return std::numeric_limits<double>::infinity();
  return frobenius_norm(rows) / std::sqrt(lmin);
}

}  // namespace grip
