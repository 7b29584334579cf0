// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/attack.hpp"

#include <algorithm>
#include <numeric>

#include "grip/errors.hpp"

namespace grip {

std::string to_string(ForcingMode m) {
  return m == ForcingMode::PreSelection ? "pre_selection" : "top_m_nonselected";
}

ForcingMode parse_forcing_mode(const std::string& s) {
  if (s == "pre_selection") return ForcingMode::PreSelection;
  if (s == "top_m_nonselected") return ForcingMode::TopMNonselected;
  throw ContractViolation("unknown forcing mode '" + s + "'");
}

namespace {

// Non-selected experts ordered by descending score, ties to the lower index.
std::vector<std::uint32_t> ranked_nonselected(std::span<const double> scores,
                                              const SelectionSet& natural) {
  std::vector<std::uint32_t> order;
  for (std::uint32_t e = 0; e < scores.size(); ++e)
    if (!natural.contains(e)) order.push_back(e);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  return order;
}

bool predicts(const Vector& logits, int label) {
  return static_cast<int>(argmax(logits)) == label;
}

}  // namespace

Vector forced_forward(const MoENetwork& net, std::span<const double> x, const ForcingPolicy& policy,
                      const std::vector<SelectionSet>* pre_selection) {
  const std::size_t layers = net.layers.size();
  if (policy.mode == ForcingMode::PreSelection) {
    GRIP_REQUIRE(pre_selection != nullptr && pre_selection->size() == layers,
                 "pre_selection forcing needs one selection per layer");
    return forward_tape(net, x,
                        [&](std::size_t l, std::span<const double>, const SelectionSet&) {
                          return (*pre_selection)[l];
                        })
        .logits;
  }
  GRIP_REQUIRE(policy.m >= 1, "forcing needs m >= 1");
  return forward_tape(net, x,
                      [&](std::size_t, std::span<const double> scores, const SelectionSet& natural) {
                        auto ranked = ranked_nonselected(scores, natural);
                        GRIP_REQUIRE(!ranked.empty(), "no non-selected experts to force");
                        ranked.resize(std::min(policy.m, ranked.size()));
                        return SelectionSet(std::move(ranked));
                      })
      .logits;
}

namespace {

bool forced_hit(const MoENetwork& net, std::span<const double> x, int label,
                const ForcingPolicy& policy, const std::vector<SelectionSet>& pre) {
  if (policy.mode == ForcingMode::TopMNonselected && policy.best_of) {
    for (std::size_t r = 0; r < policy.m; ++r) {
      bool available = true;
      const Vector logits = forward_tape(
          net, x, [&](std::size_t, std::span<const double> scores, const SelectionSet& natural) {
            const auto ranked = ranked_nonselected(scores, natural);
            if (r >= ranked.size()) {
              available = false;
              return natural;
            }
            return SelectionSet({ranked[r]});
          }).logits;
      if (available && predicts(logits, label)) return true;
    }
    return false;
  }
  return predicts(forced_forward(net, x, policy, &pre), label);
}

}  // namespace

double vulnerability_ratio(double forced_fa, double normal_fa, std::size_t classes) {
  GRIP_REQUIRE(classes >= 1, "classes must be positive");
  const double base = 1.0 / static_cast<double>(classes);
  return std::max(forced_fa - base, 0.0) / std::max(normal_fa - base, 0.01);
}

AttackResult forcing_attack(const MoENetwork& net_post, const Matrix& forget_inputs,
                            const std::vector<int>& forget_labels,
                            const std::vector<std::vector<SelectionSet>>& pre_selections,
                            const ForcingPolicy& policy) {
  const std::size_t n = forget_inputs.rows();
  GRIP_REQUIRE(forget_labels.size() == n && pre_selections.size() == n,
               "attack inputs, labels and selections must align");
  const std::size_t classes = net_post.readout.weight.rows();

  std::vector<char> shifted(n), normal_hit(n), forced(n);
#pragma omp parallel for schedule(dynamic) if (n > 1)
  for (std::size_t q = 0; q < n; ++q) {
    const auto x = forget_inputs.row(q);
    const ForwardResult natural = network_forward(net_post, x);
    shifted[q] = natural.selections != pre_selections[q];
    normal_hit[q] = predicts(natural.logits, forget_labels[q]);
    forced[q] = forced_hit(net_post, x, forget_labels[q], policy, pre_selections[q]);
  }

  AttackResult r;
  r.policy = policy;
  r.queries = n;
  r.random_baseline = 1.0 / static_cast<double>(classes);
  std::size_t s_normal = 0, s_forced = 0, a_normal = 0, a_forced = 0;
  for (std::size_t q = 0; q < n; ++q) {
    a_normal += normal_hit[q];
    a_forced += forced[q];
    if (!shifted[q]) continue;
    ++r.shifted_queries;
    s_normal += normal_hit[q];
    s_forced += forced[q];
  }
  if (n > 0) {
    r.normal_fa_all = static_cast<double>(a_normal) / n;
    r.forced_fa_all = static_cast<double>(a_forced) / n;
    r.vulnerability_all = vulnerability_ratio(r.forced_fa_all, r.normal_fa_all, classes);
  }
  if (r.shifted_queries > 0) {
    r.normal_fa = static_cast<double>(s_normal) / r.shifted_queries;
    r.forced_fa = static_cast<double>(s_forced) / r.shifted_queries;
    r.vulnerability = vulnerability_ratio(r.forced_fa, r.normal_fa, classes);
  } else {
    // nothing was rerouted, so there is nothing to restore
    r.normal_fa = r.forced_fa = r.normal_fa_all;
    r.vulnerability = 0.0;
  }
  return r;
}

nlohmann::json to_json(const AttackResult& r) {
  return {{"policy", to_string(r.policy.mode)},
          {"m", r.policy.m},
          {"best_of", r.policy.best_of},
          {"queries", r.queries},
          {"shifted_queries", r.shifted_queries},
          {"random_baseline", r.random_baseline},
          {"normal_fa", r.normal_fa},
          {"forced_fa", r.forced_fa},
          {"vulnerability", r.vulnerability},
          {"normal_fa_all", r.normal_fa_all},
          {"forced_fa_all", r.forced_fa_all},
          {"vulnerability_all", r.vulnerability_all}};
}

}  // namespace grip
