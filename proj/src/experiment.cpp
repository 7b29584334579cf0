// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/experiment.hpp"

#include <cmath>

#include "grip/errors.hpp"

namespace grip {

SeedFixture prepare_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedFixture f;
  f.seed = seed;
  f.task = generate_task(config.task_for(seed));
  const PretrainConfig pc = config.pretrain_for(seed);
  MoENetwork init = MoENetwork::random(config.shape, pc.init_seed, pc.router_scale, pc.expert_scale);
  f.pretrained = pretrain(std::move(init), f.task, pc);
  f.cache = capture_retain_cache(f.pretrained.net, f.task.retain_train.inputs);
  return f;
}

double sign_test_pvalue(std::size_t wins, std::size_t trials) {
  if (wins > trials) throw ContractViolation("sign test: wins exceed trials");
  // Sum of C(n, i) / 2^n in log space; n stays small but this avoids overflow anyway.
  double p = 0.0;
  const double n = static_cast<double>(trials);
  for (std::size_t i = wins; i <= trials; ++i) {
    const double x = static_cast<double>(i);
    p += std::exp(std::lgamma(n + 1) - std::lgamma(x + 1) - std::lgamma(n - x + 1) - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

PairedComparison compare_paired(const std::vector<RunReport>& none,
                                const std::vector<RunReport>& constrained, double fa_tolerance) {
  if (none.size() != constrained.size())
    throw ContractViolation("compare_paired: run lists differ in length");
  PairedComparison c;
  c.pairs = none.size();
  if (!none.empty()) {
    c.objective = to_string(none.front().config.objective);
    c.mode = to_string(constrained.front().config.enforcement);
  }
  for (std::size_t i = 0; i < none.size(); ++i) {
    const RunReport& n = none[i];
    const RunReport& m = constrained[i];
    if (n.config.seed != m.config.seed || n.config.objective != m.config.objective)
      throw ContractViolation("compare_paired: runs are not paired by seed and objective");
    if (m.attack.vulnerability < n.attack.vulnerability && !m.aborted) ++c.vulnerability_wins;
    if (m.aborted || m.fa_post > n.fa_post + fa_tolerance) continue;
    ++c.matched;
    const bool rs = m.rs_eval.mean_rs > n.rs_eval.mean_rs;
    const bool ra = m.ra_post > n.ra_post;
    c.rs_wins += rs;
    c.ra_wins += ra;
    c.wins += rs && ra;
  }
  c.p_value = sign_test_pvalue(c.wins, c.pairs);
  c.vulnerability_p_value = sign_test_pvalue(c.vulnerability_wins, c.pairs);
  return c;
}

nlohmann::json to_json(const PairedComparison& c) {
  return {{"objective", c.objective},
          {"mode", c.mode},
          {"pairs", c.pairs},
          {"matched", c.matched},
          {"rs_wins", c.rs_wins},
          {"ra_wins", c.ra_wins},
          {"wins", c.wins},
          {"p_value", c.p_value},
          {"vulnerability_wins", c.vulnerability_wins},
          {"vulnerability_p_value", c.vulnerability_p_value}};
}

}  // namespace grip
