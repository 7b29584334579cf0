// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "grip/moe.hpp"

namespace grip {

/// Expert selections for a set of queries at every layer.
struct SelectionTrace {
  std::string tag;  // "pre", "post", ...
  std::vector<std::string> query_ids;
  std::vector<std::vector<SelectionSet>> selections;  // [query][layer]

  std::size_t num_queries() const noexcept { return query_ids.size(); }
  std::size_t num_layers() const noexcept {
    return selections.empty() ? 0 : selections.front().size();
  }
  void validate() const;
};

/// Records the natural top-k selections of `net` on each row of `inputs`.
SelectionTrace record_trace(const MoENetwork& net, const Matrix& inputs,
                            const std::vector<std::string>& query_ids, std::string tag);

struct StabilityReport {
  std::vector<double> rs_per_layer;
  double mean_rs = 1.0;
  std::vector<std::vector<double>> per_query;  // [query][layer] Jaccard
};

struct LayerDrift {
  double changed_fraction = 0.0;     // queries whose selection changed
  double mean_set_difference = 0.0;  // mean |pre \ post|
  double rs = 1.0;
};

struct DriftReport {
  std::vector<LayerDrift> layers;
  /// RS_1 ≥ RS_2 ≥ … ≥ RS_L
  bool rs_nonincreasing_with_depth = true;
};

/// |a ∩ b| / |a ∪ b|, defined as 1 when both sets are empty.
double jaccard(const SelectionSet& a, const SelectionSet& b);

/// Throws ContractViolation when the traces do not cover the same queries
/// (as a set) and layer count. Queries are matched by id, not by position.
StabilityReport routing_stability(const SelectionTrace& pre, const SelectionTrace& post);
DriftReport drift_report(const SelectionTrace& pre, const SelectionTrace& post);

/// Line format: `query_id,layer,e_1,...,e_k` with an optional leading
/// `# tag=<tag>` comment. Query ids must not contain commas or newlines.
void write_trace(std::ostream& out, const SelectionTrace& trace);
SelectionTrace read_trace(std::istream& in);

nlohmann::json to_json(const StabilityReport& report);
nlohmann::json to_json(const DriftReport& report);

}  // namespace grip
