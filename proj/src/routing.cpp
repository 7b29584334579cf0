// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/routing.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "grip/errors.hpp"

namespace grip {

void SelectionTrace::validate() const {
  GRIP_REQUIRE(query_ids.size() == selections.size(), "trace: ids and selections differ in length");
  const std::size_t layers = num_layers();
  for (const auto& row : selections)
    GRIP_REQUIRE(row.size() == layers, "trace: inconsistent layer count across queries");
  for (const auto& id : query_ids)
    GRIP_REQUIRE(id.find_first_of(",\n\r") == std::string::npos,
                 "trace: query id contains a separator: " + id);
}

SelectionTrace record_trace(const MoENetwork& net, const Matrix& inputs,
                            const std::vector<std::string>& query_ids, std::string tag) {
  GRIP_REQUIRE(query_ids.size() == inputs.rows(), "record_trace: one id per input row required");
  SelectionTrace trace;
  trace.tag = std::move(tag);
  trace.query_ids = query_ids;
  trace.selections.resize(inputs.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(inputs.rows()); ++q) {
    auto fwd = network_forward(net, inputs.row(static_cast<std::size_t>(q)));
    trace.selections[static_cast<std::size_t>(q)] = std::move(fwd.selections);
  }
  return trace;
}

double jaccard(const SelectionSet& a, const SelectionSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia == *ib) {
      ++inter;
      ++ia;
      ++ib;
    } else if (*ia < *ib) {
      ++ia;
    } else {
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

/// Index of each post query in pre order; throws with the set difference.
std::vector<std::size_t> align(const SelectionTrace& pre, const SelectionTrace& post) {
  pre.validate();
  post.validate();
  GRIP_REQUIRE(pre.num_layers() == post.num_layers() || pre.num_queries() == 0,
               "routing_stability: layer counts differ");
  std::map<std::string, std::size_t> post_index;
  for (std::size_t i = 0; i < post.query_ids.size(); ++i) {
    GRIP_REQUIRE(post_index.emplace(post.query_ids[i], i).second,
                 "routing_stability: duplicate query id " + post.query_ids[i]);
  }
  std::vector<std::size_t> order;
  std::vector<std::string> missing;
  for (const auto& id : pre.query_ids) {
    auto it = post_index.find(id);
    if (it == post_index.end()) {
      missing.push_back(id);
    } else {
      order.push_back(it->second);
      post_index.erase(it);
    }
  }
  if (!missing.empty() || !post_index.empty()) {
    std::ostringstream msg;
    msg << "routing_stability: query sets differ; only in pre:";
    for (const auto& id : missing) msg << ' ' << id;
    msg << "; only in post:";
    for (const auto& [id, _] : post_index) msg << ' ' << id;
    throw ContractViolation(msg.str());
  }
  return order;
}

}  // namespace

StabilityReport routing_stability(const SelectionTrace& pre, const SelectionTrace& post) {
  const auto order = align(pre, post);
  const std::size_t layers = pre.num_layers();
  const std::size_t n = pre.num_queries();
  StabilityReport rep;
  rep.rs_per_layer.assign(layers, 1.0);
  rep.per_query.assign(n, std::vector<double>(layers, 1.0));
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t l = 0; l < layers; ++l)
      rep.per_query[q][l] = jaccard(pre.selections[q][l], post.selections[order[q]][l]);
  if (n > 0) {
    for (std::size_t l = 0; l < layers; ++l) {
      double s = 0.0;
      for (std::size_t q = 0; q < n; ++q) s += rep.per_query[q][l];
      rep.rs_per_layer[l] = s / static_cast<double>(n);
    }
  }
  rep.mean_rs = 1.0;
  if (layers > 0) {
    double s = 0.0;
    for (double v : rep.rs_per_layer) s += v;
    rep.mean_rs = s / static_cast<double>(layers);
  }
  return rep;
}

DriftReport drift_report(const SelectionTrace& pre, const SelectionTrace& post) {
  const auto order = align(pre, post);
  const std::size_t layers = pre.num_layers();
  const std::size_t n = pre.num_queries();
  DriftReport rep;
  rep.layers.resize(layers);
  for (std::size_t l = 0; l < layers && n > 0; ++l) {
    double changed = 0.0;
    double diff = 0.0;
    double rs = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      const SelectionSet& a = pre.selections[q][l];
      const SelectionSet& b = post.selections[order[q]][l];
      std::size_t only_pre = 0;
      for (auto e : a)
        if (!b.contains(e)) ++only_pre;
      if (a != b) changed += 1.0;
      diff += static_cast<double>(only_pre);
      rs += jaccard(a, b);
    }
    const double nn = static_cast<double>(n);
    rep.layers[l] = {changed / nn, diff / nn, rs / nn};
  }
  for (std::size_t l = 1; l < layers; ++l)
    if (rep.layers[l].rs > rep.layers[l - 1].rs) rep.rs_nonincreasing_with_depth = false;
  return rep;
}

void write_trace(std::ostream& out, const SelectionTrace& trace) {
  trace.validate();
  if (!trace.tag.empty()) out << "# tag=" << trace.tag << '\n';
  for (std::size_t q = 0; q < trace.num_queries(); ++q) {
    for (std::size_t l = 0; l < trace.selections[q].size(); ++l) {
      out << trace.query_ids[q] << ',' << l;
      for (auto e : trace.selections[q][l]) out << ',' << e;
      out << '\n';
    }
  }
}

SelectionTrace read_trace(std::istream& in) {
  SelectionTrace trace;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.rfind("# tag=", 0) == 0) trace.tag = line.substr(6);
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2)
      throw FormatError("trace line " + std::to_string(lineno) + ": expected id,layer,experts...");
    std::size_t layer = 0;
    std::vector<std::uint32_t> experts;
    try {
      layer = std::stoul(fields[1]);
      for (std::size_t i = 2; i < fields.size(); ++i)
        experts.push_back(static_cast<std::uint32_t>(std::stoul(fields[i])));
    } catch (const std::exception&) {
      throw FormatError("trace line " + std::to_string(lineno) + ": non-numeric field");
    }
    auto [it, inserted] = index.emplace(fields[0], trace.query_ids.size());
    if (inserted) {
      trace.query_ids.push_back(fields[0]);
      trace.selections.emplace_back();
    }
    auto& row = trace.selections[it->second];
    if (layer != row.size())
      throw FormatError("trace line " + std::to_string(lineno) + ": layers must appear in order");
    try {
      row.emplace_back(std::move(experts));
    } catch (const ContractViolation& e) {
      throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  try {
    trace.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(e.what());
  }
  return trace;
}

nlohmann::json to_json(const StabilityReport& report) {
  return {{"rs_per_layer", report.rs_per_layer}, {"mean_rs", report.mean_rs},
          {"per_query", report.per_query}};
}

nlohmann::json to_json(const DriftReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : report.layers)
    layers.push_back({{"changed_fraction", l.changed_fraction},
                      {"mean_set_difference", l.mean_set_difference},
                      {"rs", l.rs}});
  std::vector<double> changed;
  std::vector<double> diff;
  std::vector<double> rs;
  for (const auto& l : report.layers) {
    changed.push_back(l.changed_fraction);
    diff.push_back(l.mean_set_difference);
    rs.push_back(l.rs);
  }
  return {{"changed_fraction", changed},
          {"mean_set_difference", diff},
          {"rs_per_layer", rs},
          {"rs_nonincreasing_with_depth", report.rs_nonincreasing_with_depth}};
}

}  // namespace grip
