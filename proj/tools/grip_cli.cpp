// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

// grip: pretrain, unlearn, sweep-eps, attack, validate, report.
//
// Artifacts live under <output_dir>/seed_<s>/:
//   model.gripmoe  retain.gripcach  pre_trace.csv  pretrain.json
//   unlearn_<objective>_<mode>.{json,csv,gripmoe}  runs.csv
//   sweep_eps.csv  attack.json
// and <output_dir>/summary.{csv,json} from `report`.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grip/attack.hpp"
#include "grip/checkpoint.hpp"
#include "grip/config.hpp"
#include "grip/constraints.hpp"
#include "grip/errors.hpp"
#include "grip/experiment.hpp"
#include "grip/kernels.hpp"
#include "grip/routing.hpp"
#include "grip/unlearn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace grip;

/// Bad invocation or configuration: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  int threads = -1;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c;
  try {
    if (!o.config_path.empty()) c = load_config(o.config_path);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  // Precedence: flag, then environment, then config file.
  if (const char* env = std::getenv("GRIP_OUTPUT_DIR"); env && *env) c.output_dir = env;
  if (const char* env = std::getenv("GRIP_THREADS"); env && *env) {
    try {
      c.threads = std::stoi(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("GRIP_THREADS is not an integer: '") + env + "'");
    }
  }
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.threads >= 0) c.threads = o.threads;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (c.threads > 0) kernels::set_threads(c.threads);
  return c;
}

fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return c.output_dir / ("seed_" + std::to_string(seed));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

// Task and model sections decide every artifact; a mismatch means the
// artifacts on disk were made from a different config.
json fixture_identity(const ExperimentConfig& c) {
  json j = to_json(c);
  return {{"model", j["model"]}, {"task", j["task"]}, {"pretrain", j["pretrain"]}};
}

void print_warnings(const std::vector<ConstraintWarning>& warnings, std::uint64_t seed) {
  for (const auto& w : warnings)
    std::cerr << "warning seed=" << seed << " kind=" << w.kind << " layer=" << w.layer
              << " expert=" << w.expert << " detail=\"" << w.detail << "\"\n";
}

// ---------------------------------------------------------------- pretrain

int cmd_pretrain(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  int status = 0;
  for (std::uint64_t seed : c.seeds) {
    const fs::path dir = seed_dir(c, seed);
    ensure_dir(dir);
    SeedFixture f;
    try {
      f = prepare_seed(c, seed);
    } catch (const FixtureError& e) {
      std::cerr << "seed " << seed << " rejected: " << e.what() << "\n";
      status = 1;
      continue;
    }
    save_checkpoint(dir / "model.gripmoe", f.pretrained.net);
    save_cache(dir / "retain.gripcach", f.cache);
    {
      std::ofstream t(dir / "pre_trace.csv", std::ios::trunc);
      if (!t) throw std::runtime_error("cannot write " + (dir / "pre_trace.csv").string());
      write_trace(t, eval_trace(f.pretrained.net, f.task, "pre"));
    }
    const SelectionCensus census = selection_census(f.pretrained.net, f.task);
    write_json(dir / "pretrain.json",
               {{"seed", seed},
                {"fixture", fixture_identity(c)},
                {"config", to_json(c)},
                {"steps_run", f.pretrained.steps_run},
                {"train_accuracy", f.pretrained.train_accuracy},
                {"final_loss", f.pretrained.loss_curve.empty() ? 0.0 : f.pretrained.loss_curve.back()},
                {"retain_test_accuracy", accuracy(f.pretrained.net, f.task.retain_test)},
                {"forget_test_accuracy", accuracy(f.pretrained.net, f.task.forget_test)},
                {"forget_specialist", census.has_forget_specialist()},
                {"min_center_distance", f.task.min_center_distance}});
    std::printf("seed %llu: %zu steps, train acc %.4f, artifacts in %s\n",
                static_cast<unsigned long long>(seed), f.pretrained.steps_run,
                f.pretrained.train_accuracy, dir.string().c_str());
  }
  return status;
}

// ---------------------------------------------------------------- loading

struct LoadedSeed {
  std::uint64_t seed = 0;
  fs::path dir;
  SyntheticTask task;
  MoENetwork net;
  RetainCache cache;
};

LoadedSeed load_seed(const ExperimentConfig& c, std::uint64_t seed) {
  LoadedSeed s;
  s.seed = seed;
  s.dir = seed_dir(c, seed);
  const fs::path model = s.dir / "model.gripmoe";
  const fs::path cache = s.dir / "retain.gripcach";
  const fs::path meta = s.dir / "pretrain.json";
  for (const fs::path& p : {model, cache, meta})
    if (!fs::exists(p))
      throw std::runtime_error("missing " + p.string() + "; run `grip pretrain` with the same config first");
  if (read_json(meta).value("fixture", json()) != fixture_identity(c))
    throw UsageError("artifacts in " + s.dir.string() +
                     " were made with different model/task/pretrain settings; rerun `grip pretrain`");
  s.task = generate_task(c.task_for(seed));
  s.net = load_checkpoint(model);
  s.cache = load_cache(cache);
  if (s.net.shape() != c.shape) throw UsageError("checkpoint shape differs from config in " + model.string());
  const RetainCache fresh = capture_retain_cache(s.net, s.task.retain_train.inputs);
  if (encode_cache(fresh) != encode_cache(s.cache))
    throw std::runtime_error(cache.string() + " does not match the checkpoint; rerun `grip pretrain`");
  return s;
}

std::vector<Objective> objectives_from(const std::string& name) {
  if (name == "all") return {Objective::GD, Objective::KL, Objective::NPO, Objective::RMU};
  return {parse_objective(name)};
}

std::vector<Enforcement> modes_from(const std::string& name) {
  if (name == "all")
    return {Enforcement::None, Enforcement::ExpertSpecific, Enforcement::FullNull, Enforcement::PTC};
  return {parse_enforcement(name)};
}

std::string run_stem(const RunReport& r) {
  return "unlearn_" + to_string(r.config.objective) + "_" + to_string(r.config.enforcement);
}

// runs.csv is rebuilt from the per-run rows so repeated or partial
// invocations leave it consistent.
void rebuild_runs_csv(const fs::path& dir) {
  std::vector<fs::path> rows;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("unlearn_", 0) == 0 && e.path().extension() == ".csv") rows.push_back(e.path());
  }
  std::sort(rows.begin(), rows.end());
  std::string text = csv_header() + "\n";
  for (const auto& p : rows) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);  // header
    if (std::getline(in, line) && !line.empty()) text += line + "\n";
  }
  write_text(dir / "runs.csv", text);
}

// ---------------------------------------------------------------- unlearn

struct UnlearnOptions {
  std::string objective = "gd";
  std::string enforce = "none";
  std::string grid;
  std::optional<std::size_t> steps;
  std::optional<double> eps;
  std::optional<double> stop_fa;
  bool eps_relative = false;
  std::string stats_path;
};

void apply_overrides(UnlearnConfig& u, const UnlearnOptions& o) {
  if (o.steps) u.steps = *o.steps;
  if (o.eps) u.eps = *o.eps;
  if (o.stop_fa) u.stop_fa = *o.stop_fa;
  if (o.eps_relative) u.eps_relative = true;
}

int cmd_unlearn(const CommonOptions& co, const UnlearnOptions& o) {
  const ExperimentConfig c = resolve_config(co);
  const bool full = o.grid == "full";
  const auto objectives = objectives_from(full ? "all" : o.objective);
  const auto modes = modes_from(full ? "all" : o.enforce);

  std::ofstream stats;
  if (!o.stats_path.empty()) {
    stats.open(o.stats_path, std::ios::trunc);
    if (!stats) throw std::runtime_error("cannot write " + o.stats_path);
  }

  std::printf("%-6s %-4s %-16s %6s %7s %7s %7s %7s %8s\n", "seed", "obj", "mode", "steps", "FA", "RA",
              "RS", "RScache", "vuln");
  int status = 0;
  for (std::uint64_t seed : c.seeds) {
    const LoadedSeed s = load_seed(c, seed);
    for (Objective obj : objectives) {
      for (Enforcement mode : modes) {
        UnlearnConfig u = c.unlearn_for(seed);
        u.objective = obj;
        u.enforcement = mode;
        apply_overrides(u, o);
        StepObserver observer;
        if (stats.is_open()) {
          observer = [&](std::size_t step, const ConstrainedUpdate& cu) {
            for (const EnforcementStats& st : cu.stats)
              stats << json{{"seed", seed},
                            {"objective", to_string(obj)},
                            {"enforcement", to_string(mode)},
                            {"step", step},
                            {"layer", st.layer},
                            {"expert", st.expert},
                            {"constraints", st.constraints},
                            {"iterations", st.iterations},
                            {"projections", st.projections},
                            {"violated_initial", st.violated_initial},
                            {"violated_final", st.violated_final},
                            {"initial_max_violation", st.initial_max_violation},
                            {"final_max_violation", st.final_max_violation},
                            {"feasible", st.feasible}}
                           .dump()
                    << "\n";
          };
        }
        RunOutput out = unlearn_run(s.net, s.task, s.cache, u, observer);
        const RunReport& r = out.report;
        const std::string stem = run_stem(r);
        write_json(s.dir / (stem + ".json"),
                   {{"seed", seed}, {"experiment", to_json(c)}, {"report", to_json(r)}});
        write_text(s.dir / (stem + ".csv"), csv_header() + "\n" + csv_row(r) + "\n");
        save_checkpoint(s.dir / (stem + ".gripmoe"), out.net);
        print_warnings(r.warnings, seed);
        if (r.aborted) {
          std::cerr << "seed " << seed << " " << stem << " aborted: " << r.abort_reason << "\n";
          status = 1;
        }
        std::printf("%-6llu %-4s %-16s %6zu %7.3f %7.3f %7.3f %7.3f %8.3f\n",
                    static_cast<unsigned long long>(seed), to_string(obj).c_str(),
                    to_string(mode).c_str(), r.steps_run, r.fa_post, r.ra_post, r.rs_eval.mean_rs,
                    r.rs_cached, r.attack.vulnerability);
      }
    }
    rebuild_runs_csv(s.dir);
  }
  return status;
}

// ---------------------------------------------------------------- sweep-eps

int cmd_sweep_eps(const CommonOptions& co, const UnlearnOptions& o) {
  const ExperimentConfig c = resolve_config(co);
  const std::vector<double> grid{1e-4, 1e-3, 1e-2, 1e-1};
  std::map<double, std::vector<double>> rs_by_eps;
  std::printf("%-6s %-8s %7s %7s %7s %7s %6s\n", "seed", "eps", "RS", "RScache", "FA", "RA", "empty");
  for (std::uint64_t seed : c.seeds) {
    const LoadedSeed s = load_seed(c, seed);
    std::string text = "eps,rs,rs_cached,fa,ra,empty_nullspace_layers,empty_nullspace_experts,warnings\n";
    for (double eps : grid) {
      UnlearnConfig u = c.unlearn_for(seed);
      u.objective = parse_objective(o.objective == "all" ? "gd" : o.objective);
      u.enforcement = Enforcement::ExpertSpecific;
      apply_overrides(u, o);
      u.eps = eps;
      const RunReport r = unlearn_run(s.net, s.task, s.cache, u).report;
      std::vector<bool> layer_empty(c.shape.layers, false);
      std::size_t experts_empty = 0;
      for (const auto& w : r.warnings) {
        if (w.kind != "empty_nullspace") continue;
        layer_empty.at(w.layer) = true;
        ++experts_empty;
      }
      const auto layers_empty = std::count(layer_empty.begin(), layer_empty.end(), true);
      print_warnings(r.warnings, seed);
      std::ostringstream row;
      row.precision(17);
      row << eps << ',' << r.rs_eval.mean_rs << ',' << r.rs_cached << ',' << r.fa_post << ','
          << r.ra_post << ',' << layers_empty << ',' << experts_empty << ',' << r.warnings.size() << "\n";
      text += row.str();
      rs_by_eps[eps].push_back(r.rs_eval.mean_rs);
      std::printf("%-6llu %-8.0e %7.3f %7.3f %7.3f %7.3f %6ld\n", static_cast<unsigned long long>(seed),
                  eps, r.rs_eval.mean_rs, r.rs_cached, r.fa_post, r.ra_post, static_cast<long>(layers_empty));
    }
    write_text(s.dir / "sweep_eps.csv", text);
  }
  std::size_t ordered = 0;
  const auto& lo = rs_by_eps[1e-2];
  const auto& hi = rs_by_eps[1e-1];
  for (std::size_t i = 0; i < lo.size(); ++i) ordered += hi[i] < lo[i];
  std::printf("RS(1e-1) < RS(1e-2) on %zu of %zu seeds\n", ordered, lo.size());
  return 0;
}

// ---------------------------------------------------------------- attack

struct AttackOptions {
  std::string policy;
  std::optional<std::size_t> m;
  bool best_of = false;
};

std::vector<std::vector<SelectionSet>> forget_pre_selections(const fs::path& trace_path,
                                                             const SyntheticTask& task) {
  std::ifstream in(trace_path);
  if (!in) throw std::runtime_error("missing " + trace_path.string() + "; run `grip pretrain` first");
  const SelectionTrace trace = read_trace(in);
  std::map<std::string, std::size_t> row;
  for (std::size_t q = 0; q < trace.num_queries(); ++q) row[trace.query_ids[q]] = q;
  std::vector<std::vector<SelectionSet>> out;
  for (const std::string& id : task.forget_test.ids) {
    auto it = row.find(id);
    if (it == row.end()) throw FormatError(trace_path.string() + " lacks query " + id);
    out.push_back(trace.selections[it->second]);
  }
  return out;
}

int cmd_attack(const CommonOptions& co, const AttackOptions& o) {
  const ExperimentConfig c = resolve_config(co);
  ForcingPolicy policy = c.unlearn.attack;
  if (!o.policy.empty()) policy.mode = parse_forcing_mode(o.policy);
  if (o.m) policy.m = *o.m;
  if (o.best_of) policy.best_of = true;

  std::printf("%-6s %-22s %7s %9s %9s %8s %9s %9s %8s\n", "seed", "checkpoint", "shifted", "normalFA",
              "forcedFA", "vuln", "normalAll", "forcedAll", "vulnAll");
  for (std::uint64_t seed : c.seeds) {
    const LoadedSeed s = load_seed(c, seed);
    const auto pre = forget_pre_selections(s.dir / "pre_trace.csv", s.task);
    std::vector<std::pair<std::string, fs::path>> targets{{"pre", s.dir / "model.gripmoe"}};
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(s.dir))
      if (e.path().extension() == ".gripmoe" && e.path().stem().string().rfind("unlearn_", 0) == 0)
        runs.push_back(e.path());
    std::sort(runs.begin(), runs.end());
    if (runs.empty())
      std::cerr << "seed " << seed << ": no unlearned checkpoints; run `grip unlearn` first\n";
    for (const auto& p : runs) targets.emplace_back(p.stem().string().substr(8), p);

    json results = json::object();
    for (const auto& [name, path] : targets) {
      const MoENetwork net = load_checkpoint(path);
      const AttackResult r =
          forcing_attack(net, s.task.forget_test.inputs, s.task.forget_test.labels, pre, policy);
      results[name] = to_json(r);
      std::printf("%-6llu %-22s %7zu %9.3f %9.3f %8.3f %9.3f %9.3f %8.3f\n",
                  static_cast<unsigned long long>(seed), name.c_str(), r.shifted_queries, r.normal_fa,
                  r.forced_fa, r.vulnerability, r.normal_fa_all, r.forced_fa_all, r.vulnerability_all);
    }
    write_json(s.dir / "attack.json", {{"seed", seed},
                                        {"experiment", to_json(c)},
                                        {"policy", to_string(policy.mode)},
                                        {"m", policy.m},
                                        {"best_of", policy.best_of},
                                        {"results", results}});
  }
  return 0;
}

// ---------------------------------------------------------------- validate

struct Validator {
  std::size_t checked = 0;
  std::size_t failed = 0;

  template <class F>
  void check(const fs::path& path, F&& f) {
    ++checked;
    try {
      f();
      std::printf("ok       %s\n", path.string().c_str());
    } catch (const std::exception& e) {
      ++failed;
      std::printf("invalid  %s: %s\n", path.string().c_str(), e.what());
    }
  }
};

void require_unit(const json& r, const char* key) {
  const double v = r.at(key).get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw FormatError(std::string(key) + " outside [0,1]");
}

void validate_report(const json& j) {
  const json& r = j.at("report");
  j.at("experiment");
  for (const char* k : {"fa_pre", "ra_pre", "fa_post", "ra_post", "rs", "rs_cached"}) require_unit(r, k);
  for (const char* k : {"attack", "cost", "config", "rs_per_layer", "loss_curve", "warnings"})
    if (!r.contains(k)) throw FormatError(std::string("missing key ") + k);
  const double v = r.at("attack").at("vulnerability").get<double>();
  if (!std::isfinite(v) || v < 0.0) throw FormatError("vulnerability not finite and nonnegative");
}

void validate_runs_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) throw FormatError("header mismatch");
  while (std::getline(in, line))
    if (!line.empty()) report_from_csv_row(line);
}

int cmd_validate(const CommonOptions& co) {
  const ExperimentConfig c = resolve_config(co);
  if (!fs::is_directory(c.output_dir)) throw std::runtime_error("no output directory " + c.output_dir.string());
  Validator v;
  for (std::uint64_t seed : c.seeds) {
    const fs::path dir = seed_dir(c, seed);
    std::optional<MoENetwork> net;
    v.check(dir / "model.gripmoe", [&] {
      net = load_checkpoint(dir / "model.gripmoe");
      net->validate();
    });
    v.check(dir / "retain.gripcach", [&] {
      const RetainCache cache = load_cache(dir / "retain.gripcach");
      cache.validate();
      if (net && (cache.layers != net->layers.size() || cache.dim != net->shape().dim ||
                  cache.experts != net->shape().experts || cache.k != net->shape().k))
        throw FormatError("cache dimensions disagree with model.gripmoe");
    });
    v.check(dir / "pre_trace.csv", [&] {
      std::ifstream in(dir / "pre_trace.csv");
      if (!in) throw std::runtime_error("missing");
      const SelectionTrace t = read_trace(in);
      t.validate();
      if (net && t.num_layers() != net->layers.size()) throw FormatError("layer count disagrees with model");
    });
    v.check(dir / "pretrain.json", [&] { read_json(dir / "pretrain.json").at("fixture"); });
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      const std::string name = p.filename().string();
      if (name.rfind("unlearn_", 0) == 0 && p.extension() == ".json")
        v.check(p, [&] { validate_report(read_json(p)); });
      else if (name.rfind("unlearn_", 0) == 0 && p.extension() == ".gripmoe")
        v.check(p, [&] { load_checkpoint(p).validate(); });
      else if (name == "runs.csv")
        v.check(p, [&] { validate_runs_csv(p); });
      else if (name == "attack.json")
        v.check(p, [&] { read_json(p).at("results"); });
    }
  }
  std::printf("%zu artifacts checked, %zu invalid\n", v.checked, v.failed);
  return v.failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------- report

int cmd_report(const CommonOptions& co, double fa_tolerance) {
  const ExperimentConfig c = resolve_config(co);
  // [objective][mode][seed]
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, RunReport>>> runs;
  for (std::uint64_t seed : c.seeds) {
    const fs::path p = seed_dir(c, seed) / "runs.csv";
    if (!fs::exists(p)) {
      std::cerr << "seed " << seed << ": no runs.csv; run `grip unlearn` first\n";
      continue;
    }
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      RunReport r = report_from_csv_row(line);
      runs[to_string(r.config.objective)][to_string(r.config.enforcement)][r.config.seed] = r;
    }
  }
  if (runs.empty()) throw std::runtime_error("no runs found under " + c.output_dir.string());

  std::string csv = "objective,enforcement,seeds,fa_post,ra_post,rs,rs_cached,vulnerability\n";
  json summary = {{"experiment", to_json(c)}, {"fa_tolerance", fa_tolerance},
                  {"means", json::array()}, {"paired", json::array()}};
  std::printf("%-4s %-16s %5s %7s %7s %7s %7s %8s\n", "obj", "mode", "seeds", "FA", "RA", "RS", "RScache",
              "vuln");
  for (const auto& [obj, by_mode] : runs) {
    for (const auto& [mode, by_seed] : by_mode) {
      double fa = 0, ra = 0, rs = 0, rsc = 0, vu = 0;
      for (const auto& [seed, r] : by_seed) {
        fa += r.fa_post;
        ra += r.ra_post;
        rs += r.rs_eval.mean_rs;
        rsc += r.rs_cached;
        vu += r.attack.vulnerability;
      }
      const double n = static_cast<double>(by_seed.size());
      std::ostringstream row;
      row.precision(6);
      row << obj << ',' << mode << ',' << by_seed.size() << ',' << fa / n << ',' << ra / n << ',' << rs / n
          << ',' << rsc / n << ',' << vu / n << "\n";
      csv += row.str();
      summary["means"].push_back({{"objective", obj}, {"enforcement", mode}, {"seeds", by_seed.size()},
                                  {"fa_post", fa / n}, {"ra_post", ra / n}, {"rs", rs / n},
                                  {"rs_cached", rsc / n}, {"vulnerability", vu / n}});
      std::printf("%-4s %-16s %5zu %7.3f %7.3f %7.3f %7.3f %8.3f\n", obj.c_str(), mode.c_str(), by_seed.size(),
                  fa / n, ra / n, rs / n, rsc / n, vu / n);
    }
  }

  std::printf("\npaired against none (matched FA within %.2f)\n", fa_tolerance);
  std::printf("%-4s %-16s %5s %7s %7s %7s %5s %8s %9s %8s\n", "obj", "mode", "pairs", "matched", "RSwins",
              "RAwins", "wins", "p", "vulnWins", "p");
  for (const auto& [obj, by_mode] : runs) {
    auto none_it = by_mode.find("none");
    if (none_it == by_mode.end()) continue;
    for (const auto& [mode, by_seed] : by_mode) {
      if (mode == "none") continue;
      std::vector<RunReport> a, b;
      for (const auto& [seed, r] : by_seed) {
        auto n = none_it->second.find(seed);
        if (n == none_it->second.end()) continue;
        a.push_back(n->second);
        b.push_back(r);
      }
      const PairedComparison pc = compare_paired(a, b, fa_tolerance);
      summary["paired"].push_back(to_json(pc));
      std::printf("%-4s %-16s %5zu %7zu %7zu %7zu %5zu %8.4f %9zu %8.4f\n", obj.c_str(), mode.c_str(),
                  pc.pairs, pc.matched, pc.rs_wins, pc.ra_wins, pc.wins, pc.p_value, pc.vulnerability_wins,
                  pc.vulnerability_p_value);
    }
  }
  ensure_dir(c.output_dir);
  write_text(c.output_dir / "summary.csv", csv);
  write_json(c.output_dir / "summary.json", summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRIP: routing-preserving unlearning for mixture-of-experts networks"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("-s,--seed", common.seeds, "seed (repeatable; replaces the config's list)");
    sub->add_option("-o,--output", common.output_dir, "output directory (else GRIP_OUTPUT_DIR, else config)");
    sub->add_option("-t,--threads", common.threads, "OpenMP threads (else GRIP_THREADS, else config)")
        ->check(CLI::NonNegativeNumber);
  };
  const std::vector<std::string> objective_names{"gd", "kl", "npo", "rmu", "all"};
  const std::vector<std::string> mode_names{"none", "expert_specific", "full_null", "ptc", "all"};

  UnlearnOptions uo;
  auto add_unlearn = [&](CLI::App* sub) {
    sub->add_option("--objective", uo.objective, "gd, kl, npo, rmu or all")->check(CLI::IsMember(objective_names));
    sub->add_option("--steps", uo.steps, "unlearning steps K")->check(CLI::PositiveNumber);
    sub->add_option("--eps", uo.eps, "null-space eigenvalue threshold")->check(CLI::NonNegativeNumber);
    sub->add_option("--stop-fa", uo.stop_fa, "stop once forget-train accuracy reaches this (<0 disables)");
    sub->add_flag("--eps-relative", uo.eps_relative, "compare eigenvalues against eps times the largest one");
  };

  auto* pre = app.add_subcommand("pretrain", "train reference networks; write checkpoint, retain cache, trace");
  add_common(pre);

  auto* unl = app.add_subcommand("unlearn", "run objective x enforcement cells on pretrained artifacts");
  add_common(unl);
  add_unlearn(unl);
  unl->add_option("--enforce", uo.enforce, "none, expert_specific, full_null, ptc or all")
      ->check(CLI::IsMember(mode_names));
  unl->add_option("--grid", uo.grid, "'full' runs all 4 objectives x 4 modes")->check(CLI::IsMember({"full"}));
  unl->add_option("--stats", uo.stats_path, "write per-step enforcement statistics as JSON lines");

  auto* sweep = app.add_subcommand("sweep-eps", "expert-specific runs at eps in {1e-4,1e-3,1e-2,1e-1}");
  add_common(sweep);
  add_unlearn(sweep);

  AttackOptions ao;
  auto* att = app.add_subcommand("attack", "expert-forcing attack on pre and unlearned checkpoints");
  add_common(att);
  att->add_option("--policy", ao.policy, "pre_selection or top_m_nonselected")
      ->check(CLI::IsMember({"pre_selection", "top_m_nonselected"}));
  att->add_option("--m", ao.m, "experts forced by top_m_nonselected")->check(CLI::PositiveNumber);
  att->add_flag("--best-of", ao.best_of, "probe forced experts one at a time");

  auto* val = app.add_subcommand("validate", "check existing artifacts without computing");
  add_common(val);

  double fa_tolerance = 0.05;
  auto* rep = app.add_subcommand("report", "aggregate runs.csv files into summary tables");
  add_common(rep);
  rep->add_option("--fa-tolerance", fa_tolerance, "FA slack for a matched pair")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pre) return cmd_pretrain(common);
    if (*unl) return cmd_unlearn(common, uo);
    if (*sweep) return cmd_sweep_eps(common, uo);
    if (*att) return cmd_attack(common, ao);
    if (*val) return cmd_validate(common);
    if (*rep) return cmd_report(common, fa_tolerance);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
