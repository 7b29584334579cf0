// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "grip/errors.hpp"

namespace grip {

Dataset concat(const Dataset& a, const Dataset& b) {
  GRIP_REQUIRE(a.size() == 0 || b.size() == 0 || a.inputs.cols() == b.inputs.cols(),
               "concat: datasets have different dimensions");
  const std::size_t cols = a.size() ? a.inputs.cols() : b.inputs.cols();
  std::vector<double> data = a.inputs.data();
  data.insert(data.end(), b.inputs.data().begin(), b.inputs.data().end());
  Dataset out{Matrix(a.size() + b.size(), cols, std::move(data)), a.labels, a.ids};
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Vector gaussian(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

Vector unit(Vector v) {
  const double n = norm(v);
  GRIP_REQUIRE(n > 0.0, "cannot normalise a zero vector");
  for (auto& x : v) x /= n;
  return v;
}

// d×m matrix with orthonormal columns.
Matrix random_embedding(std::mt19937_64& rng, std::size_t d, std::size_t m) {
  std::vector<Vector> cols;
  while (cols.size() < m) {
    Vector v = gaussian(rng, d);
    for (const auto& c : cols) axpy(-dot(v, c), c, v);
    if (norm(v) < 1e-8) continue;
    cols.push_back(unit(std::move(v)));
  }
  return Matrix::from_columns(cols);
}

Dataset sample_split(std::mt19937_64& rng, const Matrix& embed, const std::vector<Vector>& centers,
                     const std::vector<int>& labels, std::size_t n, double radius,
                     const std::string& prefix) {
  const std::size_t m = embed.cols();
  const double scale = radius / std::sqrt(static_cast<double>(m));
  Dataset ds{Matrix(n, embed.rows()), {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % centers.size();
    Vector z = gaussian(rng, m);
    for (std::size_t a = 0; a < m; ++a) z[a] = centers[c][a] + scale * z[a];
    const Vector x = matvec(embed, z);
    std::copy(x.begin(), x.end(), ds.inputs.row(i).begin());
    ds.labels.push_back(labels[c]);
    ds.ids.push_back(prefix + std::to_string(i));
  }
  return ds;
}

}  // namespace

SyntheticTask generate_task(const TaskConfig& cfg) {
  GRIP_REQUIRE(cfg.dim >= 1 && cfg.classes >= 2, "task: need dim >= 1 and classes >= 2");
  GRIP_REQUIRE(cfg.latent_dim <= cfg.dim, "task: latent_dim exceeds dim");
  GRIP_REQUIRE(cfg.retain_clusters >= 1 && cfg.forget_clusters >= 1, "task: need clusters");
  GRIP_REQUIRE(cfg.cluster_radius > 0.0 && cfg.center_norm > 0.0, "task: radius and norm must be positive");
  GRIP_REQUIRE(cfg.forget_alignment >= 0.0 && cfg.forget_alignment <= 1.0,
               "task: forget_alignment must be in [0, 1]");
  const std::size_t m = cfg.latent_dim == 0 ? cfg.dim : cfg.latent_dim;
  std::seed_seq seq{cfg.seed, std::uint64_t{0x7461736b}};
  std::mt19937_64 rng(seq);
  const Matrix embed = random_embedding(rng, cfg.dim, m);
  const Vector forget_dir = unit(gaussian(rng, m));

  const double min_dist = cfg.min_separation * cfg.cluster_radius;
  std::vector<Vector> centers;  // retain first, then forget
  const std::size_t total = cfg.retain_clusters + cfg.forget_clusters;
  for (std::size_t c = 0; c < total; ++c) {
    const bool forget = c >= cfg.retain_clusters;
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      Vector u = unit(gaussian(rng, m));
      if (forget) {
        for (std::size_t a = 0; a < m; ++a)
          u[a] = cfg.forget_alignment * forget_dir[a] + (1.0 - cfg.forget_alignment) * u[a];
        u = unit(std::move(u));
      }
      for (auto& x : u) x *= cfg.center_norm;
      placed = std::all_of(centers.begin(), centers.end(), [&](const Vector& o) {
        Vector diff = u;
        axpy(-1.0, o, diff);
        return norm(diff) >= min_dist;
      });
      if (placed) centers.push_back(std::move(u));
    }
    if (!placed)
      throw ContractViolation("task: cannot place " + std::to_string(total) +
                              " centers with the requested separation");
  }

  SyntheticTask task;
  task.config = cfg;
  std::vector<Vector> rc(centers.begin(), centers.begin() + cfg.retain_clusters);
  std::vector<Vector> fc(centers.begin() + cfg.retain_clusters, centers.end());
  std::vector<int> rl, fl;
  for (std::size_t c = 0; c < rc.size(); ++c) rl.push_back(static_cast<int>(c % cfg.classes));
  for (std::size_t c = 0; c < fc.size(); ++c)
    fl.push_back(static_cast<int>((c * 3 + 1) % cfg.classes));

  task.min_center_distance = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < centers.size(); ++a)
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      Vector diff = centers[a];
      axpy(-1.0, centers[b], diff);
      task.min_center_distance = std::min(task.min_center_distance, norm(diff));
    }

  auto embed_all = [&](const std::vector<Vector>& cs) {
    Matrix out(cs.size(), cfg.dim);
    for (std::size_t c = 0; c < cs.size(); ++c) {
      const Vector x = matvec(embed, cs[c]);
      std::copy(x.begin(), x.end(), out.row(c).begin());
    }
    return out;
  };
  task.retain_centers = embed_all(rc);
  task.forget_centers = embed_all(fc);
  task.retain_train = sample_split(rng, embed, rc, rl, cfg.retain_train, cfg.cluster_radius, "rtr");
  task.forget_train = sample_split(rng, embed, fc, fl, cfg.forget_train, cfg.cluster_radius, "ftr");
  task.retain_test = sample_split(rng, embed, rc, rl, cfg.retain_test, cfg.cluster_radius, "rte");
  task.forget_test = sample_split(rng, embed, fc, fl, cfg.forget_test, cfg.cluster_radius, "fte");
  return task;
}

double accuracy(const MoENetwork& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
#pragma omp parallel for reduction(+ : hits) schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(data.size()); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const Tape tape = forward_tape(net, data.inputs.row(i));
    hits += static_cast<int>(argmax(tape.logits)) == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

// Every parameter array paired with its gradient array.
template <typename F>
void zip_params(MoENetwork& net, NetworkGradients& g, F&& f) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    f(net.layers[l].router.theta.data(), g.router[l].data());
    for (std::size_t j = 0; j < net.layers[l].experts.size(); ++j) {
      f(net.layers[l].experts[j].weight.data(), g.expert_weight[l][j].data());
      f(net.layers[l].experts[j].bias, g.expert_bias[l][j]);
    }
  }
  f(net.readout.weight.data(), g.readout_weight.data());
  f(net.readout.bias, g.readout_bias);
}

template <typename F>
void zip_grads(NetworkGradients& a, NetworkGradients& b, NetworkGradients& c, F&& f) {
  for (std::size_t l = 0; l < a.router.size(); ++l) {
    f(a.router[l].data(), b.router[l].data(), c.router[l].data());
    for (std::size_t j = 0; j < a.expert_weight[l].size(); ++j) {
      f(a.expert_weight[l][j].data(), b.expert_weight[l][j].data(), c.expert_weight[l][j].data());
      f(a.expert_bias[l][j], b.expert_bias[l][j], c.expert_bias[l][j]);
    }
  }
  f(a.readout_weight.data(), b.readout_weight.data(), c.readout_weight.data());
  f(a.readout_bias, b.readout_bias, c.readout_bias);
}

double cross_entropy_grad(const Vector& logits, int label, Vector& dlogits) {
  const Vector lp = log_softmax(logits);
  dlogits.resize(lp.size());
  for (std::size_t c = 0; c < lp.size(); ++c) dlogits[c] = std::exp(lp[c]);
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return -lp[static_cast<std::size_t>(label)];
}

}  // namespace

PretrainResult pretrain(MoENetwork net, const SyntheticTask& task, const PretrainConfig& cfg) {
  GRIP_REQUIRE(cfg.lr > 0.0, "pretrain: lr must be positive");
  const Dataset train = concat(task.retain_train, task.forget_train);
  const double inv_n = 1.0 / static_cast<double>(train.size());
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  NetworkGradients m = NetworkGradients::zeros_like(net);
  NetworkGradients v = NetworkGradients::zeros_like(net);

  PretrainResult out{std::move(net), {}, 0.0, 0};
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    BatchGradients bg = batch_gradients(
        out.net, train.inputs,
        [&](std::size_t i, const Tape& tape, Vector& dl, std::vector<Vector>&) {
          return cross_entropy_grad(tape.logits, train.labels[i], dl);
        });
    bg.grads *= inv_n;
    out.loss_curve.push_back(bg.loss * inv_n);
    if (!std::isfinite(bg.loss)) throw NumericalError("pretrain: loss became non-finite");
    if (cfg.target_loss > 0.0 && out.loss_curve.back() < cfg.target_loss) break;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    zip_grads(bg.grads, m, v, [&](std::vector<double>& g, std::vector<double>& mm, std::vector<double>& vv) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
        g[i] = (mm[i] / c1) / (std::sqrt(vv[i] / c2) + adam_eps);
      }
    });
    zip_params(out.net, bg.grads, [&](std::vector<double>& p, const std::vector<double>& g) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.lr * g[i];
    });
    out.steps_run = step;
  }
  out.net.validate();
  out.train_accuracy = accuracy(out.net, train);
  if (cfg.min_accuracy > 0.0 && out.train_accuracy < cfg.min_accuracy) {
    std::ostringstream msg;
    msg << "pretrain: seed rejected, train accuracy " << out.train_accuracy << " < "
        << cfg.min_accuracy;
    throw FixtureError(msg.str());
  }
  return out;
}

bool SelectionCensus::has_forget_specialist(double ratio) const {
  for (std::size_t l = 0; l < forget_frequency.size(); ++l)
    for (std::size_t j = 0; j < forget_frequency[l].size(); ++j)
      if (forget_frequency[l][j] > 0.0 &&
          forget_frequency[l][j] >= ratio * retain_frequency[l][j])
        return true;
  return false;
}

SelectionCensus selection_census(const MoENetwork& net, const SyntheticTask& task) {
  const NetworkShape shape = net.shape();
  auto freq = [&](const Dataset& ds) {
    std::vector<std::vector<double>> f(shape.layers, std::vector<double>(shape.experts, 0.0));
    const SelectionTrace t = record_trace(net, ds.inputs, ds.ids, "census");
    for (const auto& q : t.selections)
      for (std::size_t l = 0; l < q.size(); ++l)
        for (auto e : q[l]) f[l][e] += 1.0 / static_cast<double>(ds.size());
    return f;
  };
  return {freq(concat(task.forget_train, task.forget_test)),
          freq(concat(task.retain_train, task.retain_test))};
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::GD: return "gd";
    case Objective::KL: return "kl";
    case Objective::NPO: return "npo";
    case Objective::RMU: return "rmu";
  }
  return "?";
}

std::string to_string(Enforcement e) {
  switch (e) {
    case Enforcement::None: return "none";
    case Enforcement::ExpertSpecific: return "expert_specific";
    case Enforcement::FullNull: return "full_null";
    case Enforcement::PTC: return "ptc";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  for (auto o : {Objective::GD, Objective::KL, Objective::NPO, Objective::RMU})
    if (to_string(o) == s) return o;
  throw ContractViolation("unknown objective '" + s + "'");
}

Enforcement parse_enforcement(const std::string& s) {
  for (auto e : {Enforcement::None, Enforcement::ExpertSpecific, Enforcement::FullNull, Enforcement::PTC})
    if (to_string(e) == s) return e;
  throw ContractViolation("unknown enforcement '" + s + "'");
}

namespace {

std::size_t rmu_layer_of(const MoENetwork& net, const UnlearnConfig& cfg) {
  return std::min(cfg.rmu_layer, net.layers.size() - 1);
}

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) { return std::exp(log_sigmoid(z)); }

}  // namespace

ObjectiveReference make_reference(const MoENetwork& ref_net, const SyntheticTask& task,
                                  const UnlearnConfig& cfg) {
  ObjectiveReference ref;
  const std::size_t lr = rmu_layer_of(ref_net, cfg);
  for (std::size_t i = 0; i < task.retain_train.size(); ++i) {
    const Tape t = forward_tape(ref_net, task.retain_train.inputs.row(i));
    ref.retain_logits.push_back(t.logits);
    ref.retain_hidden.push_back(t.inputs[lr + 1]);
  }
  for (std::size_t i = 0; i < task.forget_train.size(); ++i) {
    const Tape t = forward_tape(ref_net, task.forget_train.inputs.row(i));
    ref.forget_true_logprob.push_back(
        log_softmax(t.logits)[static_cast<std::size_t>(task.forget_train.labels[i])]);
  }
  std::seed_seq seq{cfg.seed, std::uint64_t{0x726d75}};
  std::mt19937_64 rng(seq);
  ref.rmu_direction = unit(gaussian(rng, ref_net.shape().dim));
  return ref;
}

ObjectiveValue objective_grad(const MoENetwork& net, const SyntheticTask& task,
                              const UnlearnConfig& cfg, const ObjectiveReference* ref) {
  const Dataset& forget = task.forget_train;
  const Dataset& retain = task.retain_train;
  GRIP_REQUIRE(forget.size() > 0, "objective: empty forget set");
  const bool needs_ref = cfg.objective != Objective::GD;
  GRIP_REQUIRE(!needs_ref || ref != nullptr, "objective: " + to_string(cfg.objective) +
                                                 " needs reference quantities");
  const double inv_f = 1.0 / static_cast<double>(forget.size());
  const double inv_r = retain.size() ? 1.0 / static_cast<double>(retain.size()) : 0.0;
  const std::size_t hl = rmu_layer_of(net, cfg);

  SampleLoss forget_loss;
  SampleLoss retain_loss;
  switch (cfg.objective) {
    case Objective::GD:
    case Objective::KL:
      forget_loss = [&](std::size_t i, const Tape& t, Vector& dl, std::vector<Vector>&) {
        const double ce = cross_entropy_grad(t.logits, forget.labels[i], dl);
        for (auto& x : dl) x = -x;
        return -ce;
      };
      break;
    case Objective::NPO:
      GRIP_REQUIRE(cfg.npo_beta > 0.0, "objective: npo_beta must be positive");
      forget_loss = [&](std::size_t i, const Tape& t, Vector& dl, std::vector<Vector>&) {
        const std::size_t y = static_cast<std::size_t>(forget.labels[i]);
        const Vector lp = log_softmax(t.logits);
        const double r = lp[y] - ref->forget_true_logprob[i];
        const double b = cfg.npo_beta;
        const double dr = 2.0 * sigmoid(b * r);
        dl.resize(lp.size());
        for (std::size_t c = 0; c < lp.size(); ++c) dl[c] = -dr * std::exp(lp[c]);
        dl[y] += dr;
        return -(2.0 / b) * log_sigmoid(-b * r);
      };
      break;
    case Objective::RMU:
      forget_loss = [&](std::size_t, const Tape& t, Vector& dl, std::vector<Vector>& hg) {
        dl.assign(t.logits.size(), 0.0);
        const Vector& h = t.inputs[hl + 1];
        Vector g(h.size());
        double loss = 0.0;
        for (std::size_t a = 0; a < h.size(); ++a) {
          const double diff = h[a] - cfg.rmu_coeff * ref->rmu_direction[a];
          loss += diff * diff;
          g[a] = 2.0 * diff;
        }
        hg.assign(net.layers.size(), Vector{});
        hg[hl] = std::move(g);
        return loss;
      };
      retain_loss = [&](std::size_t i, const Tape& t, Vector& dl, std::vector<Vector>& hg) {
        dl.assign(t.logits.size(), 0.0);
        const Vector& h = t.inputs[hl + 1];
        Vector g(h.size());
        double loss = 0.0;
        for (std::size_t a = 0; a < h.size(); ++a) {
          const double diff = h[a] - ref->retain_hidden[i][a];
          loss += diff * diff;
          g[a] = 2.0 * diff;
        }
        hg.assign(net.layers.size(), Vector{});
        hg[hl] = std::move(g);
        return loss;
      };
      break;
  }
  if (cfg.objective == Objective::KL) {
    retain_loss = [&](std::size_t i, const Tape& t, Vector& dl, std::vector<Vector>&) {
      const Vector lp = log_softmax(t.logits);
      const Vector lq = log_softmax(ref->retain_logits[i]);
      double kl = 0.0;
      for (std::size_t c = 0; c < lp.size(); ++c) kl += std::exp(lp[c]) * (lp[c] - lq[c]);
      dl.resize(lp.size());
      for (std::size_t c = 0; c < lp.size(); ++c)
        dl[c] = std::exp(lp[c]) * ((lp[c] - lq[c]) - kl);
      return kl;
    };
  }

  BatchGradients fg = batch_gradients(net, forget.inputs, forget_loss);
  fg.grads *= inv_f;
  ObjectiveValue out{fg.loss * inv_f, std::move(fg.grads)};
  if (retain_loss && retain.size() > 0) {
    const double w = cfg.objective == Objective::KL ? cfg.kl_weight : cfg.rmu_retain_weight;
    BatchGradients rg = batch_gradients(net, retain.inputs, retain_loss);
    rg.grads *= w * inv_r;
    out.loss += w * inv_r * rg.loss;
    out.grads += rg.grads;
  }
  return out;
}

SelectionTrace eval_trace(const MoENetwork& net, const SyntheticTask& task, std::string tag) {
  const Dataset q = concat(task.retain_test, task.forget_test);
  return record_trace(net, q.inputs, q.ids, std::move(tag));
}

namespace {

double cached_rs(const MoENetwork& net, const SyntheticTask& task, const RetainCache& cache) {
  const SelectionTrace post = record_trace(net, task.retain_train.inputs, task.retain_train.ids, "post");
  double total = 0.0;
  for (std::size_t i = 0; i < post.num_queries(); ++i)
    for (std::size_t l = 0; l < cache.layers; ++l)
      total += jaccard(cache.selections[l][i], post.selections[i][l]);
  return total / static_cast<double>(post.num_queries() * cache.layers);
}

double mean_rows(const std::vector<std::vector<double>>& m, std::size_t begin, std::size_t end) {
  if (begin >= end) return 1.0;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t q = begin; q < end; ++q)
    for (double v : m[q]) {
      s += v;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 1.0;
}

bool grads_finite(const NetworkGradients& g) { return std::isfinite(g.max_abs()); }

double router_norm(const NetworkGradients& g) {
  double s = 0.0;
  for (const auto& r : g.router)
    for (double x : r.data()) s += x * x;
  return std::sqrt(s);
}

double grad_norm(const NetworkGradients& g, bool include_router = true) {
  double s = 0.0;
  auto add = [&](const std::vector<double>& v) {
    for (double x : v) s += x * x;
  };
  for (std::size_t l = 0; l < g.router.size(); ++l) {
    if (include_router) add(g.router[l].data());
    for (std::size_t j = 0; j < g.expert_weight[l].size(); ++j) {
      add(g.expert_weight[l][j].data());
      add(g.expert_bias[l][j]);
    }
  }
  add(g.readout_weight.data());
  add(g.readout_bias);
  return std::sqrt(s);
}

}  // namespace

RunOutput unlearn_run(const MoENetwork& pretrained, const SyntheticTask& task,
                      const RetainCache& cache, const UnlearnConfig& cfg,
                      const StepObserver& observer) {
  GRIP_REQUIRE(cfg.lr > 0.0, "unlearn: lr must be positive");
  GRIP_REQUIRE(cfg.expert_momentum >= 0.0 && cfg.expert_momentum < 1.0,
               "unlearn: expert_momentum must be in [0, 1)");
  cache.validate();
  GRIP_REQUIRE(cache.samples == task.retain_train.size(),
               "unlearn: cache does not cover the retain training set");
  const auto t_start = Clock::now();
  const NetworkShape shape = pretrained.shape();

  RunOutput out{{}, pretrained};
  RunReport& rep = out.report;
  rep.config = cfg;
  rep.fa_pre = accuracy(pretrained, task.forget_test);
  rep.ra_pre = accuracy(pretrained, task.retain_test);
  const SelectionTrace pre = eval_trace(pretrained, task, "pre");
  const ObjectiveReference ref = make_reference(pretrained, task, cfg);

  ConstraintBank bank;
  GlobalProjectors global;
  {
    const auto t0 = Clock::now();
    if (cfg.enforcement == Enforcement::ExpertSpecific) {
      bank = build_constraint_bank(cache, cfg.eps, cfg.eps_relative);
      rep.cost.constraint_build_flops = bank.build_flops;
      rep.warnings = bank.warnings;
    } else if (cfg.enforcement == Enforcement::FullNull) {
      global = build_global_projectors(cache, cfg.eps, cfg.eps_relative);
      rep.cost.constraint_build_flops = global.build_flops;
      rep.warnings = global.warnings;
    }
    rep.cost.build_seconds = seconds_since(t0);
  }

  KaczmarzConfig kcfg = cfg.kaczmarz;
  kcfg.seed = cfg.seed;
  std::vector<Matrix> accumulated(shape.layers, Matrix(shape.experts, shape.dim));
  NetworkGradients velocity = NetworkGradients::zeros_like(out.net);
  const double samples_per_step =
      static_cast<double>(task.forget_train.size()) +
      (cfg.objective == Objective::KL || cfg.objective == Objective::RMU
           ? static_cast<double>(task.retain_train.size())
           : 0.0);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cfg.stop_fa >= 0.0 && accuracy(out.net, task.forget_train) <= cfg.stop_fa) break;
    const auto t0 = Clock::now();
    ObjectiveValue ov = objective_grad(out.net, task, cfg, &ref);
    rep.cost.step_seconds += seconds_since(t0);
    rep.cost.training_flops += 3.0 * forward_cost(shape) * samples_per_step;
    rep.loss_curve.push_back(ov.loss);
    if (!std::isfinite(ov.loss) || !grads_finite(ov.grads)) {
      rep.aborted = true;
      rep.abort_reason = "non-finite loss or gradient at step " + std::to_string(step);
      break;
    }
    if (cfg.grad_clip > 0.0 && !cfg.clip_per_group) {
      const double n = grad_norm(ov.grads);
      if (n > cfg.grad_clip) ov.grads *= cfg.grad_clip / n;
    } else if (cfg.grad_clip > 0.0) {
      // Routers and the remaining parameters are clipped separately so a
      // router gradient that enforcement discards cannot shrink expert steps.
      const double nr = router_norm(ov.grads);
      if (nr > cfg.grad_clip)
        for (auto& r : ov.grads.router) r *= cfg.grad_clip / nr;
      const double ne = grad_norm(ov.grads, false);
      if (ne > cfg.grad_clip) {
        std::vector<Matrix> keep = ov.grads.router;
        ov.grads *= cfg.grad_clip / ne;
        ov.grads.router = std::move(keep);
      }
    }

    std::vector<Matrix> updates;
    for (std::size_t l = 0; l < shape.layers; ++l) {
      Matrix u = ov.grads.router[l];
      u *= -cfg.lr * cfg.router_lr_scale;
      updates.push_back(std::move(u));
    }
    const auto te = Clock::now();
    if (cfg.enforcement == Enforcement::ExpertSpecific) {
      ConstrainedUpdate cu = constrain_router_gradients(updates, bank, kcfg, &accumulated, step);
      rep.cost.constraint_step_flops += cu.flops;
      if (!cu.all_feasible) ++rep.infeasible_enforcements;
      bool shrunk = false;
      for (const auto& s : cu.stats) {
        rep.kaczmarz_projections += s.projections;
        shrunk = shrunk || s.shrink_factor < 1.0;
      }
      if (shrunk) ++rep.shrunk_enforcements;
      if (observer) observer(step, cu);
      updates = std::move(cu.rows);
      if (cfg.selection_guard && cfg.update_routers) {
        const GuardResult g = guard_cached_selections(updates, cache, accumulated);
        rep.guard_halvings += g.halvings;
        rep.guard_zeroed_layers += g.zeroed_layers;
        rep.cost.constraint_step_flops += g.flops;
      }
    } else if (cfg.enforcement == Enforcement::FullNull) {
      double flops = 0.0;
      updates = global_nullspace_constrain(updates, global, &flops);
      rep.cost.constraint_step_flops += flops;
    }
    rep.cost.enforce_seconds += seconds_since(te);

    if (cfg.update_routers) {
      for (std::size_t l = 0; l < shape.layers; ++l) {
        out.net.layers[l].router.theta += updates[l];
        accumulated[l] += updates[l];
      }
    }
    velocity *= cfg.expert_momentum;
    velocity += ov.grads;
    apply_update(out.net, velocity, cfg.lr, {false, cfg.update_experts, cfg.update_readout});
    if (!out.net.layers.empty() && !std::isfinite(velocity.max_abs())) {
      rep.aborted = true;
      rep.abort_reason = "parameters became non-finite at step " + std::to_string(step);
      ++rep.steps_run;
      break;
    }
    ++rep.steps_run;
    if (cfg.track_cached_rs)
      rep.min_cached_rs_during_run = std::min(rep.min_cached_rs_during_run, cached_rs(out.net, task, cache));
  }

  if (cfg.enforcement == Enforcement::PTC && !rep.aborted) {
    const auto t0 = Clock::now();
    try {
      CorrectedNetwork corrected =
          apply_ptc(out.net, cache, task.retain_train.inputs, {cfg.lambda, cfg.ptc_sequential});
      out.net = std::move(corrected.net);
      rep.cost.ptc_flops = corrected.result.flops;
      rep.ptc = std::move(corrected.result);
    } catch (const NumericalError& e) {
      rep.aborted = true;
      rep.abort_reason = std::string("correction failed: ") + e.what();
    }
    rep.cost.correction_seconds = seconds_since(t0);
  }

  rep.fa_post = accuracy(out.net, task.forget_test);
  rep.ra_post = accuracy(out.net, task.retain_test);
  rep.forget_train_acc_post = accuracy(out.net, task.forget_train);
  const SelectionTrace post = eval_trace(out.net, task, "post");
  rep.rs_eval = routing_stability(pre, post);
  rep.rs_retain = mean_rows(rep.rs_eval.per_query, 0, task.retain_test.size());
  rep.rs_forget = mean_rows(rep.rs_eval.per_query, task.retain_test.size(), post.num_queries());
  rep.rs_cached = cached_rs(out.net, task, cache);
  rep.drift = drift_report(pre, post);

  ForcingPolicy policy = cfg.attack;
  policy.m = std::max<std::size_t>(1, std::min(policy.m, shape.experts - shape.k));
  const std::vector<std::vector<SelectionSet>> pre_forget(
      pre.selections.begin() + static_cast<std::ptrdiff_t>(task.retain_test.size()), pre.selections.end());
  rep.attack = forcing_attack(out.net, task.forget_test.inputs, task.forget_test.labels, pre_forget, policy);
  rep.cost.total_seconds = seconds_since(t_start);
  return out;
}

nlohmann::json to_json(const UnlearnConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"enforcement", to_string(c.enforcement)},
          {"steps", c.steps},
          {"lr", c.lr},
          {"router_lr_scale", c.router_lr_scale},
          {"expert_momentum", c.expert_momentum},
          {"grad_clip", c.grad_clip},
          {"clip_per_group", c.clip_per_group},
          {"kl_weight", c.kl_weight},
          {"npo_beta", c.npo_beta},
          {"rmu_coeff", c.rmu_coeff},
          {"rmu_retain_weight", c.rmu_retain_weight},
          {"rmu_layer", c.rmu_layer},
          {"eps", c.eps},
          {"eps_relative", c.eps_relative},
          {"lambda", c.lambda},
          {"ptc_sequential", c.ptc_sequential},
          {"k_max", c.kaczmarz.k_max},
          {"budget_per_violation", c.kaczmarz.budget_per_violation},
          {"margin_slack", c.kaczmarz.margin_slack},
          {"check_every", c.kaczmarz.check_every},
          {"halfspace_rows", c.kaczmarz.rows == HalfspaceRows::Projected ? "projected" : "ambient"},
          {"selection_guard", c.selection_guard},
          {"on_infeasible", c.kaczmarz.on_infeasible == InfeasiblePolicy::Shrink ? "shrink" : "accept"},
          {"stop_fa", c.stop_fa},
          {"update_routers", c.update_routers},
          {"update_experts", c.update_experts},
          {"update_readout", c.update_readout},
          {"seed", c.seed},
          {"attack", {{"policy", to_string(c.attack.mode)}, {"m", c.attack.m}, {"best_of", c.attack.best_of}}}};
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : r.warnings)
    warnings.push_back({{"kind", w.kind}, {"layer", w.layer}, {"expert", w.expert}, {"detail", w.detail}});
  return {{"config", to_json(r.config)},
          {"steps_run", r.steps_run},
          {"aborted", r.aborted},
          {"abort_reason", r.abort_reason},
          {"fa_pre", r.fa_pre},
          {"ra_pre", r.ra_pre},
          {"fa_post", r.fa_post},
          {"ra_post", r.ra_post},
          {"forget_train_acc_post", r.forget_train_acc_post},
          {"rs", r.rs_eval.mean_rs},
          {"rs_per_layer", r.rs_eval.rs_per_layer},
          {"rs_retain", r.rs_retain},
          {"rs_forget", r.rs_forget},
          {"rs_cached", r.rs_cached},
          {"min_cached_rs_during_run", r.min_cached_rs_during_run},
          {"drift", to_json(r.drift)},
          {"attack", to_json(r.attack)},
          {"loss_curve", r.loss_curve},
          {"cost",
           {{"constraint_build_flops", r.cost.constraint_build_flops},
            {"constraint_step_flops", r.cost.constraint_step_flops},
            {"ptc_flops", r.cost.ptc_flops},
            {"constraint_flops", r.cost.constraint_flops()},
            {"training_flops", r.cost.training_flops},
            {"build_seconds", r.cost.build_seconds},
            {"step_seconds", r.cost.step_seconds},
            {"enforce_seconds", r.cost.enforce_seconds},
            {"correction_seconds", r.cost.correction_seconds},
            {"total_seconds", r.cost.total_seconds}}},
          {"ptc", r.ptc ? to_json(*r.ptc) : nlohmann::json(nullptr)},
          {"warnings", warnings},
          {"infeasible_enforcements", r.infeasible_enforcements},
          {"shrunk_enforcements", r.shrunk_enforcements},
          {"guard_halvings", r.guard_halvings},
          {"guard_zeroed_layers", r.guard_zeroed_layers},
          {"kaczmarz_projections", r.kaczmarz_projections}};
}

std::string csv_header() {
  return "objective,enforcement,seed,steps_run,aborted,fa_pre,ra_pre,fa_post,ra_post,rs,rs_retain,"
         "rs_forget,rs_cached,shifted_queries,normal_fa,forced_fa,vulnerability,constraint_flops,"
         "training_flops,build_seconds,enforce_seconds,correction_seconds,total_seconds";
}

std::string csv_row(const RunReport& r) {
  std::ostringstream o;
  o.precision(17);
  o << to_string(r.config.objective) << ',' << to_string(r.config.enforcement) << ',' << r.config.seed
    << ',' << r.steps_run << ',' << (r.aborted ? 1 : 0) << ',' << r.fa_pre << ',' << r.ra_pre << ','
    << r.fa_post << ',' << r.ra_post << ',' << r.rs_eval.mean_rs << ',' << r.rs_retain << ','
    << r.rs_forget << ',' << r.rs_cached << ',' << r.attack.shifted_queries << ','
    << r.attack.normal_fa << ',' << r.attack.forced_fa << ',' << r.attack.vulnerability << ','
    << r.cost.constraint_flops() << ',' << r.cost.training_flops << ',' << r.cost.build_seconds << ','
    << r.cost.enforce_seconds << ',' << r.cost.correction_seconds << ',' << r.cost.total_seconds;
  return o.str();
}

RunReport report_from_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
  if (f.size() != 23) throw FormatError("run row has " + std::to_string(f.size()) + " fields, expected 23");
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(f[i], &used);
      if (used != f[i].size()) throw std::invalid_argument(f[i]);
      return v;
    } catch (const std::exception&) {
      throw FormatError("run row field " + std::to_string(i) + " is not a number: '" + f[i] + "'");
    }
  };
  RunReport r;
  r.config.objective = parse_objective(f[0]);
  r.config.enforcement = parse_enforcement(f[1]);
  r.config.seed = static_cast<std::uint64_t>(num(2));
  r.steps_run = static_cast<std::size_t>(num(3));
  r.aborted = num(4) != 0.0;
  r.fa_pre = num(5);
  r.ra_pre = num(6);
  r.fa_post = num(7);
  r.ra_post = num(8);
  r.rs_eval.mean_rs = num(9);
  r.rs_retain = num(10);
  r.rs_forget = num(11);
  r.rs_cached = num(12);
  r.attack.shifted_queries = static_cast<std::size_t>(num(13));
  r.attack.normal_fa = num(14);
  r.attack.forced_fa = num(15);
  r.attack.vulnerability = num(16);
  r.cost.constraint_build_flops = num(17);  // only the total survives the round trip
  r.cost.training_flops = num(18);
  r.cost.build_seconds = num(19);
  r.cost.enforce_seconds = num(20);
  r.cost.correction_seconds = num(21);
  r.cost.total_seconds = num(22);
  return r;
}

}  // namespace grip
