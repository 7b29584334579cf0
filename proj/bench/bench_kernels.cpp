// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels, plus the constraint machinery at the
// default experiment scale.
//
//   grip_bench [threads] [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "grip/enforce.hpp"
#include "grip/experiment.hpp"
#include "grip/kernels.hpp"
#include "grip/ptc.hpp"

using namespace grip;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = n(rng);
  return m;
}

// Best of `repeats` wall-clock runs, in milliseconds.
double best_ms(int repeats, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, double serial, double parallel) {
  std::printf("%-34s %10.3f %10.3f %8.2fx\n", name.c_str(), serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : kernels::max_threads();
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
  std::printf("threads %d, best of %d\n\n", threads, repeats);
  std::printf("%-34s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  std::mt19937_64 rng(1);
  for (std::size_t n : {64u, 128u, 256u}) {
    const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
    kernels::set_threads(threads);
    const double par = best_ms(repeats, [&] { (void)kernels::matmul(a, b); });
    const double ser = best_ms(repeats, [&] { (void)kernels::serial::matmul(a, b); });
    row("matmul " + std::to_string(n), ser, par);
    const Matrix x = random_matrix(n, 4 * n, rng);
    const double gp = best_ms(repeats, [&] { (void)kernels::gram(x); });
    const double gs = best_ms(repeats, [&] { (void)kernels::serial::gram(x); });
    row("gram " + std::to_string(n) + "x" + std::to_string(4 * n), gs, gp);
  }

  // Library paths whose parallel loops run over samples or (layer, expert)
  // pairs; "serial" here means one OpenMP thread.
  ExperimentConfig c;
  const SeedFixture f = prepare_seed(c, 1);
  const UnlearnConfig u = c.unlearn_for(1);
  std::vector<Matrix> upd;
  for (const auto& layer : f.pretrained.net.layers) upd.push_back(random_matrix(layer.router.theta.rows(), layer.router.theta.cols(), rng));

  auto both = [&](const std::string& name, const std::function<void()>& f) {
    kernels::set_threads(1);
    const double s = best_ms(repeats, f);
    kernels::set_threads(threads);
    row(name, s, best_ms(repeats, f));
  };
  const ConstraintBank bank = build_constraint_bank(f.cache, u.eps);
  both("build_constraint_bank", [&] { (void)build_constraint_bank(f.cache, u.eps); });
  both("constrain_router_gradients", [&] { (void)constrain_router_gradients(upd, bank, u.kaczmarz); });
  both("objective_grad (gd)", [&] { (void)objective_grad(f.pretrained.net, f.task, u, nullptr); });
  both("apply_ptc", [&] { (void)apply_ptc(f.pretrained.net, f.cache, f.task.retain_train.inputs); });
  return 0;
}
