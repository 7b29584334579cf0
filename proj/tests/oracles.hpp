// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Independent reference implementations the tests compare the library
// against. Nothing here calls into grip's numerics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "grip/matrix.hpp"
#include "grip/moe.hpp"

namespace oracle {

using grip::Matrix;
using grip::Vector;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.data()) v = n(rng);
  return m;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

/// Naive triple loop.
inline Matrix multiply(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// Gauss-Jordan with partial pivoting.
inline Matrix inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix m = a;
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m(r, c)) > std::abs(m(p, c))) p = r;
    if (m(p, c) == 0.0) throw std::runtime_error("oracle::inverse: singular");
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(m(c, k), m(p, k));
      std::swap(inv(c, k), inv(p, k));
    }
    const double piv = m(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      m(c, k) /= piv;
      inv(c, k) /= piv;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m(r, c);
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < n; ++k) {
        m(r, k) -= f * m(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return inv;
}

/// Xᵀ(XXᵀ + λI)⁻¹ for X (d×N), always through the d×d system.
inline Matrix ridge_pinv(const Matrix& x, double lambda) {
  Matrix g = multiply(x, transpose(x));
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += lambda;
  return multiply(transpose(x), inverse(g));
}

/// I − A(AᵀA)⁻¹Aᵀ for A (d×m) of full column rank.
inline Matrix complement_projector(const Matrix& a) {
  const Matrix at = transpose(a);
  const Matrix p = multiply(multiply(a, inverse(multiply(at, a))), at);
  Matrix out = Matrix::identity(a.rows());
  out -= p;
  return out;
}

/// Top-k by full sort: score descending, then index ascending.
inline std::vector<std::uint32_t> topk(const Vector& scores, std::size_t k) {
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline double max_violation(const Matrix& rows, const Vector& bounds, const Vector& g) {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < rows.cols(); ++c) s += rows(i, c) * g[c];
    worst = std::max(worst, s - bounds[i]);
  }
  return worst;
}

/// Cyclic projections onto {a_i·g ≤ b_i} until the max violation drops below tol.
inline Vector alternating_projections(const Matrix& rows, const Vector& bounds, Vector g,
                                      double tol = 1e-12, std::size_t max_sweeps = 100000) {
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    if (max_violation(rows, bounds, g) <= tol) return g;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      double s = 0.0, w = 0.0;
      for (std::size_t c = 0; c < rows.cols(); ++c) {
        s += rows(i, c) * g[c];
        w += rows(i, c) * rows(i, c);
      }
      if (s > bounds[i] && w > 0.0)
        for (std::size_t c = 0; c < rows.cols(); ++c) g[c] -= (s - bounds[i]) / w * rows(i, c);
    }
  }
  throw std::runtime_error("oracle::alternating_projections: no convergence");
}

/// Plain forward pass written against the parameter layout only.
inline Vector forward(const grip::MoENetwork& net, Vector h) {
  for (const auto& layer : net.layers) {
    const std::size_t e = layer.num_experts();
    Vector s(e, 0.0);
    for (std::size_t j = 0; j < e; ++j)
      for (std::size_t c = 0; c < h.size(); ++c) s[j] += layer.router.theta(j, c) * h[c];
    const auto sel = topk(s, layer.k);
    double mx = -1e300;
    for (auto j : sel) mx = std::max(mx, s[j]);
    double z = 0.0;
    for (auto j : sel) z += std::exp(s[j] - mx);
    Vector next = h;
    for (auto j : sel) {
      const double w = std::exp(s[j] - mx) / z;
      const auto& ex = layer.experts[j];
      for (std::size_t r = 0; r < h.size(); ++r) {
        double y = ex.bias[r];
        for (std::size_t c = 0; c < h.size(); ++c) y += ex.weight(r, c) * h[c];
        next[r] += w * y;
      }
    }
    h = std::move(next);
  }
  Vector logits(net.readout.bias);
  for (std::size_t r = 0; r < logits.size(); ++r)
    for (std::size_t c = 0; c < h.size(); ++c) logits[r] += net.readout.weight(r, c) * h[c];
  return logits;
}

/// Central difference of f at parameter *p.
template <class F>
double central_difference(double* p, F&& f, double h = 1e-6) {
  const double keep = *p;
  *p = keep + h;
  const double up = f();
  *p = keep - h;
  const double down = f();
  *p = keep;
  return (up - down) / (2.0 * h);
}

}  // namespace oracle
