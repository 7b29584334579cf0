// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "grip/errors.hpp"
#include "grip/kernels.hpp"

namespace grip {

Projector::Projector(Matrix basis) : ambient_(basis.rows()), basis_(std::move(basis)) {}

Projector Projector::identity(std::size_t d) { return Projector(Matrix::identity(d)); }

Projector Projector::zero(std::size_t d) {
  Projector p;
  p.ambient_ = d;
  p.basis_ = Matrix(d, 0);
  return p;
}

Matrix Projector::matrix() const {
  if (is_empty()) return Matrix(ambient_, ambient_);
  return kernels::matmul_nt(basis_, basis_);
}

Vector Projector::apply(std::span<const double> v) const {
  Vector out(v.begin(), v.end());
  apply_inplace(out);
  return out;
}

void Projector::apply_inplace(std::span<double> v) const {
  GRIP_REQUIRE(v.size() == ambient_, "Projector::apply: dimension mismatch");
  if (is_identity()) return;
  if (is_empty()) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  const Vector coeff = matvec_transposed(basis_, v);
  const Vector proj = matvec(basis_, coeff);
  std::copy(proj.begin(), proj.end(), v.begin());
}

double Projector::apply_cost() const noexcept {
  if (is_identity() || is_empty()) return 0.0;
  return 4.0 * static_cast<double>(ambient_) * static_cast<double>(dimension());
}

EigenDecomposition sym_eig(const Matrix& input, JacobiOptions opts) {
  GRIP_REQUIRE(input.rows() == input.cols(), "sym_eig: matrix must be square");
  GRIP_REQUIRE(opts.tol > 0.0, "sym_eig: tol must be positive");
  const std::size_t n = input.rows();
  const double scale = std::max(1.0, max_abs(input));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-12 * scale)
        throw ContractViolation("sym_eig: matrix is not symmetric");

  Matrix a = input;
  Matrix v = Matrix::identity(n);
  const double target = opts.tol * frobenius_norm(input);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  double off = off_norm();
  while (off > target) {
    if (sweep == opts.max_sweeps) {
      std::ostringstream msg;
      msg << "sym_eig: no convergence after " << sweep << " sweeps (off-diagonal " << off
          << ", target " << target << ")";
      throw ConvergenceError(msg.str(), off);
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    ++sweep;
    off = off_norm();
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out;
  out.sweeps = sweep;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = v(r, order[k]);
  }
  return out;
}

Matrix cholesky(const Matrix& a) {
  GRIP_REQUIRE(a.rows() == a.cols(), "cholesky: matrix must be square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) {
      std::ostringstream msg;
      msg << "cholesky: non-positive pivot " << diag << " at index " << j
          << " (matrix is not positive definite; diag max " << max_abs(a) << ")";
      throw NumericalError(msg.str());
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
  GRIP_REQUIRE(lower.rows() == b.rows(), "cholesky_solve: dimension mismatch");
  const std::size_t n = lower.rows();
  const std::size_t m = b.cols();
  Matrix z = b;
  // Columns are independent right-hand sides.
#pragma omp parallel for schedule(static) if (n * n * m > (1u << 16))
  for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(m); ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    for (std::size_t i = 0; i < n; ++i) {
      double s = z(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * z(k, c);
      z(i, c) = s / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = z(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * z(k, c);
      z(ii, c) = s / lower(ii, ii);
    }
  }
  return z;
}

Matrix ridge_pseudoinverse(const Matrix& x, double lambda) {
  GRIP_REQUIRE(lambda > 0.0, "ridge_pseudoinverse: lambda must be positive");
  const std::size_t d = x.rows();
  const std::size_t n = x.cols();
  Matrix out;
  if (n <= d) {
    // (XᵀX + λI)⁻¹ Xᵀ
    Matrix g = kernels::gram_t(x);
    for (std::size_t i = 0; i < n; ++i) g(i, i) += lambda;
    out = cholesky_solve(cholesky(g), x.transpose());
  } else {
    // [(XXᵀ + λI)⁻¹ X]ᵀ
    Matrix g = kernels::gram(x);
    for (std::size_t i = 0; i < d; ++i) g(i, i) += lambda;
    out = cholesky_solve(cholesky(g), x).transpose();
  }
  if (!out.all_finite()) throw NumericalError("ridge_pseudoinverse: non-finite result");
  return out;
}

Projector nullspace_projector_from(const EigenDecomposition& eig, double eps, bool relative) {
  GRIP_REQUIRE(eps >= 0.0, "nullspace_projector: eps must be non-negative");
  const std::size_t d = eig.eigenvectors.rows();
  double cut = eps;
  if (relative) cut = eig.eigenvalues.empty() ? 0.0 : eps * std::max(eig.eigenvalues.front(), 0.0);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < eig.eigenvalues.size(); ++i)
    if (eig.eigenvalues[i] < cut) keep.push_back(i);
  if (keep.empty()) return Projector::zero(d);
  return Projector(eig.eigenvectors.select_columns(keep));
}

Projector nullspace_projector(const Matrix& x, double eps) {
  GRIP_REQUIRE(eps >= 0.0, "nullspace_projector: eps must be non-negative");
  if (x.cols() == 0) return Projector::identity(x.rows());
  return nullspace_projector_from(sym_eig(kernels::gram(x)), eps);
}

double power_iteration_max_eig(const Matrix& sym, int iters) {
  const std::size_t n = sym.rows();
  if (n == 0) return 0.0;
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector w = matvec(sym, v);
    const double nw = norm(w);
    if (nw == 0.0) return 0.0;
    lambda = dot(v, w) / dot(v, v);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
  }
  return lambda;
}

double sym_eig_cost(std::size_t d, int sweeps) {
  const double dd = static_cast<double>(d);
  // Each rotation touches 2 rows, 2 columns and 2 eigenvector columns (6 flops per entry).
  return static_cast<double>(std::max(sweeps, 1)) * dd * (dd - 1.0) / 2.0 * 18.0 * dd;
}

double cholesky_cost(std::size_t n) {
  const double nn = static_cast<double>(n);
  return nn * nn * nn / 3.0;
}

}  // namespace grip
