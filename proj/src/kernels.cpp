// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include "grip/kernels.hpp"

#include <omp.h>

#include "grip/errors.hpp"

namespace grip::kernels {

namespace {
// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

bool go_parallel(std::size_t work) { return work >= kParallelThreshold && omp_get_max_threads() > 1; }
}  // namespace

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(n > 0 ? n : 1); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  GRIP_REQUIRE(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Matrix c(a.rows(), m);
#pragma omp parallel for schedule(static) if (go_parallel(a.rows() * inner * m))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto out = c.row(static_cast<std::size_t>(i));
    const auto ar = a.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < inner; ++p) {
      const double aip = ar[p];
      const auto br = b.row(p);
      for (std::size_t j = 0; j < m; ++j) out[j] += aip * br[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  GRIP_REQUIRE(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t m = b.rows();
  Matrix c(a.rows(), m);
#pragma omp parallel for schedule(static) if (go_parallel(a.rows() * inner * m))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ar = a.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < m; ++j) {
      const auto br = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < inner; ++p) s += ar[p] * br[p];
      c(static_cast<std::size_t>(i), j) = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  GRIP_REQUIRE(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.cols());
  const std::size_t inner = a.rows();
  const std::size_t m = b.cols();
  Matrix c(a.cols(), m);
#pragma omp parallel for schedule(static) if (go_parallel(a.cols() * inner * m))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto out = c.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < inner; ++p) {
      const double api = a(p, static_cast<std::size_t>(i));
      const auto br = b.row(p);
      for (std::size_t j = 0; j < m; ++j) out[j] += api * br[j];
    }
  }
  return c;
}

Matrix gram(const Matrix& x) {
  const std::size_t d = x.rows();
  const std::size_t n = x.cols();
  Matrix g(d, d);
#pragma omp parallel for schedule(dynamic, 4) if (go_parallel(d * d * n / 2))
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(d); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const auto xi = x.row(i);
    for (std::size_t j = i; j < d; ++j) {
      const auto xj = x.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += xi[p] * xj[p];
      g(i, j) = s;
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

Matrix gram_t(const Matrix& x) {
  const std::size_t d = x.rows();
  const std::size_t n = x.cols();
  Matrix g(n, n);
#pragma omp parallel for schedule(dynamic, 4) if (go_parallel(d * n * n / 2))
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += x(p, i) * x(p, j);
      g(i, j) = s;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  GRIP_REQUIRE(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t p = 0; p < a.cols(); ++p)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, p) * b(p, j);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  GRIP_REQUIRE(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  GRIP_REQUIRE(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t p = 0; p < a.rows(); ++p)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(p, i) * b(p, j);
  return c;
}

Matrix gram(const Matrix& x) {
  Matrix g(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = i; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < x.cols(); ++p) s += x(i, p) * x(j, p);
      g(i, j) = s;
      g(j, i) = s;
    }
  return g;
}

Matrix gram_t(const Matrix& x) {
  Matrix g(x.cols(), x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i)
    for (std::size_t j = i; j < x.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < x.rows(); ++p) s += x(p, i) * x(p, j);
      g(i, j) = s;
      g(j, i) = s;
    }
  return g;
}

}  // namespace serial
}  // namespace grip::kernels
