// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "grip/errors.hpp"
#include "grip/kernels.hpp"
#include "grip/numerics.hpp"
#include "oracles.hpp"

using namespace grip;

namespace {

Matrix random_symmetric(std::size_t d, std::mt19937_64& rng) {
  const Matrix a = oracle::random_matrix(d, d, rng);
  Matrix s = a + a.transpose();
  return s;
}

double reconstruction_error(const Matrix& a, const EigenDecomposition& e) {
  const std::size_t d = a.rows();
  Matrix r(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += e.eigenvectors(i, k) * e.eigenvalues[k] * e.eigenvectors(j, k);
      r(i, j) = s;
    }
  return frobenius_norm(r - a) / frobenius_norm(a);
}

}  // namespace

TEST_CASE("matrix constructors reject non-finite values and bad sizes") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ContractViolation);
  CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1, NAN}), ContractViolation);
  CHECK_THROWS_AS(Matrix(1, 1, std::vector<double>{INFINITY}), ContractViolation);
  const Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(m.size() == m.rows() * m.cols());
  CHECK(m.transpose()(2, 1) == 6);
}

TEST_CASE("parallel kernels equal the serial reference bit for bit") {
  std::mt19937_64 rng(3);
  for (std::size_t n : {1u, 7u, 64u, 130u}) {
    const Matrix a = oracle::random_matrix(n, n + 3, rng);
    const Matrix b = oracle::random_matrix(n + 3, n, rng);
    CHECK(kernels::matmul(a, b) == kernels::serial::matmul(a, b));
    CHECK(kernels::matmul_nt(a, a) == kernels::serial::matmul_nt(a, a));
    CHECK(kernels::matmul_tn(a, a) == kernels::serial::matmul_tn(a, a));
    CHECK(kernels::gram(a) == kernels::serial::gram(a));
    CHECK(kernels::gram_t(a) == kernels::serial::gram_t(a));
    const Matrix g = kernels::gram(a);
    CHECK(g == g.transpose());
    CHECK(frobenius_norm(kernels::matmul(a, b) - oracle::multiply(a, b)) <=
          1e-12 * frobenius_norm(oracle::multiply(a, b)) + 1e-300);
  }
}

TEST_CASE("sym_eig on hand-solvable inputs") {
  SUBCASE("diagonal") {
    const auto e = sym_eig(Matrix{{4, 0}, {0, 0}});
    CHECK(e.eigenvalues[0] == doctest::Approx(4));
    CHECK(e.eigenvalues[1] == doctest::Approx(0));
    CHECK(std::abs(e.eigenvectors(0, 0)) == doctest::Approx(1));
    CHECK(std::abs(e.eigenvectors(1, 1)) == doctest::Approx(1));
  }
  SUBCASE("2x2 coupled") {
    const auto e = sym_eig(Matrix{{2, 1}, {1, 2}});
    CHECK(e.eigenvalues[0] == doctest::Approx(3).epsilon(1e-14));
    CHECK(e.eigenvalues[1] == doctest::Approx(1).epsilon(1e-14));
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(e.eigenvectors(0, 0)) == doctest::Approx(r));
    CHECK(e.eigenvectors(0, 0) * e.eigenvectors(1, 0) > 0);  // (1,1) direction
    CHECK(e.eigenvectors(0, 1) * e.eigenvectors(1, 1) < 0);  // (1,-1) direction
  }
  SUBCASE("identity") {
    const Matrix i3 = Matrix::identity(3);
    const auto e = sym_eig(i3);
    for (double v : e.eigenvalues) CHECK(v == doctest::Approx(1));
    CHECK(reconstruction_error(i3, e) <= 1e-12);
  }
}

TEST_CASE("sym_eig contract and convergence errors") {
  CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), ContractViolation);
  CHECK_THROWS_AS(sym_eig(Matrix{{1, 2}, {0, 1}}), ContractViolation);
  std::mt19937_64 rng(5);
  const Matrix a = random_symmetric(12, rng);
  CHECK_THROWS_AS(sym_eig(a, {1e-12, 1}), ConvergenceError);
}

TEST_CASE("sym_eig reconstruction and orthonormality on random inputs") {
  std::mt19937_64 rng(11);
  for (std::size_t d : {2u, 5u, 16u, 40u}) {
    const Matrix a = random_symmetric(d, rng);
    const auto e = sym_eig(a);
    CHECK(reconstruction_error(a, e) <= 1e-8);
    const Matrix vtv = kernels::matmul_tn(e.eigenvectors, e.eigenvectors);
    CHECK(frobenius_norm(vtv - Matrix::identity(d)) <= 1e-10);
    for (std::size_t i = 1; i < d; ++i) CHECK(e.eigenvalues[i - 1] >= e.eigenvalues[i]);
  }
}

TEST_CASE("cholesky solves SPD systems and rejects indefinite ones") {
  std::mt19937_64 rng(2);
  const Matrix a = oracle::random_matrix(6, 9, rng);
  Matrix spd = kernels::gram(a);
  for (std::size_t i = 0; i < 6; ++i) spd(i, i) += 0.1;
  const Matrix b = oracle::random_matrix(6, 2, rng);
  const Matrix z = cholesky_solve(cholesky(spd), b);
  CHECK(frobenius_norm(kernels::matmul(spd, z) - b) <= 1e-10 * frobenius_norm(b));
  CHECK_THROWS_AS(cholesky(Matrix{{1, 2}, {2, 1}}), NumericalError);
}

TEST_CASE("ridge_pseudoinverse examples") {
  SUBCASE("single column e2") {
    const Matrix x{{0}, {1}};
    const Matrix p = ridge_pseudoinverse(x, 1e-6);
    REQUIRE(p.rows() == 1);
    REQUIRE(p.cols() == 2);
    CHECK(p(0, 0) == 0.0);
    CHECK(p(0, 1) == doctest::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-15));
  }
  SUBCASE("zero input") {
    const Matrix p = ridge_pseudoinverse(Matrix(3, 4), 1.0);
    CHECK(max_abs(p) == 0.0);
  }
  SUBCASE("orthonormal columns approach the transpose") {
    std::mt19937_64 rng(4);
    const auto e = sym_eig(random_symmetric(6, rng));
    const Matrix q = e.eigenvectors.select_columns(std::vector<std::size_t>{0, 2, 3});
    const Matrix p = ridge_pseudoinverse(q, 1e-10);
    CHECK(frobenius_norm(p - q.transpose()) <= 1e-9);
  }
  CHECK_THROWS_AS(ridge_pseudoinverse(Matrix{{1}}, 0.0), ContractViolation);
}

TEST_CASE("ridge_pseudoinverse matches the dense Gauss-Jordan oracle") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 2 + rng() % 10;
    const std::size_t n = 1 + rng() % 14;  // both N < d and N > d
    const Matrix x = oracle::random_matrix(d, n, rng);
    const double lambda = 1e-3;
    const Matrix got = ridge_pseudoinverse(x, lambda);
    const Matrix want = oracle::ridge_pinv(x, lambda);
    CHECK(frobenius_norm(got - want) <= 1e-8 * std::max(1.0, frobenius_norm(want)));
  }
}

TEST_CASE("pseudo-inverse consistency for full column rank") {
  std::mt19937_64 rng(8);
  const Matrix x = oracle::random_matrix(10, 4, rng);
  const Matrix p = ridge_pseudoinverse(x, 1e-10);
  CHECK(frobenius_norm(kernels::matmul(p, x) - Matrix::identity(4)) <= 1e-4);
}

TEST_CASE("nullspace_projector examples") {
  SUBCASE("rank one") {
    const Projector p = nullspace_projector(Matrix{{1}, {0}}, 1e-2);
    CHECK(p.dimension() == 1);
    const Matrix m = p.matrix();
    CHECK(m(0, 0) == doctest::Approx(0).epsilon(1e-15));
    CHECK(m(1, 1) == doctest::Approx(1));
    CHECK(std::abs(m(0, 1)) <= 1e-15);
  }
  SUBCASE("full rank gives an empty projector") {
    const Projector p = nullspace_projector(Matrix::identity(2), 1e-2);
    CHECK(p.is_empty());
    CHECK(max_abs(p.matrix()) == 0.0);
  }
  SUBCASE("random 8x3 has a 5-dimensional null space that annihilates X") {
    std::mt19937_64 rng(13);
    const Matrix x = oracle::random_matrix(8, 3, rng);
    const Projector p = nullspace_projector(x, 1e-2);
    CHECK(p.dimension() == 5);
    const Matrix px = kernels::matmul(p.matrix(), x);
    for (std::size_t c = 0; c < 3; ++c) CHECK(norm(px.column(c)) <= 1e-6);
    // Same subspace as the explicit orthogonal complement of span(X).
    CHECK(frobenius_norm(p.matrix() - oracle::complement_projector(x)) <= 1e-9);
  }
}

TEST_CASE("relative threshold scales with the largest eigenvalue") {
  const Matrix x{{10, 0}, {0, 0.5}};  // XXᵀ eigenvalues 100 and 0.25
  const auto eig = sym_eig(kernels::gram(x));
  CHECK(nullspace_projector_from(eig, 1e-2, false).dimension() == 0);
  CHECK(nullspace_projector_from(eig, 1e-2, true).dimension() == 1);
}

TEST_CASE("projector algebra and application") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    const std::size_t d = 3 + rng() % 20;
    const Matrix x = oracle::random_matrix(d, 1 + rng() % d, rng);
    const Matrix p = nullspace_projector(x, 1e-2).matrix();
    CHECK(frobenius_norm(kernels::matmul(p, p) - p) <= 1e-9);
    CHECK(frobenius_norm(p - p.transpose()) <= 1e-12);
    const Vector v = oracle::random_vector(d, rng);
    const Projector pr = nullspace_projector(x, 1e-2);
    const Vector a = pr.apply(v);
    const Vector b = matvec(p, v);
    for (std::size_t i = 0; i < d; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
  CHECK(Projector::identity(4).is_identity());
  CHECK(Projector::zero(4).is_empty());
}

TEST_CASE("power iteration estimates the top eigenvalue") {
  const Matrix s{{5, 1, 0}, {1, 3, 0}, {0, 0, 1}};
  const double top = sym_eig(s).eigenvalues[0];
  CHECK(power_iteration_max_eig(s) == doctest::Approx(top).epsilon(1e-8));
}
