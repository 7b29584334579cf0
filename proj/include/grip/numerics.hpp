// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "grip/matrix.hpp"

namespace grip {

/// Eigenpairs of a symmetric matrix. Eigenvalues are sorted descending;
/// column i of `eigenvectors` belongs to eigenvalues[i]. Equal eigenvalues
/// keep ascending order of the diagonal slot they converged in.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
  int sweeps = 0;
};

/// Orthogonal projector P = B·Bᵀ onto the span of an orthonormal basis B (d×m).
class Projector {
 public:
  Projector() = default;
  explicit Projector(Matrix basis);

  static Projector identity(std::size_t d);
  static Projector zero(std::size_t d);

  std::size_t ambient_dim() const noexcept { return ambient_; }
  std::size_t dimension() const noexcept { return basis_.cols(); }
  /// True when the subspace is {0}: everything projects to zero.
  bool is_empty() const noexcept { return dimension() == 0; }
  bool is_identity() const noexcept { return dimension() == ambient_; }

  const Matrix& basis() const noexcept { return basis_; }
  Matrix matrix() const;
  Vector apply(std::span<const double> v) const;
  void apply_inplace(std::span<double> v) const;
  /// Flops of one apply() call.
  double apply_cost() const noexcept;

 private:
  std::size_t ambient_ = 0;
  Matrix basis_;
};

struct JacobiOptions {
  double tol = 1e-12;
  int max_sweeps = 100;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Convergence is
/// reached once the off-diagonal Frobenius norm drops to tol·‖A‖_F.
/// Throws ContractViolation for non-square/asymmetric input and
/// ConvergenceError when the sweep cap is hit.
EigenDecomposition sym_eig(const Matrix& a, JacobiOptions opts = {});

/// Lower Cholesky factor of an SPD matrix; NumericalError on a non-positive pivot.
Matrix cholesky(const Matrix& a);
/// Solves (L Lᵀ) Z = B for Z given the Cholesky factor L.
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);

/// Xᵀ(XXᵀ + λI)⁻¹ for X (d×N), returned as N×d. Solves whichever of the
/// two equivalent SPD systems is smaller (push-through identity).
Matrix ridge_pseudoinverse(const Matrix& x, double lambda);

/// Projector onto the eigenvectors of XXᵀ with eigenvalue below `eps`.
/// A zero-dimensional result is valid; check Projector::is_empty().
Projector nullspace_projector(const Matrix& x, double eps);

/// Same as above but reusing an already computed eigendecomposition of XXᵀ.
/// With `relative`, the cut-off is eps·λ_max instead of eps.
Projector nullspace_projector_from(const EigenDecomposition& eig, double eps,
                                   bool relative = false);

/// Largest singular value squared of A (≈ λ_max(AᵀA)) by power iteration.
double power_iteration_max_eig(const Matrix& sym, int iters = 200);

/// Flop estimates used for the cost ledger.
double sym_eig_cost(std::size_t d, int sweeps);
double cholesky_cost(std::size_t n);

}  // namespace grip
