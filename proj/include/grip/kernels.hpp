// Copyright 2026 The GRIP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "grip/matrix.hpp"

// Dense products used by every module. The default entry points are
// OpenMP-parallel over output rows; `serial::` holds the reference loops the
// tests compare against. Both produce bitwise-identical results because each
// output element is accumulated by one thread in a fixed order.

namespace grip::kernels {

Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// x · xᵀ (exactly symmetric)
Matrix gram(const Matrix& x);
/// xᵀ · x (exactly symmetric)
Matrix gram_t(const Matrix& x);

int max_threads();
void set_threads(int n);

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix gram(const Matrix& x);
Matrix gram_t(const Matrix& x);
}  // namespace serial

}  // namespace grip::kernels
