// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel dense kernels. Every OpenMP kernel assigns each output element
// to exactly one thread and accumulates in a fixed order, so results do not
// depend on the thread count. The `reference` namespace holds plain serial
// loops used by the tests and the benchmark as a baseline.
#pragma once

#include <span>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"

namespace wadcmsn::kernels {

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// m.row(i) += bias for every row.
void add_row_broadcast(Matrix& m, std::span<const Real> bias);

// Sum over rows, one entry per column.
std::vector<Real> column_sums(const Matrix& m);

// Squared Euclidean distance from `query` to every row of `gallery`.
std::vector<Real> squared_distances(std::span<const Real> query, const Matrix& gallery);

int max_threads();

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
std::vector<Real> column_sums(const Matrix& m);
std::vector<Real> squared_distances(std::span<const Real> query, const Matrix& gallery);

}  // namespace reference

}  // namespace wadcmsn::kernels
