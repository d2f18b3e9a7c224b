// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/nn/kernels.hpp"

#include <algorithm>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "wadcmsn/error.hpp"

namespace wadcmsn::kernels {

namespace {

// Register tile: kRowTile rows of C by kColTile columns, accumulated over the
// whole inner dimension before being written back.
constexpr std::size_t kRowTile = 4;
constexpr std::size_t kColTile = 32;

// Strided view of a logical matrix operand: element (i, j) lives at
// data[i * row_stride + j * col_stride]. Transposes are free.
struct Operand {
  const Real* data;
  std::size_t row_stride;
  std::size_t col_stride;
  Real at(std::size_t i, std::size_t j) const { return data[i * row_stride + j * col_stride]; }
};

// `panel` is a k x kColTile contiguous copy of one column strip of B.
void tile_full(const Operand& a, const Real* panel, Real* c, std::size_t k, std::size_t n,
               std::size_t i0, std::size_t j0) {
  Real acc[kRowTile][kColTile] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const Real* brow = panel + p * kColTile;
    for (std::size_t r = 0; r < kRowTile; ++r) {
      const Real av = a.at(i0 + r, p);
#pragma omp simd
      for (std::size_t j = 0; j < kColTile; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kRowTile; ++r) {
    Real* crow = c + (i0 + r) * n + j0;
    for (std::size_t j = 0; j < kColTile; ++j) crow[j] = acc[r][j];
  }
}

void tile_edge(const Operand& a, const Real* panel, Real* c, std::size_t k, std::size_t n,
               std::size_t i0, std::size_t j0, std::size_t mr, std::size_t nr) {
  Real acc[kRowTile][kColTile] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const Real* brow = panel + p * kColTile;
    for (std::size_t r = 0; r < mr; ++r) {
      const Real av = a.at(i0 + r, p);
      for (std::size_t j = 0; j < nr; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < mr; ++r) {
    Real* crow = c + (i0 + r) * n + j0;
    for (std::size_t j = 0; j < nr; ++j) crow[j] = acc[r][j];
  }
}

// c (m x n, row-major) = a (m x k) * b (k x n).
void gemm(const Operand& a, const Operand& b, Real* c, std::size_t m, std::size_t k,
          std::size_t n) {
  const std::ptrdiff_t col_tiles = static_cast<std::ptrdiff_t>((n + kColTile - 1) / kColTile);
  // Each thread owns whole column strips of C; the packed strip of B is reused
  // by every row tile.
#pragma omp parallel
  {
    std::vector<Real> panel(k * kColTile);
#pragma omp for schedule(static)
    for (std::ptrdiff_t jt = 0; jt < col_tiles; ++jt) {
      const std::size_t j0 = static_cast<std::size_t>(jt) * kColTile;
      const std::size_t nr = std::min(kColTile, n - j0);
      for (std::size_t p = 0; p < k; ++p) {
        Real* dst = panel.data() + p * kColTile;
        for (std::size_t j = 0; j < nr; ++j) dst[j] = b.at(p, j0 + j);
      }
      for (std::size_t i0 = 0; i0 < m; i0 += kRowTile) {
        const std::size_t mr = std::min(kRowTile, m - i0);
        if (mr == kRowTile && nr == kColTile) {
          tile_full(a, panel.data(), c, k, n, i0, j0);
        } else {
          tile_edge(a, panel.data(), c, k, n, i0, j0, mr, nr);
        }
      }
    }
  }
}

Operand plain(const Matrix& m) { return {m.data(), m.cols(), 1}; }
Operand transposed(const Matrix& m) { return {m.data(), 1, m.cols()}; }

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  if (!c.empty()) gemm(plain(a), plain(b), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  if (!c.empty()) gemm(plain(a), transposed(b), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  if (!c.empty()) gemm(transposed(a), plain(b), c.data(), a.cols(), a.rows(), b.cols());
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  constexpr std::size_t kBlock = 32;
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((rows + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < blocks; ++bi) {
    const std::size_t r0 = static_cast<std::size_t>(bi) * kBlock;
    const std::size_t r1 = std::min(rows, r0 + kBlock);
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) t(c, r) = a(r, c);
    }
  }
  return t;
}

void add_row_broadcast(Matrix& m, std::span<const Real> bias) {
  if (bias.size() != m.cols()) throw ShapeError("add_row_broadcast: bias length mismatch");
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m.rows());
  const std::size_t cols = m.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    Real* row = m.data() + static_cast<std::size_t>(r) * cols;
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) row[c] += bias[c];
  }
}

std::vector<Real> column_sums(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  std::vector<Real> out(cols, Real{0});
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(cols);
  // Parallel over columns; each column is summed top to bottom.
#pragma omp parallel for schedule(static) if (cols >= 256)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    Real s = 0;
    for (std::size_t r = 0; r < rows; ++r) s += m(r, static_cast<std::size_t>(c));
    out[static_cast<std::size_t>(c)] = s;
  }
  return out;
}

std::vector<Real> squared_distances(std::span<const Real> query, const Matrix& gallery) {
  if (query.size() != gallery.cols()) throw ShapeError("squared_distances: dimension mismatch");
  std::vector<Real> out(gallery.rows());
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(gallery.rows());
  const std::size_t dim = gallery.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const Real* g = gallery.data() + static_cast<std::size_t>(r) * dim;
    Real s = 0;
    for (std::size_t c = 0; c < dim; ++c) {
      const Real d = query[c] - g[c];
      s += d * d;
    }
    out[static_cast<std::size_t>(r)] = s;
  }
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Real s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      Real s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Real s = 0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

std::vector<Real> column_sums(const Matrix& m) {
  std::vector<Real> out(m.cols(), Real{0});
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  return out;
}

std::vector<Real> squared_distances(std::span<const Real> query, const Matrix& gallery) {
  if (query.size() != gallery.cols()) throw ShapeError("squared_distances: dimension mismatch");
  std::vector<Real> out(gallery.rows());
  for (std::size_t r = 0; r < gallery.rows(); ++r) {
    Real s = 0;
    for (std::size_t c = 0; c < gallery.cols(); ++c) {
      const Real d = query[c] - gallery(r, c);
      s += d * d;
    }
    out[r] = s;
  }
  return out;
}

}  // namespace reference

}  // namespace wadcmsn::kernels
