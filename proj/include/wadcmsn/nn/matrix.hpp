// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#ifndef WADCMSN_REAL
#define WADCMSN_REAL double
#endif

namespace wadcmsn {

using Real = WADCMSN_REAL;

// Dense row-major matrix. Batches are stored one sample per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real{0});
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }

  void fill(Real v);
  bool all_finite() const noexcept;

  // Copies `rows` (indices into this matrix) into a new matrix, in order.
  Matrix gather_rows(std::span<const std::size_t> rows) const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

// Throws ShapeError naming `what` unless m is rows x cols.
void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what);
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace wadcmsn
