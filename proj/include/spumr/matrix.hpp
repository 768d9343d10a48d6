// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spumr/errors.hpp"

namespace spumr {

using i64 = std::int64_t;
using i32 = std::int32_t;

/// Dense row-major f64 matrix. All training-path math runs at f64; the only
/// f32 in the toolkit is the on-disk feature payload.
class Matrix {
 public:
  Matrix() = default;
  Matrix(i64 rows, i64 cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0.0) {}

  static Matrix full(i64 rows, i64 cols, double v) {
    Matrix m(rows, cols);
    for (auto& x : m.data_) x = v;
    return m;
  }

  i64 rows() const { return rows_; }
  i64 cols() const { return cols_; }
  i64 size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(i64 r) { return data_.data() + r * cols_; }
  const double* row(i64 r) const { return data_.data() + r * cols_; }

  double& operator()(i64 r, i64 c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double operator()(i64 r, i64 c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

  void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  i64 rows_ = 0;
  i64 cols_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

}  // namespace spumr
