// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "spumr/kernels.hpp"
#include "spumr/matrix.hpp"

namespace spumr {

/// Sparse row-major matrix. Column ids within a row are strictly increasing.
struct CsrMatrix {
  i64 rows = 0;
  i64 cols = 0;
  std::vector<i64> offsets;  // size rows+1
  std::vector<i32> colidx;   // size nnz
  std::vector<double> weights;

  i64 nnz() const { return static_cast<i64>(colidx.size()); }
  i64 row_nnz(i64 r) const { return offsets[r + 1] - offsets[r]; }
};

/// out = G * X  (out is rows x X.cols, zeroed first unless accumulate).
inline void csr_matmul(const CsrMatrix& g, const Matrix& x, Matrix& out,
                       bool accumulate = false) {
  if (x.rows() != g.cols) {
    throw ShapeError("csr_matmul: graph cols " + std::to_string(g.cols) +
                     " vs dense rows " + std::to_string(x.rows()));
  }
  if (out.rows() != g.rows || out.cols() != x.cols()) out = Matrix(g.rows, x.cols());
  else if (!accumulate) out.zero();
  const std::size_t d = static_cast<std::size_t>(x.cols());
  for (i64 r = 0; r < g.rows; ++r) {
    double* orow = out.row(r);
    for (i64 e = g.offsets[r]; e < g.offsets[r + 1]; ++e) {
      kernels::axpy(g.weights[e], x.row(g.colidx[e]), orow, d);
    }
  }
}

/// out += G^T * X  (scatter form; deterministic single pass).
inline void csr_t_matmul_acc(const CsrMatrix& g, const Matrix& x, Matrix& out) {
  if (x.rows() != g.rows || out.rows() != g.cols || out.cols() != x.cols()) {
    throw ShapeError("csr_t_matmul: incompatible shapes");
  }
  const std::size_t d = static_cast<std::size_t>(x.cols());
  for (i64 r = 0; r < g.rows; ++r) {
    const double* xrow = x.row(r);
    for (i64 e = g.offsets[r]; e < g.offsets[r + 1]; ++e) {
      kernels::axpy(g.weights[e], xrow, out.row(g.colidx[e]), d);
    }
  }
}

inline Matrix csr_to_dense(const CsrMatrix& g) {
  Matrix d(g.rows, g.cols);
  for (i64 r = 0; r < g.rows; ++r) {
    for (i64 e = g.offsets[r]; e < g.offsets[r + 1]; ++e) {
      d(r, g.colidx[e]) = g.weights[e];
    }
  }
  return d;
}

}  // namespace spumr
