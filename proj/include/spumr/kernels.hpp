// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0
//
// Runtime-dispatched f64 arithmetic kernels. Every entry point has a scalar
// reference implementation and (on x86-64 with AVX2+FMA) a vectorized
// variant; the active backend is picked once at startup and can be forced
// for equivalence testing. All matrices are dense row-major.

#pragma once

#include <cstddef>
#include <string>

namespace spumr::kernels {

enum class Backend { scalar, avx2 };

// Backend selected at startup: avx2 when the CPU supports AVX2+FMA and the
// binary carries the AVX2 translation unit, scalar otherwise. The
// SPUMR_KERNELS environment variable ("scalar" / "avx2") overrides.
Backend active();
bool supported(Backend b);
void set_backend(Backend b);  // throws ConfigError if unsupported
std::string backend_name(Backend b);

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  void (*vadd)(const double*, const double*, double*, std::size_t);
  void (*vsub)(const double*, const double*, double*, std::size_t);
  void (*vmul)(const double*, const double*, double*, std::size_t);
  // C(m,n) = A(m,k) * B(k,n)         [+= when accumulate]
  void (*matmul)(const double*, const double*, double*, std::size_t,
                 std::size_t, std::size_t, bool);
  // C(m,n) = A(m,k) * B(n,k)^T
  void (*matmul_nt)(const double*, const double*, double*, std::size_t,
                    std::size_t, std::size_t, bool);
  // C(m,n) = A(k,m)^T * B(k,n)
  void (*matmul_tn)(const double*, const double*, double*, std::size_t,
                    std::size_t, std::size_t, bool);
  // Adam with bias correction; b1t/b2t are beta1^t / beta2^t.
  void (*adam_update)(double*, const double*, double*, double*, std::size_t,
                      double, double, double, double, double, double);
};

const KernelTable& table();

inline double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}
inline double sum(const double* x, std::size_t n) { return table().sum(x, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}
inline void scale(double alpha, double* x, std::size_t n) {
  table().scale(alpha, x, n);
}
inline void vadd(const double* a, const double* b, double* out, std::size_t n) {
  table().vadd(a, b, out, n);
}
inline void vsub(const double* a, const double* b, double* out, std::size_t n) {
  table().vsub(a, b, out, n);
}
inline void vmul(const double* a, const double* b, double* out, std::size_t n) {
  table().vmul(a, b, out, n);
}
inline void matmul(const double* A, const double* B, double* C, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate = false) {
  table().matmul(A, B, C, m, k, n, accumulate);
}
inline void matmul_nt(const double* A, const double* B, double* C,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate = false) {
  table().matmul_nt(A, B, C, m, k, n, accumulate);
}
inline void matmul_tn(const double* A, const double* B, double* C,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate = false) {
  table().matmul_tn(A, B, C, m, k, n, accumulate);
}
inline void adam_update(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double b1t, double b2t) {
  table().adam_update(p, g, m, v, n, lr, beta1, beta2, eps, b1t, b2t);
}

namespace detail {
const KernelTable& scalar_table();
#if defined(SPUMR_HAVE_AVX2_TU)
const KernelTable& avx2_table();
#endif
}  // namespace detail

}  // namespace spumr::kernels
