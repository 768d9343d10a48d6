// Copyright 2026 the spumr authors
// SPDX-License-Identifier: Apache-2.0

#include "spumr/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "spumr/errors.hpp"

namespace spumr::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
#if defined(SPUMR_HAVE_AVX2_TU)
  if (const char* env = std::getenv("SPUMR_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2_fma()) return Backend::avx2;
    return Backend::scalar;
  }
  if (cpu_has_avx2_fma()) return Backend::avx2;
#endif
  return Backend::scalar;
}

std::atomic<const KernelTable*>& table_slot() {
  static std::atomic<const KernelTable*> slot{nullptr};
  return slot;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{Backend::scalar};
  return slot;
}

const KernelTable* table_for(Backend b) {
#if defined(SPUMR_HAVE_AVX2_TU)
  if (b == Backend::avx2) return &detail::avx2_table();
#endif
  (void)b;
  return &detail::scalar_table();
}

struct Init {
  Init() {
    const Backend b = detect();
    backend_slot().store(b);
    table_slot().store(table_for(b));
  }
};
const Init g_init;

}  // namespace

Backend active() { return backend_slot().load(); }

bool supported(Backend b) {
  if (b == Backend::scalar) return true;
#if defined(SPUMR_HAVE_AVX2_TU)
  return b == Backend::avx2 && cpu_has_avx2_fma();
#else
  return false;
#endif
}

void set_backend(Backend b) {
  if (!supported(b)) {
    throw ConfigError("kernel backend '" + backend_name(b) +
                      "' not supported on this machine/build");
  }
  backend_slot().store(b);
  table_slot().store(table_for(b));
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

const KernelTable& table() {
  const KernelTable* t = table_slot().load(std::memory_order_relaxed);
  if (t == nullptr) {
    // static-init ordering fallback for callers in other TU constructors
    t = table_for(detect());
    table_slot().store(t);
  }
  return *t;
}

}  // namespace spumr::kernels
