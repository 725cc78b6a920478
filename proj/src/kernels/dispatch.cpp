#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "longsim/kernels.hpp"

namespace longsim::kernels {

#if defined(LONGSIM_HAVE_AVX2)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(LONGSIM_HAVE_NEON)
const KernelTable& neon_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if defined(LONGSIM_HAVE_AVX2)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(LONGSIM_HAVE_NEON)
  return &neon_table_unchecked();
#else
  return nullptr;
#endif
}

bool available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return avx2_table() != nullptr;
    case Backend::neon: return neon_table() != nullptr;
  }
  return false;
}

std::string_view name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

namespace {

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar: return &scalar_table();
    case Backend::avx2: return avx2_table();
    case Backend::neon: return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("LONGSIM_SIMD")) {
    const std::string want = env;
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon})
      if (want == name(b) && available(b)) return table_for(b);
  }
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (t == nullptr)
    throw std::invalid_argument("kernel backend '" + std::string(name(b)) + "' is not available");
  current().store(t, std::memory_order_release);
}

}  // namespace longsim::kernels
