#include <cstdlib>
#include <string_view>

#include "gmp/kernels.hpp"

namespace gmp::kernels {

#ifndef GMP_HAVE_AVX2
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif
#ifndef GMP_HAVE_NEON
const KernelTable* neon_table() noexcept { return nullptr; }
#endif

namespace {

const KernelTable& select() noexcept {
  const char* env = std::getenv("GMP_KERNELS");
  const std::string_view want = env != nullptr ? env : "";
  if (want == "scalar") return scalar_table();
  if (want == "avx2" || want.empty()) {
    if (const auto* t = avx2_table()) return *t;
  }
  if (want == "neon" || want.empty()) {
    if (const auto* t = neon_table()) return *t;
  }
  return scalar_table();
}

}  // namespace

const KernelTable& active() noexcept {
  static const KernelTable& table = select();
  return table;
}

}  // namespace gmp::kernels
