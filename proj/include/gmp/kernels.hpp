#pragma once

// Row-level arithmetic kernels with a scalar reference implementation and
// SIMD variants chosen at runtime.
//
// Every variant evaluates the same expression tree: elementwise kernels are
// independent per lane and never fused (no FMA), and `dot` always reduces
// through four interleaved partial sums combined as (s0 + s1) + (s2 + s3)
// before the tail. Results are therefore bit-identical across variants.

#include <cstddef>
#include <string_view>

namespace gmp::kernels {

struct KernelTable {
  std::string_view name;
  /// y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  /// y[i] += x[i]
  void (*accumulate)(std::size_t n, const double* x, double* y);
  /// out[i] = a * x[i]
  void (*scale)(std::size_t n, double a, const double* x, double* out);
  /// out[i] = x[i] * y[i]
  void (*multiply)(std::size_t n, const double* x, const double* y, double* out);
  /// out[i] = max(x[i], 0)
  void (*relu)(std::size_t n, const double* x, double* out);
  double (*dot)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_table() noexcept;

/// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

/// The table used by the library. Picks the widest supported variant unless
/// the GMP_KERNELS environment variable names one ("scalar", "avx2", "neon").
const KernelTable& active() noexcept;

// Short rows (message widths are often 2-8) are dominated by the indirect
// call, so these run them inline with the reference expression tree and hand
// longer rows to the active table.
inline constexpr std::size_t kInlineWidth = 8;

inline void row_axpy(std::size_t n, double a, const double* x, double* y) {
  if (n >= kInlineWidth) return active().axpy(n, a, x, y);
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline void row_scale(std::size_t n, double a, const double* x, double* out) {
  if (n >= kInlineWidth) return active().scale(n, a, x, out);
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

inline void row_accumulate(std::size_t n, const double* x, double* y) {
  if (n >= kInlineWidth) return active().accumulate(n, x, y);
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

inline double row_dot(std::size_t n, const double* x, const double* y) {
  if (n >= kInlineWidth) return active().dot(n, x, y);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  if (n >= 4) {
    s0 += x[0] * y[0];
    s1 += x[1] * y[1];
    s2 += x[2] * y[2];
    s3 += x[3] * y[3];
    i = 4;
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

}  // namespace gmp::kernels
