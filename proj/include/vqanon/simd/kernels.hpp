#pragma once

// Inner-loop kernels shared by the quantizer, the encoder and the scorer.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant compiled in its own translation unit. The active table is
// chosen once at startup from CPUID and can be pinned for testing. Variants
// agree to rounding (different summation order), not bit-for-bit, so any
// result that must be bit-stable across machines has to come from the scalar
// table.

#include <cstddef>
#include <string_view>

namespace vqanon::simd {

enum class Level { kScalar, kAvx2 };

struct KernelTable {
  Level level;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = dot(x, rows + i * stride, n) for i in [0, count)
  void (*dot_rows)(const double* x, const double* rows, std::size_t count,
                   std::size_t n, std::size_t stride, double* out);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports(Level level);

// Best level supported by both the build and the running CPU.
Level detected_level();

// The table used by the library. Defaults to detected_level().
const KernelTable& active();

// Pins the active table. Throws ConfigError if the level is unavailable.
void set_level(Level level);

std::string_view level_name(Level level);

}  // namespace vqanon::simd
