#include <atomic>

#include "kernels_impl.hpp"
#include "vqanon/errors.hpp"
#include "vqanon/simd/kernels.hpp"

namespace vqanon::simd {

namespace {

constexpr KernelTable kScalarTable{Level::kScalar, scalar::dot,
                                   scalar::squared_distance, scalar::axpy,
                                   scalar::dot_rows};

#if defined(VQANON_HAVE_AVX2)
constexpr KernelTable kAvx2Table{Level::kAvx2, avx2::dot,
                                 avx2::squared_distance, avx2::axpy,
                                 avx2::dot_rows};
#endif

const KernelTable* table_for(Level level) {
  switch (level) {
    case Level::kScalar:
      return &kScalarTable;
    case Level::kAvx2:
      return avx2_kernels();
  }
  return nullptr;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{table_for(detected_level())};
  return slot;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

const KernelTable* avx2_kernels() {
#if defined(VQANON_HAVE_AVX2)
  return &kAvx2Table;
#else
  return nullptr;
#endif
}

bool cpu_supports(Level level) {
  switch (level) {
    case Level::kScalar:
      return true;
    case Level::kAvx2:
#if defined(VQANON_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Level detected_level() {
  return cpu_supports(Level::kAvx2) ? Level::kAvx2 : Level::kScalar;
}

const KernelTable& active() {
  return *active_slot().load(std::memory_order_acquire);
}

void set_level(Level level) {
  const KernelTable* table = table_for(level);
  if (table == nullptr || !cpu_supports(level)) {
    throw ConfigError("simd level '" + std::string(level_name(level)) +
                      "' is not available on this build or CPU");
  }
  active_slot().store(table, std::memory_order_release);
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::kScalar:
      return "scalar";
    case Level::kAvx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace vqanon::simd
