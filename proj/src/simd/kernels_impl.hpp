#pragma once

#include <cstddef>

namespace vqanon::simd {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void dot_rows(const double* x, const double* rows, std::size_t count,
              std::size_t n, std::size_t stride, double* out);
}  // namespace scalar

#if defined(VQANON_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void dot_rows(const double* x, const double* rows, std::size_t count,
              std::size_t n, std::size_t stride, double* out);
}  // namespace avx2
#endif

}  // namespace vqanon::simd
