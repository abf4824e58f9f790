#include "kernels_impl.hpp"

namespace vqanon::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void dot_rows(const double* x, const double* rows, std::size_t count,
              std::size_t n, std::size_t stride, double* out) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot(x, rows + r * stride, n);
}

}  // namespace vqanon::simd::scalar
