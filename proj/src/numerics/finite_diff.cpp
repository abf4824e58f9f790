#include "vqanon/numerics/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vqanon/errors.hpp"

namespace vqanon {

std::vector<double> finite_diff_grad(const ScalarFunction& f,
                                     std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_grad: eps must be > 0");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(probe);
    probe[i] = saved - eps;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("finite_diff_grad: non-finite value probing coordinate " +
                        std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

}  // namespace vqanon
