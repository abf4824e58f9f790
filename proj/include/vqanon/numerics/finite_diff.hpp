#pragma once

#include <functional>
#include <span>
#include <vector>

namespace vqanon {

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
// Throws ConfigError for eps <= 0 and OracleError if f is non-finite at a probe.
std::vector<double> finite_diff_grad(const ScalarFunction& f,
                                     std::span<const double> x, double eps);

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
// turning rounding noise into large relative errors.
double relative_error(double a, double b, double floor = 1e-4);

double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-4);

}  // namespace vqanon
