#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rsq {

/// Central-difference check: perturbs each element of `values` by +/-eps,
/// evaluates f, and compares (f+ - f-)/(2 eps) against the analytic gradient.
/// Relative error uses denominator max(|analytic|, |numeric|, 1e-8). Runs in
/// double precision by construction.
double max_relative_error(const std::function<double()>& f, std::span<double> values,
                          std::span<const double> analytic, double eps);

struct GradCheckOptions {
  uint64_t seed = 7;
  double eps = 1e-5;
  /// Test-harness fault injection: negates the conv weight gradient before
  /// comparison so a broken backward is observable end to end.
  bool flip_conv_weight_grad_sign = false;
};

struct ComponentCheck {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool pass() const { return max_rel_err <= tolerance; }
};

/// Finite-difference checks for every primitive kernel with a gradient.
std::vector<ComponentCheck> primitive_grad_checks(const GradCheckOptions& opts, double tolerance);

/// Whole-network check on the miniature configuration (8x8 input, 2 classes,
/// fire rows (2,4,4)): every parameter of the combined main+branch loss.
ComponentCheck network_grad_check(const GradCheckOptions& opts, double tolerance);

}  // namespace rsq
