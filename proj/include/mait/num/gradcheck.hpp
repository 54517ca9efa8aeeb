#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mait/num/diff_array.hpp"

namespace mait::num {

struct GradReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = true;
  /// Coordinates whose one-sided slopes disagree, i.e. likely kinks.
  std::vector<std::size_t> kinks;
  /// Set when a NaN shows up, naming the coordinate.
  std::optional<std::string> failure;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-12).
double relative_error(double analytic, double numeric);

/// Compares the reverse-mode gradient of scalar `f()` with respect to every
/// block in `params` against central differences (f(x+h e) - f(x-h e)) / 2h.
/// `f` must read the blocks' current values and be deterministic. Blocks are
/// perturbed in place and restored.
std::vector<GradReport> check_gradients(const std::function<DiffArray()>& f,
                                        std::span<DiffArray> params,
                                        std::span<const std::string> names, double h, double tol);

/// Single-input form: `f(x)` with x a leaf requiring grad.
GradReport check_gradients(const std::function<DiffArray(const DiffArray&)>& f, DiffArray x,
                           double h, double tol);

}  // namespace mait::num
