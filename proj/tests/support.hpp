#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mait/num/diff_array.hpp"
#include "mait/num/random.hpp"

namespace test_support {

inline std::vector<double> random_values(mait::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline mait::num::DiffArray random_param(mait::Rng& rng, mait::num::Shape shape, double lo = -1.0,
                                         double hi = 1.0) {
  auto n = mait::num::shape_size(shape);
  return mait::num::DiffArray::parameter(std::move(shape), random_values(rng, n, lo, hi));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// Dense row-major matrix product, used as an oracle independent of the tape.
inline std::vector<double> dense_matmul(std::span<const double> a, std::span<const double> b, std::size_t n,
                                        std::size_t k, std::size_t m) {
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += a[i * k + p] * b[p * m + j];
  return out;
}

}  // namespace test_support
