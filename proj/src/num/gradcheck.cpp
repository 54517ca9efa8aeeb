#include "mait/num/gradcheck.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mait/num/tape.hpp"

namespace mait::num {

double relative_error(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradReport> check_gradients(const std::function<DiffArray()>& f,
                                        std::span<DiffArray> params,
                                        std::span<const std::string> names, double h, double tol) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument(fmt::format("check_gradients: step {} outside (0, 1e-3]", h));
  if (names.size() != params.size()) throw std::invalid_argument("check_gradients: one name per block required");
  for (auto& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw std::invalid_argument("check_gradients: blocks must be leaves requiring grad");
    }
    for (double v : p.values()) {
      if (!std::isfinite(v)) throw std::invalid_argument("check_gradients: non-finite input");
    }
    p.zero_grad();
  }

  {
    Tape tape;
    TapeScope scope(&tape);
    DiffArray out = f();
    tape.backward(out);
  }

  auto eval = [&]() {
    NoGradGuard guard;
    return f().item();
  };
  const double f0 = eval();

  std::vector<GradReport> reports;
  reports.reserve(params.size());
  for (std::size_t b = 0; b < params.size(); ++b) {
    GradReport rep;
    rep.name = names[b];
    const std::vector<double> analytic = params[b].grad();
    auto x = params[b].mutable_values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = eval();
      x[i] = orig - h;
      const double fm = eval();
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      if (std::isnan(numeric) || std::isnan(analytic[i])) {
        rep.pass = false;
        rep.failure = fmt::format("NaN gradient at {}[{}]", rep.name, i);
        rep.max_rel_error = std::numeric_limits<double>::infinity();
        rep.worst_index = i;
        break;
      }
      const double right = (fp - f0) / h;
      const double left = (f0 - fm) / h;
      if (std::abs(right - left) > 1e-3 * std::max({std::abs(right), std::abs(left), 1.0})) {
        rep.kinks.push_back(i);
      }
      const double err = relative_error(analytic[i], numeric);
      if (err > rep.max_rel_error || i == 0) {
        rep.max_rel_error = err;
        rep.worst_index = i;
        rep.worst_analytic = analytic[i];
        rep.worst_numeric = numeric;
      }
    }
    if (rep.max_rel_error >= tol) rep.pass = false;
    params[b].zero_grad();
    reports.push_back(std::move(rep));
  }
  return reports;
}

GradReport check_gradients(const std::function<DiffArray(const DiffArray&)>& f, DiffArray x,
                           double h, double tol) {
  std::vector<DiffArray> blocks{x};
  std::vector<std::string> names{"x"};
  auto reports = check_gradients([&]() { return f(blocks[0]); }, blocks, names, h, tol);
  return reports.front();
}

}  // namespace mait::num
