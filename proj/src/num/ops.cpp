#include "mait/num/ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mait::num {

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(fmt::format("{}: {}", op, what));
}

void require_rank2(const char* op, const DiffArray& a) {
  if (a.rank() != 2) shape_fail(op, "expected a rank-2 array, got " + shape_string(a.shape()));
}

using Unary = double (*)(double);

// y = f(x), dy/dx expressed through (x, y).
template <typename F, typename D>
DiffArray unary(OpKind kind, const DiffArray& a, F f, D dfdx) {
  auto x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result(kind, op_name(kind), {a}, a.shape(), std::move(y),
                     [dfdx](std::span<const double> out, std::span<const double> g, GradSink& s) {
                       auto xv = s.input_value(0);
                       std::vector<double> gx(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * dfdx(xv[i], out[i]);
                       s.accumulate(0, gx);
                     });
}

struct Broadcast {
  Shape shape;
  bool a_scalar = false;
  bool b_scalar = false;
};

Broadcast broadcast_shapes(const char* op, const DiffArray& a, const DiffArray& b) {
  if (a.shape() == b.shape()) return {a.shape(), false, false};
  if (a.size() == 1) return {b.shape(), true, false};
  if (b.size() == 1) return {a.shape(), false, true};
  shape_fail(op, fmt::format("incompatible shapes {} and {}", shape_string(a.shape()),
                             shape_string(b.shape())));
}

// Reduces an elementwise gradient onto an operand that was broadcast.
std::vector<double> fold(std::span<const double> g, bool scalar) {
  if (!scalar) return {g.begin(), g.end()};
  double s = 0.0;
  for (double v : g) s += v;
  return {s};
}

template <typename F, typename GA, typename GB>
DiffArray binary(OpKind kind, const DiffArray& a, const DiffArray& b, F f, GA dfa, GB dfb) {
  auto bc = broadcast_shapes(op_name(kind), a, b);
  std::size_t n = shape_size(bc.shape);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = f(av[bc.a_scalar ? 0 : i], bv[bc.b_scalar ? 0 : i]);
  }
  return make_result(
      kind, op_name(kind), {a, b}, bc.shape, std::move(y),
      [bc, dfa, dfb](std::span<const double>, std::span<const double> g, GradSink& s) {
        auto xa = s.input_value(0);
        auto xb = s.input_value(1);
        std::vector<double> ga(g.size()), gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          double u = xa[bc.a_scalar ? 0 : i];
          double v = xb[bc.b_scalar ? 0 : i];
          ga[i] = g[i] * dfa(u, v);
          gb[i] = g[i] * dfb(u, v);
        }
        if (s.wants(0)) s.accumulate(0, fold(ga, bc.a_scalar));
        if (s.wants(1)) s.accumulate(1, fold(gb, bc.b_scalar));
      });
}

bool row_allowed(std::span<const std::uint8_t> mask, std::size_t idx) {
  return mask.empty() || mask[idx] != 0;
}

void check_mask(const char* op, const DiffArray& a, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != a.size()) {
    shape_fail(op, fmt::format("mask has {} entries for array {}", mask.size(),
                               shape_string(a.shape())));
  }
}

}  // namespace

DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    shape_fail("matmul", fmt::format("inner dimensions differ: {} vs {}", shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> y(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* yrow = &y[i * n];
      for (std::size_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
    }
  }
  return make_result(OpKind::matmul, "matmul", {a, b}, {m, n}, std::move(y),
                     [m, k, n](std::span<const double>, std::span<const double> g, GradSink& s) {
                       auto av = s.input_value(0);
                       auto bv = s.input_value(1);
                       if (s.wants(0)) {
                         std::vector<double> ga(m * k, 0.0);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
                             ga[i * k + p] = acc;
                           }
                         s.accumulate(0, ga);
                       }
                       if (s.wants(1)) {
                         std::vector<double> gb(k * n, 0.0);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = av[i * k + p];
                             if (aip == 0.0) continue;
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                           }
                         s.accumulate(1, gb);
                       }
                     });
}

DiffArray transpose(const DiffArray& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto av = a.values();
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = av[i * n + j];
  return make_result(OpKind::transpose, "transpose", {a}, {n, m}, std::move(y),
                     [m, n](std::span<const double>, std::span<const double> g, GradSink& s) {
                       std::vector<double> ga(m * n);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[j * m + i];
                       s.accumulate(0, ga);
                     });
}

DiffArray add(const DiffArray& a, const DiffArray& b) {
  return binary(
      OpKind::add, a, b, [](double u, double v) { return u + v; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

DiffArray sub(const DiffArray& a, const DiffArray& b) {
  return binary(
      OpKind::sub, a, b, [](double u, double v) { return u - v; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

DiffArray mul(const DiffArray& a, const DiffArray& b) {
  return binary(
      OpKind::mul, a, b, [](double u, double v) { return u * v; },
      [](double, double v) { return v; }, [](double u, double) { return u; });
}

DiffArray minimum(const DiffArray& a, const DiffArray& b) {
  return binary(
      OpKind::minimum, a, b, [](double u, double v) { return u <= v ? u : v; },
      [](double u, double v) { return u <= v ? 1.0 : 0.0; },
      [](double u, double v) { return u <= v ? 0.0 : 1.0; });
}

DiffArray scale(const DiffArray& a, double factor) {
  return unary(
      OpKind::scale, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

DiffArray exp(const DiffArray& a) {
  return unary(
      OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

DiffArray log(const DiffArray& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NumericError(fmt::format("log: non-positive input {}", v));
  }
  return unary(
      OpKind::log, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

DiffArray tanh(const DiffArray& a) {
  return unary(
      OpKind::tanh, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

DiffArray softplus(const DiffArray& a) {
  return unary(
      OpKind::softplus, a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        // logistic sigmoid, evaluated without overflow
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      });
}

DiffArray abs(const DiffArray& a) {
  return unary(
      OpKind::abs, a, [](double x) { return std::abs(x); },
      [](double x, double) { return x < 0.0 ? -1.0 : 1.0; });
}

DiffArray exprel(const DiffArray& a) {
  return unary(
      OpKind::exprel, a,
      [](double z) {
        if (std::abs(z) < kExprelSeriesCutoff) return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
        return std::expm1(z) / z;
      },
      [](double z, double y) {
        if (std::abs(z) < kExprelSeriesCutoff) return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
        return (std::exp(z) - y) / z;
      });
}

DiffArray softmax_lastdim(const DiffArray& a, std::span<const std::uint8_t> mask) {
  check_mask("softmax_lastdim", a, mask);
  const std::size_t rows = a.rows(), cols = a.cols();
  auto x = a.values();
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (row_allowed(mask, r * cols + c)) mx = std::max(mx, x[r * cols + c]);
    if (!std::isfinite(mx)) throw NumericError("softmax_lastdim: row with every entry masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row_allowed(mask, r * cols + c)) continue;
      y[r * cols + c] = std::exp(x[r * cols + c] - mx);
      z += y[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] /= z;
  }
  return make_result(OpKind::softmax_lastdim, "softmax_lastdim", {a}, a.shape(), std::move(y),
                     [rows, cols](std::span<const double> y, std::span<const double> g, GradSink& s) {
                       std::vector<double> gx(y.size());
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c)
                           gx[r * cols + c] = y[r * cols + c] * (g[r * cols + c] - dot);
                       }
                       s.accumulate(0, gx);
                     });
}

DiffArray log_softmax_lastdim(const DiffArray& a, std::span<const std::uint8_t> mask) {
  check_mask("log_softmax_lastdim", a, mask);
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<std::uint8_t> allowed(a.size(), 1);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), allowed.begin());
  auto x = a.values();
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (allowed[r * cols + c]) mx = std::max(mx, x[r * cols + c]);
    if (!std::isfinite(mx)) throw NumericError("log_softmax_lastdim: row with every entry masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (allowed[r * cols + c]) z += std::exp(x[r * cols + c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c)
      if (allowed[r * cols + c]) y[r * cols + c] = x[r * cols + c] - lse;
  }
  return make_result(
      OpKind::log_softmax_lastdim, "log_softmax_lastdim", {a}, a.shape(), std::move(y),
      [rows, cols, allowed = std::move(allowed)](std::span<const double> y,
                                                 std::span<const double> g, GradSink& s) {
        std::vector<double> gx(y.size(), 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          double gsum = 0.0;
          for (std::size_t c = 0; c < cols; ++c)
            if (allowed[r * cols + c]) gsum += g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            std::size_t i = r * cols + c;
            if (allowed[i]) gx[i] = g[i] - std::exp(y[i]) * gsum;
          }
        }
        s.accumulate(0, gx);
      });
}

DiffArray rms_norm(const DiffArray& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  auto x = a.values();
  std::vector<double> y(x.size());
  std::vector<double> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ms = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ms += x[r * cols + c] * x[r * cols + c];
    ms /= static_cast<double>(cols);
    inv_rms[r] = 1.0 / std::sqrt(ms + kRmsNormEps);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] * inv_rms[r];
  }
  return make_result(
      OpKind::rms_norm, "rms_norm", {a}, a.shape(), std::move(y),
      [rows, cols, inv_rms = std::move(inv_rms)](std::span<const double> y,
                                                 std::span<const double> g, GradSink& s) {
        std::vector<double> gx(y.size());
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
          dot /= static_cast<double>(cols);
          for (std::size_t c = 0; c < cols; ++c)
            gx[r * cols + c] = (g[r * cols + c] - y[r * cols + c] * dot) * inv_rms[r];
        }
        s.accumulate(0, gx);
      });
}

namespace {

DiffArray reduce(OpKind kind, const DiffArray& a, Axis axis, bool mean) {
  const std::size_t rows = axis == Axis::all ? 1 : a.rows();
  const std::size_t cols = axis == Axis::all ? a.size() : a.cols();
  auto x = a.values();
  std::vector<double> y(rows, 0.0);
  const double w = mean ? 1.0 / static_cast<double>(cols) : 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += x[r * cols + c];
    y[r] = acc * w;
  }
  Shape out_shape;
  if (axis == Axis::all) {
    out_shape = {1};
  } else {
    out_shape = a.shape();
    out_shape.back() = 1;
  }
  return make_result(kind, op_name(kind), {a}, out_shape, std::move(y),
                     [rows, cols, w](std::span<const double>, std::span<const double> g, GradSink& s) {
                       std::vector<double> gx(rows * cols);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] = g[r] * w;
                       s.accumulate(0, gx);
                     });
}

}  // namespace

DiffArray reduce_sum(const DiffArray& a, Axis axis) { return reduce(OpKind::reduce_sum, a, axis, false); }

DiffArray reduce_mean(const DiffArray& a, Axis axis) {
  return reduce(OpKind::reduce_mean, a, axis, true);
}

DiffArray slice(const DiffArray& a, int axis, std::size_t begin, std::size_t end) {
  require_rank2("slice", a);
  if (axis != 0 && axis != 1) shape_fail("slice", fmt::format("axis {} out of range", axis));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const std::size_t extent = axis == 0 ? m : n;
  if (begin >= end || end > extent) {
    shape_fail("slice", fmt::format("range [{}, {}) invalid for axis {} of {}", begin, end, axis,
                                    shape_string(a.shape())));
  }
  const std::size_t len = end - begin;
  auto x = a.values();
  std::vector<double> y;
  Shape out;
  if (axis == 0) {
    y.assign(x.begin() + static_cast<std::ptrdiff_t>(begin * n),
             x.begin() + static_cast<std::ptrdiff_t>(end * n));
    out = {len, n};
  } else {
    y.resize(m * len);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) y[i * len + j] = x[i * n + begin + j];
    out = {m, len};
  }
  return make_result(OpKind::slice, "slice", {a}, out, std::move(y),
                     [axis, m, n, begin, len](std::span<const double>, std::span<const double> g,
                                              GradSink& s) {
                       std::vector<double> gx(m * n, 0.0);
                       if (axis == 0) {
                         std::copy(g.begin(), g.end(), gx.begin() + static_cast<std::ptrdiff_t>(begin * n));
                       } else {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < len; ++j) gx[i * n + begin + j] = g[i * len + j];
                       }
                       s.accumulate(0, gx);
                     });
}

DiffArray concat(std::span<const DiffArray> parts, int axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  if (axis != 0 && axis != 1) shape_fail("concat", fmt::format("axis {} out of range", axis));
  for (const auto& p : parts) require_rank2("concat", p);
  const int other = 1 - axis;
  const std::size_t fixed = parts[0].shape()[static_cast<std::size_t>(other)];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape()[static_cast<std::size_t>(other)] != fixed) {
      shape_fail("concat", fmt::format("part {} does not match {} along axis {}",
                                       shape_string(p.shape()), shape_string(parts[0].shape()), other));
    }
    extents.push_back(p.shape()[static_cast<std::size_t>(axis)]);
    total += extents.back();
  }
  Shape out = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> y(total * fixed);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].values();
    if (axis == 0) {
      std::copy(x.begin(), x.end(), y.begin() + static_cast<std::ptrdiff_t>(offset * fixed));
    } else {
      for (std::size_t i = 0; i < fixed; ++i)
        for (std::size_t j = 0; j < extents[k]; ++j) y[i * total + offset + j] = x[i * extents[k] + j];
    }
    offset += extents[k];
  }
  std::vector<DiffArray> inputs(parts.begin(), parts.end());
  return make_result(OpKind::concat, "concat", std::move(inputs), out, std::move(y),
                     [axis, fixed, total, extents](std::span<const double>, std::span<const double> g,
                                                   GradSink& s) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < extents.size(); ++k) {
                         if (s.wants(k)) {
                           std::vector<double> gk(extents[k] * fixed);
                           if (axis == 0) {
                             std::copy(g.begin() + static_cast<std::ptrdiff_t>(offset * fixed),
                                       g.begin() + static_cast<std::ptrdiff_t>((offset + extents[k]) * fixed),
                                       gk.begin());
                           } else {
                             for (std::size_t i = 0; i < fixed; ++i)
                               for (std::size_t j = 0; j < extents[k]; ++j)
                                 gk[i * extents[k] + j] = g[i * total + offset + j];
                           }
                           s.accumulate(k, gk);
                         }
                         offset += extents[k];
                       }
                     });
}

DiffArray broadcast_rows(const DiffArray& row, std::size_t rows) {
  require_rank2("broadcast_rows", row);
  if (row.shape()[0] != 1) shape_fail("broadcast_rows", "expected a 1 x n row, got " + shape_string(row.shape()));
  if (rows == 0) shape_fail("broadcast_rows", "zero rows requested");
  const std::size_t n = row.shape()[1];
  std::vector<double> y(rows * n);
  auto x = row.values();
  for (std::size_t i = 0; i < rows; ++i) std::copy(x.begin(), x.end(), y.begin() + static_cast<std::ptrdiff_t>(i * n));
  return make_result(OpKind::broadcast_rows, "broadcast_rows", {row}, {rows, n}, std::move(y),
                     [rows, n](std::span<const double>, std::span<const double> g, GradSink& s) {
                       std::vector<double> gx(n, 0.0);
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < n; ++j) gx[j] += g[i * n + j];
                       s.accumulate(0, gx);
                     });
}

DiffArray reshape(const DiffArray& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    shape_fail("reshape", fmt::format("cannot view {} as {}", shape_string(a.shape()), shape_string(shape)));
  }
  std::vector<double> y(a.values().begin(), a.values().end());
  return make_result(OpKind::reshape, "reshape", {a}, std::move(shape), std::move(y),
                     [](std::span<const double>, std::span<const double> g, GradSink& s) {
                       s.accumulate(0, g);
                     });
}

DiffArray clip(const DiffArray& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument(fmt::format("clip: empty interval [{}, {}]", lo, hi));
  return unary(
      OpKind::clip, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

DiffArray apply_primitive(OpKind kind, std::span<const DiffArray> in, const OpAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(fmt::format("{}: expected {} inputs, got {}", op_name(kind), n, in.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: arity(2); return matmul(in[0], in[1]);
    case OpKind::add: arity(2); return add(in[0], in[1]);
    case OpKind::sub: arity(2); return sub(in[0], in[1]);
    case OpKind::mul: arity(2); return mul(in[0], in[1]);
    case OpKind::minimum: arity(2); return minimum(in[0], in[1]);
    case OpKind::exp: arity(1); return exp(in[0]);
    case OpKind::log: arity(1); return log(in[0]);
    case OpKind::tanh: arity(1); return tanh(in[0]);
    case OpKind::softplus: arity(1); return softplus(in[0]);
    case OpKind::abs: arity(1); return abs(in[0]);
    case OpKind::exprel: arity(1); return exprel(in[0]);
    case OpKind::softmax_lastdim: arity(1); return softmax_lastdim(in[0], attrs.mask);
    case OpKind::log_softmax_lastdim: arity(1); return log_softmax_lastdim(in[0], attrs.mask);
    case OpKind::rms_norm: arity(1); return rms_norm(in[0]);
    case OpKind::reduce_sum: arity(1); return reduce_sum(in[0], attrs.reduce_axis);
    case OpKind::reduce_mean: arity(1); return reduce_mean(in[0], attrs.reduce_axis);
    case OpKind::slice: arity(1); return slice(in[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::concat: return concat(in, attrs.axis);
    case OpKind::scale: arity(1); return scale(in[0], attrs.factor);
    case OpKind::transpose: arity(1); return transpose(in[0]);
    case OpKind::broadcast_rows: arity(1); return broadcast_rows(in[0], attrs.rows);
    case OpKind::reshape: arity(1); return reshape(in[0], attrs.shape);
    case OpKind::clip: arity(1); return clip(in[0], attrs.lo, attrs.hi);
    case OpKind::custom: break;
  }
  throw std::invalid_argument(fmt::format("apply_primitive: {} cannot be dispatched generically",
                                          op_name(kind)));
}

}  // namespace mait::num
