#include "mait/num/diff_array.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mait::num {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace detail {

void Storage::accumulate(std::span<const double> g) {
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Storage> make_storage(Shape shape, std::vector<double> values,
                                              bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("DiffArray: zero-length axis in shape " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError(fmt::format("DiffArray: shape {} needs {} values, got {}",
                                 shape_string(shape), shape_size(shape), values.size()));
  }
  auto s = std::make_shared<detail::Storage>();
  s->shape = std::move(shape);
  s->value = std::move(values);
  s->requires_grad = requires_grad;
  return s;
}

}  // namespace

DiffArray DiffArray::constant(Shape shape, std::vector<double> values) {
  return DiffArray(make_storage(std::move(shape), std::move(values), false));
}

DiffArray DiffArray::constant(Shape shape, double fill) {
  auto n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

DiffArray DiffArray::parameter(Shape shape, std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("DiffArray::parameter: non-finite initial value");
  }
  return DiffArray(make_storage(std::move(shape), std::move(values), true));
}

DiffArray DiffArray::scalar(double v) { return constant({1}, std::vector<double>{v}); }

DiffArray DiffArray::matrix(std::size_t rows, std::size_t cols,
                            std::initializer_list<double> values) {
  return constant({rows, cols}, std::vector<double>(values));
}

std::size_t DiffArray::cols() const { return s_->shape.empty() ? 1 : s_->shape.back(); }

std::size_t DiffArray::rows() const { return size() / cols(); }

std::span<double> DiffArray::mutable_values() {
  if (!s_->leaf) throw std::logic_error("DiffArray: only leaves can be modified in place");
  return s_->value;
}

double DiffArray::item() const {
  if (size() != 1) {
    throw ShapeError("DiffArray::item: array of shape " + shape_string(shape()) +
                     " is not a scalar");
  }
  return s_->value[0];
}

std::vector<double> DiffArray::grad() const {
  if (s_->grad.empty()) return std::vector<double>(size(), 0.0);
  return s_->grad;
}

DiffArray DiffArray::copy() const {
  auto s = make_storage(s_->shape, s_->value, s_->requires_grad);
  return DiffArray(std::move(s));
}

DiffArray DiffArray::detach() const { return constant(s_->shape, s_->value); }

}  // namespace mait::num
