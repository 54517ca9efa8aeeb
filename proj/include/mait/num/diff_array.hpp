#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mait::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised when a primitive receives inputs whose shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a primitive produces NaN or Inf, or a numeric precondition fails.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Storage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t tape_id = 0;
  std::size_t node_index = 0;

  void accumulate(std::span<const double> g);
};

}  // namespace detail

/// Dense row-major double array that participates in reverse-mode differentiation.
///
/// A DiffArray is a cheap handle: copies alias the same storage, like a tensor
/// reference in most autodiff frameworks. Use `copy()` for an independent buffer.
/// Rank-2 views (`rows()` x `cols()`) fold every leading axis into rows.
class DiffArray {
 public:
  DiffArray() = default;

  static DiffArray constant(Shape shape, std::vector<double> values);
  static DiffArray constant(Shape shape, double fill);
  static DiffArray parameter(Shape shape, std::vector<double> values);
  static DiffArray scalar(double v);
  static DiffArray matrix(std::size_t rows, std::size_t cols,
                          std::initializer_list<double> values);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->value.size(); }
  std::size_t cols() const;
  std::size_t rows() const;

  std::span<const double> values() const { return s_->value; }
  /// Writable view of the values. Only leaves may be mutated in place.
  std::span<double> mutable_values();
  double operator[](std::size_t i) const { return s_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return s_->value[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  bool is_leaf() const { return s_->leaf; }
  bool has_grad() const { return !s_->grad.empty(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() { s_->grad.clear(); }

  /// Deep copy as a new leaf, keeping `requires_grad`.
  DiffArray copy() const;
  /// Same values as a constant leaf, cut from any tape.
  DiffArray detach() const;

  const std::shared_ptr<detail::Storage>& storage() const { return s_; }
  explicit DiffArray(std::shared_ptr<detail::Storage> s) : s_(std::move(s)) {}

 private:
  std::shared_ptr<detail::Storage> s_;
};

}  // namespace mait::num
