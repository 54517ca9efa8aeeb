#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mait/num/diff_array.hpp"
#include "mait/num/tape.hpp"

namespace mait::num {

/// Epsilon added to the mean square inside rms_norm.
inline constexpr double kRmsNormEps = 1e-10;

/// Below this |z|, exprel switches to its Taylor series.
inline constexpr double kExprelSeriesCutoff = 1e-4;

// Shape conventions: matmul, transpose, slice, concat and broadcast_rows need
// rank-2 inputs. Elementwise binaries take equal shapes, or one side of size 1
// broadcast against the other. Row-wise ops (softmax, log_softmax, rms_norm,
// lastdim reductions) act on the last axis.

DiffArray matmul(const DiffArray& a, const DiffArray& b);
DiffArray transpose(const DiffArray& a);
DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray sub(const DiffArray& a, const DiffArray& b);
DiffArray mul(const DiffArray& a, const DiffArray& b);
DiffArray scale(const DiffArray& a, double factor);
DiffArray exp(const DiffArray& a);
DiffArray log(const DiffArray& a);
DiffArray tanh(const DiffArray& a);
DiffArray softplus(const DiffArray& a);
/// |x| with the right derivative (+1) at 0.
DiffArray abs(const DiffArray& a);
/// (e^z - 1) / z, continuous at 0 where it equals 1.
DiffArray exprel(const DiffArray& a);

/// Row softmax. Entries with mask==0 get probability exactly 0 (additive -inf
/// masking); an empty mask means all entries are allowed. The mask has one
/// entry per element of `a`.
DiffArray softmax_lastdim(const DiffArray& a, std::span<const std::uint8_t> mask = {});
/// Row log-softmax over the unmasked support. Masked outputs are 0 and never
/// receive gradient.
DiffArray log_softmax_lastdim(const DiffArray& a, std::span<const std::uint8_t> mask = {});

/// x / sqrt(mean(x^2) + eps) along the last axis, no gain.
DiffArray rms_norm(const DiffArray& a);

enum class Axis { all, last };
DiffArray reduce_sum(const DiffArray& a, Axis axis = Axis::all);
DiffArray reduce_mean(const DiffArray& a, Axis axis = Axis::all);

/// Half-open range [begin, end) along axis 0 (rows) or 1 (columns).
DiffArray slice(const DiffArray& a, int axis, std::size_t begin, std::size_t end);
DiffArray concat(std::span<const DiffArray> parts, int axis);
/// Repeats a 1 x n row `rows` times.
DiffArray broadcast_rows(const DiffArray& row, std::size_t rows);
DiffArray reshape(const DiffArray& a, Shape shape);
/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
DiffArray clip(const DiffArray& a, double lo, double hi);
/// Elementwise min; gradient goes to `a` on ties.
DiffArray minimum(const DiffArray& a, const DiffArray& b);

/// Attributes for the generic dispatcher.
struct OpAttrs {
  double factor = 1.0;          // scale
  int axis = 0;                 // slice, concat
  std::size_t begin = 0;        // slice
  std::size_t end = 0;          // slice
  Axis reduce_axis = Axis::all; // reductions
  std::vector<std::uint8_t> mask;  // softmax family
  std::size_t rows = 1;         // broadcast_rows
  Shape shape;                  // reshape
  double lo = 0.0, hi = 0.0;    // clip
};

/// Applies one primitive by kind. Throws ShapeError on arity/shape mismatch.
DiffArray apply_primitive(OpKind kind, std::span<const DiffArray> inputs,
                          const OpAttrs& attrs = {});

}  // namespace mait::num
