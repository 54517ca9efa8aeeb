#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mait/num/diff_array.hpp"

namespace mait::num {

enum class OpKind {
  matmul,
  add,
  mul,
  exp,
  tanh,
  softplus,
  softmax_lastdim,
  rms_norm,
  reduce_sum,
  reduce_mean,
  slice,
  concat,
  scale,
  // auxiliary primitives used by the model and loss
  sub,
  log,
  abs,
  exprel,
  log_softmax_lastdim,
  transpose,
  broadcast_rows,
  reshape,
  clip,
  minimum,
  custom,
};

const char* op_name(OpKind kind);

/// Writes input gradients for one recorded node.
class GradSink {
 public:
  GradSink(std::span<const std::shared_ptr<detail::Storage>> inputs, double fault_factor)
      : inputs_(inputs), fault_factor_(fault_factor) {}

  std::size_t input_count() const { return inputs_.size(); }
  bool wants(std::size_t i) const { return inputs_[i]->requires_grad; }
  std::span<const double> input_value(std::size_t i) const { return inputs_[i]->value; }
  const Shape& input_shape(std::size_t i) const { return inputs_[i]->shape; }
  void accumulate(std::size_t i, std::span<const double> g);

 private:
  std::span<const std::shared_ptr<detail::Storage>> inputs_;
  double fault_factor_;
  std::vector<double> scratch_;
};

/// (output values, output grad, sink)
using BackwardFn =
    std::function<void(std::span<const double>, std::span<const double>, GradSink&)>;

struct TapeNode {
  OpKind kind;
  std::string label;
  std::vector<std::shared_ptr<detail::Storage>> inputs;
  std::shared_ptr<detail::Storage> output;
  BackwardFn backward;
};

/// Single-shot record of primitive applications in topological order.
///
/// Primitives are recorded on the tape made active on the calling thread by a
/// `TapeScope`. With no active tape, primitives only compute values. A tape may
/// be differentiated once; build a new tape for every forward pass.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<TapeNode>& nodes() const { return nodes_; }

  void record(OpKind kind, std::string label,
              std::vector<std::shared_ptr<detail::Storage>> inputs,
              const std::shared_ptr<detail::Storage>& output, BackwardFn backward);

  /// Accumulates d(output)/d(leaf) into every reachable leaf that requires grad.
  void backward(const DiffArray& output);

 private:
  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<TapeNode> nodes_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard() : scope_(nullptr) {}

 private:
  TapeScope scope_;
};

/// Convenience: record on a fresh tape and run backward on `output`.
void backward(Tape& tape, const DiffArray& output);

/// Wraps a primitive result: checks finiteness, and records it on the active
/// tape when any input requires grad.
DiffArray make_result(OpKind kind, std::string label, std::vector<DiffArray> inputs,
                      Shape shape, std::vector<double> values, BackwardFn backward);

namespace testing {

/// Scales every input gradient produced by `kind` while alive. Used to verify
/// that the gradient checker catches broken backward rules.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(OpKind kind, double factor);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
};

}  // namespace testing

}  // namespace mait::num
