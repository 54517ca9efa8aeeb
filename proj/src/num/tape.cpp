#include "mait/num/tape.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>

namespace mait::num {

namespace {

thread_local Tape* g_active = nullptr;
thread_local bool g_fault_active = false;
thread_local OpKind g_fault_kind = OpKind::custom;
thread_local double g_fault_factor = 1.0;

std::atomic<std::uint64_t> g_next_tape_id{1};

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::exp: return "exp";
    case OpKind::tanh: return "tanh";
    case OpKind::softplus: return "softplus";
    case OpKind::softmax_lastdim: return "softmax_lastdim";
    case OpKind::rms_norm: return "rms_norm";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::reduce_mean: return "reduce_mean";
    case OpKind::slice: return "slice";
    case OpKind::concat: return "concat";
    case OpKind::scale: return "scale";
    case OpKind::sub: return "sub";
    case OpKind::log: return "log";
    case OpKind::abs: return "abs";
    case OpKind::exprel: return "exprel";
    case OpKind::log_softmax_lastdim: return "log_softmax_lastdim";
    case OpKind::transpose: return "transpose";
    case OpKind::broadcast_rows: return "broadcast_rows";
    case OpKind::reshape: return "reshape";
    case OpKind::clip: return "clip";
    case OpKind::minimum: return "minimum";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

void GradSink::accumulate(std::size_t i, std::span<const double> g) {
  auto& in = inputs_[i];
  if (!in->requires_grad) return;
  if (g.size() != in->value.size()) {
    throw std::logic_error(fmt::format("backward: gradient of size {} for input of size {}",
                                       g.size(), in->value.size()));
  }
  if (fault_factor_ != 1.0) {
    scratch_.assign(g.begin(), g.end());
    for (double& v : scratch_) v *= fault_factor_;
    in->accumulate(scratch_);
    return;
  }
  in->accumulate(g);
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

void Tape::record(OpKind kind, std::string label,
                  std::vector<std::shared_ptr<detail::Storage>> inputs,
                  const std::shared_ptr<detail::Storage>& output, BackwardFn backward) {
  if (consumed_) throw std::logic_error("Tape::record: tape already differentiated");
  output->leaf = false;
  output->requires_grad = true;
  output->tape_id = id_;
  output->node_index = nodes_.size();
  nodes_.push_back(TapeNode{kind, std::move(label), std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const DiffArray& output) {
  if (consumed_) throw std::logic_error("Tape::backward: called twice on a single-shot tape");
  if (output.size() != 1) {
    throw ShapeError("Tape::backward: output must be scalar, got shape " +
                     shape_string(output.shape()));
  }
  const auto& out = output.storage();
  if (!out->requires_grad) {
    throw std::logic_error("Tape::backward: output is not connected to any leaf requiring grad");
  }
  consumed_ = true;
  if (out->leaf) {
    out->accumulate(std::vector<double>{1.0});
    return;
  }
  if (out->tape_id != id_) throw std::logic_error("Tape::backward: output belongs to another tape");

  out->grad.assign(1, 1.0);
  for (std::size_t k = out->node_index + 1; k-- > 0;) {
    TapeNode& node = nodes_[k];
    if (node.output->grad.empty()) continue;
    double factor = (g_fault_active && g_fault_kind == node.kind) ? g_fault_factor : 1.0;
    GradSink sink(node.inputs, factor);
    node.backward(node.output->value, node.output->grad, sink);
  }
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active) { g_active = tape; }

TapeScope::~TapeScope() { g_active = previous_; }

void backward(Tape& tape, const DiffArray& output) { tape.backward(output); }

DiffArray make_result(OpKind kind, std::string label, std::vector<DiffArray> inputs, Shape shape,
                      std::vector<double> values, BackwardFn backward) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(fmt::format("{}: non-finite output at flat index {}",
                                     label.empty() ? op_name(kind) : label.c_str(), i));
    }
  }
  auto storage = std::make_shared<detail::Storage>();
  storage->shape = std::move(shape);
  storage->value = std::move(values);
  DiffArray result(storage);

  Tape* tape = g_active;
  if (tape == nullptr) return result;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return result;

  std::vector<std::shared_ptr<detail::Storage>> refs;
  refs.reserve(inputs.size());
  for (const auto& in : inputs) refs.push_back(in.storage());
  tape->record(kind, std::move(label), std::move(refs), storage, std::move(backward));
  return result;
}

namespace testing {

ScopedBackwardFault::ScopedBackwardFault(OpKind kind, double factor) {
  g_fault_active = true;
  g_fault_kind = kind;
  g_fault_factor = factor;
}

ScopedBackwardFault::~ScopedBackwardFault() {
  g_fault_active = false;
  g_fault_factor = 1.0;
}

}  // namespace testing

}  // namespace mait::num
