#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "soonet/errors.hpp"
#include "soonet/numerics/tensor.hpp"

namespace soonet::num {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Single-threaded record of primitive operations. Each node owns its value
/// and, after backward(), its adjoint. Backward walks nodes in exact reverse
/// recording order and may run once per tape.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{"leaf", std::move(value), {}, requires_grad, nullptr});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an operation result. The adjoint closure is dropped when no
  /// input requires a gradient, so constant-only graphs carry no backward.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> inputs,
                BackwardFn backward) {
    if (backward_done_) throw UsageError("cannot record on a tape after backward()");
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.valid() && &in.tape() != this) {
        throw UsageError(std::string("operand of ") + op + " belongs to another tape");
      }
      needs = needs || (in.valid() && requires_grad(in.id()));
    }
    nodes_.push_back(Node{op, std::move(value), {}, needs, needs ? std::move(backward) : nullptr});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Adjoint of a node; all zeros when nothing flowed into it.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor<T>(n.value.shape(), T{0});
    return Tensor<T>(n.value.shape(), n.grad);
  }

  std::span<const T> grad_span(std::size_t id) const { return nodes_[id].grad; }

  /// Writable adjoint buffer of a node, zero-initialised on first use.
  std::span<T> accumulator(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (&loss.tape() != this) throw UsageError("loss belongs to another tape");
    if (backward_done_) throw UsageError("backward() already ran on this tape; re-record first");
    if (loss.size() != 1) {
      throw UsageError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    backward_done_ = true;
    if (!requires_grad(loss.id())) return;
    accumulator(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      trace_.push_back(i);
      n.backward(*this, i);
    }
  }

  bool backward_done() const { return backward_done_; }
  /// Node ids whose adjoint closures ran, in execution order.
  const std::vector<std::size_t>& backward_trace() const { return trace_; }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> trace_;
  bool backward_done_ = false;
};

}  // namespace soonet::num
