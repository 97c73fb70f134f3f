#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "salmod/tensor.hpp"

namespace salmod {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class GraphError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Reverse-mode differentiation tape. A tape is confined to one thread; run
/// independent forward/backward passes on independent tapes.
class Tape {
public:
  /// Called once during backward with the node's own id; reads grad(self) and
  /// accumulates into the parents through accumulate().
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  /// Leaf that refers to storage owned elsewhere; the tensor must outlive the
  /// tape. A frozen parameter takes no gradient.
  Var parameter(const Tensor& value, bool trainable = true);

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return node(id).value(); }
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return node(id).requires_grad; }

  bool has_grad(Var v) const { return node(v.id).has_grad; }
  /// Throws if the node received no gradient in the last backward pass.
  const Tensor& grad(Var v) const;
  const Tensor& grad(std::size_t id) const;
  Tensor grad_or_zero(Var v) const;

  /// Gradient buffer of a node, materialized as zeros on first use.
  Tensor& accumulator(std::size_t id);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node reachable from
  /// loss in reverse topological order. loss must hold exactly one value.
  void backward(Var loss);

private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;

    const Tensor& value() const { return external ? *external : owned; }
  };

  const Node& node(std::size_t id) const;
  std::vector<std::size_t> topological_order(std::size_t root) const;

  std::vector<Node> nodes_;
};

// Elementary differentiable ops; layer ops live in layers.hpp.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real factor);
Var sum(Var a);

}  // namespace salmod
