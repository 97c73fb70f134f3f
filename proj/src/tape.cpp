#include "salmod/tape.hpp"

#include <algorithm>
#include <string>

namespace salmod {

const Tensor& Var::value() const {
  if (!tape) throw GraphError("use of an unbound Var");
  return tape->value(id);
}

const Tape::Node& Tape::node(std::size_t id) const {
  if (id >= nodes_.size()) throw GraphError("node id " + std::to_string(id) + " not on tape");
  return nodes_[id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& value, bool trainable) {
  Node n;
  n.external = &value;
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (std::size_t p : parents) {
    // Parents that are not recorded yet are caught by backward().
    if (p < nodes_.size() && nodes_[p].requires_grad) n.requires_grad = true;
    if (p >= nodes_.size()) n.requires_grad = true;
  }
  n.parents = std::move(parents);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::grad(Var v) const { return grad(v.id); }

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = node(id);
  if (!n.has_grad) throw GraphError("node " + std::to_string(id) + " has no gradient");
  return n.grad;
}

Tensor Tape::grad_or_zero(Var v) const {
  const Node& n = node(v.id);
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value());
}

Tensor& Tape::accumulator(std::size_t id) {
  if (id >= nodes_.size()) throw GraphError("node id " + std::to_string(id) + " not on tape");
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value());
    n.has_grad = true;
  }
  return n.grad;
}

std::vector<std::size_t> Tape::topological_order(std::size_t root) const {
  enum class Mark : unsigned char { unseen, open, done };
  std::vector<Mark> mark(nodes_.size(), Mark::unseen);
  std::vector<std::size_t> order;
  // (node, next parent index) frames of an iterative depth-first search.
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  stack.emplace_back(root, 0);
  mark[root] = Mark::open;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const Node& n = nodes_[id];
    if (next < n.parents.size()) {
      std::size_t p = n.parents[next++];
      if (p >= nodes_.size()) {
        throw GraphError("node " + std::to_string(id) + " references unknown parent " +
                         std::to_string(p));
      }
      if (mark[p] == Mark::open) throw GraphError("cycle detected in computation graph");
      if (mark[p] == Mark::unseen) {
        mark[p] = Mark::open;
        stack.emplace_back(p, 0);
      }
    } else {
      mark[id] = Mark::done;
      order.push_back(id);
      stack.pop_back();
    }
  }
  // Post-order lists parents before children; backward walks it in reverse.
  std::reverse(order.begin(), order.end());
  return order;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw GraphError("loss belongs to another tape");
  const Tensor& lv = node(loss.id).value();
  if (lv.size() != 1) {
    throw ShapeError("backward requires a single-valued loss, got shape " +
                     shape_string(lv.shape()));
  }
  std::vector<std::size_t> order = topological_order(loss.id);
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  accumulator(loss.id)[0] = 1;
  for (std::size_t id : order) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    // Callbacks only touch accumulators, so nodes_ is never reallocated here.
    n.backward(*this, id);
  }
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw GraphError(std::string(op) + ": operands on different tapes");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      Tensor& acc = t.accumulator(p);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      const Tensor& bv = t.value(b);
      Tensor& acc = t.accumulator(a);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      const Tensor& av = t.value(a);
      Tensor& acc = t.accumulator(b);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, Real factor) {
  Tensor out = a.value();
  for (Real& v : out.values()) v *= factor;
  return a.tape->record(std::move(out), {a.id}, [a = a.id, factor](Tape& t, std::size_t self) {
    if (!t.requires_grad(a)) return;
    const Tensor& g = t.grad(self);
    Tensor& acc = t.accumulator(a);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * factor;
  });
}

Var sum(Var a) {
  Real s = 0;
  for (Real v : a.value().values()) s += v;
  return a.tape->record(Tensor({1}, s), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    if (!t.requires_grad(a)) return;
    const Real g = t.grad(self)[0];
    for (Real& v : t.accumulator(a).values()) v += g;
  });
}

}  // namespace salmod
