#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "akid/tensor.hpp"

namespace akid {

class Variable;

// Maps the upstream gradient of a node's output to one gradient per input.
// Entries for inputs that do not require gradients may be left empty.
using VectorJacobianProduct = std::function<std::vector<Tensor>(const Tensor& upstream)>;

struct Node {
  std::string op;
  Tensor value;
  bool requires_grad = false;
  std::vector<Variable> inputs;
  VectorJacobianProduct vjp;
};

// Handle to a node of the computation. Copies share the node, so two handles
// to a parameter observe the same value.
class Variable {
 public:
  Variable() = default;

  // Leaf that never receives a gradient.
  static Variable constant(Tensor value);
  // Leaf that receives gradients (a trainable parameter or a gradient-check input).
  static Variable parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  const Node* node() const { return node_.get(); }

  // Replaces a leaf's value (optimizer updates, replica sync, checkpoint load).
  // The new value must keep the shape.
  void assign(Tensor value) const;
  // In-place access for leaves; used by the optimizer.
  Tensor& mutable_leaf_value() const;

  // A new leaf with a copy of this value (replica storage).
  Variable deep_copy() const;

  friend bool operator==(const Variable& a, const Variable& b) { return a.node_ == b.node_; }

 private:
  friend Variable make_op(std::string op, Tensor value, std::vector<Variable> inputs, VectorJacobianProduct vjp);
  friend class Tape;
  explicit Variable(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  std::shared_ptr<Node> node_;
};

// Gradients produced by one backward pass, keyed by node identity.
class Gradients {
 public:
  const Tensor* find(const Variable& v) const;
  // Gradient of `v`; zeros when nothing flowed into it.
  Tensor of(const Variable& v) const;
  bool contains(const Variable& v) const { return find(v) != nullptr; }
  void accumulate(const Node* node, const Tensor& grad);

 private:
  std::unordered_map<const Node*, Tensor> grads_;
};

// Ordered record of differentiable operations. Ops record themselves into the
// calling thread's active tape; backward replays the records in reverse and
// sums contributions into shared consumers.
class Tape {
 public:
  void record(const Variable& v);
  Gradients backward(const Variable& root) const;
  Gradients backward(const Variable& root, const Tensor& seed) const;
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  std::vector<std::shared_ptr<Node>> records_;
};

// Makes `tape` the calling thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Builds an op node. Gradient tracking applies only when a tape is active and
// some input requires a gradient; otherwise the result is a constant.
Variable make_op(std::string op, Tensor value, std::vector<Variable> inputs, VectorJacobianProduct vjp);

}  // namespace akid
