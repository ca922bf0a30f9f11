#include "akid/autodiff.hpp"

#include "akid/kernels.hpp"

namespace akid {

namespace {

thread_local Tape* t_active_tape = nullptr;

std::shared_ptr<Node> make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->op = requires_grad ? "parameter" : "constant";
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Variable Variable::constant(Tensor value) { return Variable(make_leaf(std::move(value), false)); }

Variable Variable::parameter(Tensor value) { return Variable(make_leaf(std::move(value), true)); }

const Tensor& Variable::value() const {
  if (!node_) throw StateError("use of an undefined variable");
  return node_->value;
}

bool Variable::requires_grad() const { return node_ && node_->requires_grad; }

void Variable::assign(Tensor value) const {
  if (!node_) throw StateError("assign to an undefined variable");
  if (!node_->inputs.empty()) throw StateError("only leaf variables can be assigned");
  if (value.shape() != node_->value.shape()) {
    throw ShapeError("assign: shape " + value.shape().to_string() + " != " + node_->value.shape().to_string());
  }
  node_->value = std::move(value);
}

Tensor& Variable::mutable_leaf_value() const {
  if (!node_) throw StateError("use of an undefined variable");
  if (!node_->inputs.empty()) throw StateError("only leaf variables can be mutated");
  return node_->value;
}

Variable Variable::deep_copy() const { return Variable(make_leaf(value(), requires_grad())); }

const Tensor* Gradients::find(const Variable& v) const {
  auto it = grads_.find(v.node());
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor Gradients::of(const Variable& v) const {
  if (const Tensor* g = find(v)) return *g;
  return Tensor(v.shape(), v.value().dtype());
}

void Gradients::accumulate(const Node* node, const Tensor& grad) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    grads_.emplace(node, grad);
  } else {
    kernels::accumulate(it->second, grad);
  }
}

void Tape::record(const Variable& v) { records_.push_back(v.node_); }

Gradients Tape::backward(const Variable& root) const {
  if (root.value().numel() != 1) {
    throw ShapeError("backward from a non-scalar root " + root.shape().to_string() + " needs an explicit seed");
  }
  return backward(root, Tensor::full(root.shape(), 1.0, root.value().dtype()));
}

Gradients Tape::backward(const Variable& root, const Tensor& seed) const {
  Gradients grads;
  if (!root.requires_grad()) return grads;
  grads.accumulate(root.node(), seed);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const Node* node = it->get();
    const Tensor* upstream = grads.find(Variable(*it));
    if (upstream == nullptr) continue;
    std::vector<Tensor> input_grads = node->vjp(*upstream);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Variable& input = node->inputs[i];
      if (!input.requires_grad() || i >= input_grads.size()) continue;
      if (input_grads[i].numel() == 0 || input_grads[i].shape() != input.shape()) {
        throw ShapeError("backward of " + node->op + ": gradient for input " + std::to_string(i) + " has shape " +
                         input_grads[i].shape().to_string() + ", expected " + input.shape().to_string());
      }
      grads.accumulate(input.node(), input_grads[i]);
    }
  }
  return grads;
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }

TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

Variable make_op(std::string op, Tensor value, std::vector<Variable> inputs, VectorJacobianProduct vjp) {
  bool any_grad = false;
  for (const auto& in : inputs) any_grad = any_grad || in.requires_grad();
  Tape* tape = active_tape();
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->value = std::move(value);
  if (tape != nullptr && any_grad) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->vjp = std::move(vjp);
    Variable out(node);
    tape->record(out);
    return out;
  }
  return Variable(node);
}

}  // namespace akid
