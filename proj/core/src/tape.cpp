#include "hfgcn/tape.hpp"

#include <stdexcept>

namespace hfgcn {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var Tape::constant(Tensor value) const {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Tape::variable(Tensor value) const {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Tape::result(Tensor value, std::initializer_list<const Var*> inputs) const {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (recording()) {
    for (const Var* in : inputs) {
      if (in && in->requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  return Var(std::move(node));
}

void Tape::record(std::function<void()> adjoint) {
  if (!recording()) return;
  adjoints_.push_back(std::move(adjoint));
  consumed_ = false;
}

void Tape::backward(const Var& loss) {
  if (!recording()) throw std::logic_error("backward: tape is in inference mode");
  if (consumed_) throw std::logic_error("backward: tape already consumed; run the forward pass again");
  if (!loss.defined() || loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) throw std::logic_error("backward: loss does not depend on any variable");
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = adjoints_.rbegin(); it != adjoints_.rend(); ++it) (*it)();
  adjoints_.clear();
  consumed_ = true;
}

Parameter::Parameter(std::string name, Tensor value, bool decay) : name_(std::move(name)), decay_(decay) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  var_ = Var(std::move(node));
}

}  // namespace hfgcn
