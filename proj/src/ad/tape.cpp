#include "lumos/ad/tape.hpp"

#include <stdexcept>

namespace lumos::ad {

Var Tape::leaf(const Tensor& value, bool requires_grad) {
  Node n;
  n.value = value;  // shares storage with the caller's tensor
  n.rg = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{(int32_t)nodes_.size() - 1, this};
}

Var Tape::emit(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.rg = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{(int32_t)nodes_.size() - 1, this};
}

void Tape::set_backward(Var v, std::function<void(Tape&)> fn) {
  nodes_[(size_t)v.id].bwd = std::move(fn);
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[(size_t)v.id];
  if (!n.grad.defined()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (!root.ok() || root.tape != this)
    throw std::invalid_argument("backward: var not on this tape");
  if (value(root).numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  grad(root)[0] = 1.0f;
  for (int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[(size_t)i];
    if (n.rg && n.bwd && n.grad.defined()) n.bwd(*this);
  }
}

}  // namespace lumos::ad
