#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lumos/core/tensor.hpp"

namespace lumos::ad {

class Tape;

// Handle into a tape. Cheap to copy; valid until the tape is cleared.
struct Var {
  int32_t id = -1;
  Tape* tape = nullptr;
  bool ok() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes; backward() walks them newest-first.
// Consumers always have larger ids than producers, so a single reverse sweep
// sees every node's full gradient before invoking its backward closure.
class Tape {
 public:
  Var leaf(const Tensor& value, bool requires_grad = false);
  Var emit(Tensor value, bool requires_grad);
  void set_backward(Var v, std::function<void(Tape&)> fn);

  Tensor& value(Var v) { return nodes_[(size_t)v.id].value; }
  const Tensor& value(Var v) const { return nodes_[(size_t)v.id].value; }

  // Allocates a zero gradient on first touch.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return nodes_[(size_t)v.id].grad.defined(); }
  bool requires_grad(Var v) const { return nodes_[(size_t)v.id].rg; }

  // root must be scalar (numel 1)
  void backward(Var root);

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool rg = false;
    std::function<void(Tape&)> bwd;
  };
  std::vector<Node> nodes_;
};

}  // namespace lumos::ad
