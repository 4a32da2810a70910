#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "osmid/core/tensor.hpp"

namespace osmid::ad {

class Tape;

// Lightweight handle into a tape node. Valid only while the owning
// tape is alive and not cleared.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const std::vector<int>& shape() const;
  int dim(int i) const { return shape().at(static_cast<size_t>(i)); }
  double scalar() const;
};

// Define-by-run reverse-mode tape. Each op records its output tensor,
// parent ids, and a backward closure that scatters the output gradient
// into the parents' gradient buffers. backward() walks nodes in reverse
// creation order, which is a valid topological order by construction.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward
    bool requires_grad = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;  // may be empty for leaves
  };

  Var leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var emit(Tensor value, std::vector<int> parents,
           std::function<void(Tape&, int)> backward) {
    Node n;
    n.value = std::move(value);
    for (int p : parents)
      if (nodes_[static_cast<size_t>(p)].requires_grad) {
        n.requires_grad = true;
        break;
      }
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  // Gradient buffer of a node, allocated (zero) on first access.
  Tensor& grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }

  bool wants_grad(int id) const {
    return nodes_[static_cast<size_t>(id)].requires_grad;
  }

  // Accumulates d into node id if it participates in differentiation.
  void accumulate(int id, const Tensor& d) {
    if (!wants_grad(id)) return;
    Tensor& g = grad_buf(id);
    for (int64_t i = 0; i < d.numel(); ++i) g.data[static_cast<size_t>(i)] += d.data[static_cast<size_t>(i)];
  }

  // Seeds the root gradient with 1 (root must be scalar) and runs the
  // tape backwards. Gradients of leaves with requires_grad are then
  // available via grad().
  void backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward: foreign var");
    Node& r = nodes_[static_cast<size_t>(root.id)];
    if (r.value.numel() != 1)
      throw std::invalid_argument("backward: root must be scalar");
    if (!r.requires_grad) return;
    grad_buf(root.id).data[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || !n.backward) continue;
      if (n.grad.numel() == 0) continue;  // never reached from root
      n.backward(*this, id);
    }
  }

  const Tensor& grad(Var v) {
    return grad_buf(v.id);
  }

  // Per-tape binding cache so that one parameter used in several ops
  // maps to a single leaf (correct gradient accumulation).
  Var bind(const void* key, const Tensor& value, bool requires_grad) {
    auto it = bindings_.find(key);
    if (it != bindings_.end()) return Var{this, it->second};
    Var v = leaf(value, requires_grad);
    bindings_.emplace(key, v.id);
    return v;
  }
  bool bound(const void* key) const { return bindings_.count(key) > 0; }
  Var binding(const void* key) {
    return Var{this, bindings_.at(key)};
  }

  size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    bindings_.clear();
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> bindings_;
};

inline const Tensor& Var::value() const { return tape->node(id).value; }
inline const std::vector<int>& Var::shape() const {
  return tape->node(id).value.shape;
}
inline double Var::scalar() const {
  const Tensor& t = value();
  if (t.numel() != 1) throw std::logic_error("scalar() on non-scalar var");
  return t.data[0];
}

}  // namespace osmid::ad
