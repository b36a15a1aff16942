#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze::nn {

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep visits every consumer before its producers. Only nodes that depend on
// a parameter carry gradients.
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  Var constant(ImageTensor value);
  // A leaf whose gradient is added into `grad_sink` (same shape) by backward().
  // A null sink makes the leaf differentiable without exporting its gradient.
  Var parameter(ImageTensor value, ImageTensor* grad_sink);

  // Records an op result. `fn` runs during backward() only when the result
  // requires a gradient and has received one.
  Var record(ImageTensor value, std::initializer_list<Var> inputs, Backward fn);

  const ImageTensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of a node, allocated (zero) on first access.
  ImageTensor& grad(Var v);
  ImageTensor& grad(std::size_t id) { return grad(Var{id}); }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(loss)/d(loss) = 1 for a 1x1x1 node and sweeps the tape.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    ImageTensor value;
    ImageTensor grad;
    bool requires_grad = false;
    ImageTensor* sink = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace prodehaze::nn
