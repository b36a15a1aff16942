#include "prodehaze/nn/graph.hpp"

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"

namespace prodehaze::nn {

Var Graph::constant(ImageTensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(ImageTensor value, ImageTensor* grad_sink) {
  if (grad_sink) {
    require(grad_sink->same_shape(value), ErrorCode::kShapeMismatch, "gradient sink shape mismatch");
  }
  nodes_.push_back(Node{std::move(value), {}, true, grad_sink, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::record(ImageTensor value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_[v.id].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : Backward{}});
  return Var{nodes_.size() - 1};
}

ImageTensor& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = ImageTensor(n.value.height(), n.value.width(), n.value.channels());
  return n.grad;
}

void Graph::backward(Var loss) {
  require(value(loss).size() == 1, ErrorCode::kInvalidArgument, "backward() needs a scalar loss");
  if (!requires_grad(loss)) return;
  grad(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.sink) {
      kernels::active().axpy(1.0, n.grad.data(), n.sink->data(), n.grad.size());
    }
  }
}

}  // namespace prodehaze::nn
