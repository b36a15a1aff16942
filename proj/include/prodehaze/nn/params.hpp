#pragma once

#include <map>
#include <string>

#include "prodehaze/image_tensor.hpp"
#include "prodehaze/nn/graph.hpp"

namespace prodehaze::nn {

// Named trainable tensors. Iteration order is by name, which fixes the
// checkpoint layout and every optimiser sweep.
class ParamSet {
 public:
  ImageTensor& add(const std::string& name, ImageTensor value);
  ImageTensor& operator[](const std::string& name);
  const ImageTensor& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  // Same names and shapes, all zeros.
  ParamSet zeros_like() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::map<std::string, ImageTensor> tensors_;
};

// Graph handles for a parameter set; gradients flow into `grads` when given.
class Bound {
 public:
  Bound(Graph& g, const ParamSet& params, ParamSet* grads);
  Var operator[](const std::string& name) const;

 private:
  std::map<std::string, Var> vars_;
};

// params -= lr * grads
void sgd_step(ParamSet& params, const ParamSet& grads, double lr);

// Adam moments for one parameter set; bias-corrected step count in `t`.
struct AdamState {
  ParamSet m, v;
  std::size_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};
AdamState adam_state(const ParamSet& params);
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr);

}  // namespace prodehaze::nn
