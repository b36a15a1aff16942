#include "prodehaze/nn/params.hpp"

#include <cmath>

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"

namespace prodehaze::nn {

ImageTensor& ParamSet::add(const std::string& name, ImageTensor value) {
  auto [it, inserted] = tensors_.insert_or_assign(name, std::move(value));
  return it->second;
}

ImageTensor& ParamSet::operator[](const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorCode::kInvalidArgument, "unknown parameter: " + name);
  return it->second;
}

const ImageTensor& ParamSet::operator[](const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorCode::kInvalidArgument, "unknown parameter: " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : tensors_) out.add(name, ImageTensor(t.height(), t.width(), t.channels()));
  return out;
}

Bound::Bound(Graph& g, const ParamSet& params, ParamSet* grads) {
  for (const auto& [name, t] : params) vars_[name] = g.parameter(t, grads ? &(*grads)[name] : nullptr);
}

Var Bound::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) fail(ErrorCode::kInvalidArgument, "unbound parameter: " + name);
  return it->second;
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr) {
  if (lr == 0.0) return;
  for (auto& [name, t] : params) {
    const ImageTensor& gr = grads[name];
    kernels::active().axpy(-lr, gr.data(), t.data(), t.size());
  }
}

AdamState adam_state(const ParamSet& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr) {
  ++state.t;
  if (lr == 0.0) return;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const ImageTensor& g = grads[name];
    ImageTensor& m = state.m[name];
    ImageTensor& v = state.v[name];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace prodehaze::nn
