#pragma once

#include <map>
#include <string>

#include "stunet/tensor/autograd.hpp"
#include "stunet/tensor/tensor.hpp"

namespace stunet {

struct SgdOptions {
  double momentum = 0.99;
  double weight_decay = 1e-3;
};

// Momentum buffers keyed by parameter name; created on first update.
template <class T>
struct SgdState {
  std::map<std::string, BasicTensor<T>> momentum;
};

// Nesterov SGD with L2 weight decay folded into the gradient:
//   g' = g + wd * p;  buf = mu * buf + g';  p -= lr * (g' + mu * buf)
// A zero learning rate leaves the parameter untouched.
template <class T>
void sgd_nesterov_step(const std::string& name, BasicTensor<T>& param, const BasicTensor<T>& grad, double lr,
                       const SgdOptions& options, SgdState<T>& state);

// Applies the update to every parameter in `params` that has a gradient.
template <class T>
void sgd_nesterov_step(std::map<std::string, BasicTensor<T>>& params, const ad::GradMap<T>& grads, double lr,
                       const SgdOptions& options, SgdState<T>& state);

// base_lr * (1 - epoch / total_epochs)^0.9, clamped to 0 at and past the end.
double poly_lr(int epoch, int total_epochs, double base_lr, double exponent = 0.9);

}  // namespace stunet
