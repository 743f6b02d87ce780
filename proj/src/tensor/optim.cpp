#include "stunet/tensor/optim.hpp"

#include <cmath>

#include "stunet/common/error.hpp"

namespace stunet {

template <class T>
void sgd_nesterov_step(const std::string& name, BasicTensor<T>& param, const BasicTensor<T>& grad, double lr,
                       const SgdOptions& options, SgdState<T>& state) {
  if (param.shape() != grad.shape()) {
    throw InvalidInput("gradient for '" + name + "' has shape " + shape_to_string(grad.shape()) +
                       ", parameter has " + shape_to_string(param.shape()));
  }
  auto [it, inserted] = state.momentum.try_emplace(name, param.shape());
  BasicTensor<T>& buf = it->second;
  if (lr == 0.0) return;
  const double mu = options.momentum;
  const double wd = options.weight_decay;
  for (int64_t i = 0; i < param.numel(); ++i) {
    const double g = static_cast<double>(grad[i]) + wd * param[i];
    const double b = mu * buf[i] + g;
    buf[i] = static_cast<T>(b);
    param[i] = static_cast<T>(param[i] - lr * (g + mu * b));
  }
}

template <class T>
void sgd_nesterov_step(std::map<std::string, BasicTensor<T>>& params, const ad::GradMap<T>& grads, double lr,
                       const SgdOptions& options, SgdState<T>& state) {
  for (auto& [name, tensor] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    sgd_nesterov_step(name, tensor, g->second, lr, options, state);
  }
}

double poly_lr(int epoch, int total_epochs, double base_lr, double exponent) {
  if (total_epochs <= 0) throw InvalidInput("poly_lr: total_epochs must be positive");
  if (epoch < 0) throw InvalidInput("poly_lr: epoch must be non-negative");
  if (epoch >= total_epochs) return 0.0;
  return base_lr * std::pow(1.0 - static_cast<double>(epoch) / total_epochs, exponent);
}

template void sgd_nesterov_step(const std::string&, BasicTensor<float>&, const BasicTensor<float>&, double,
                                const SgdOptions&, SgdState<float>&);
template void sgd_nesterov_step(const std::string&, BasicTensor<double>&, const BasicTensor<double>&, double,
                                const SgdOptions&, SgdState<double>&);
template void sgd_nesterov_step(std::map<std::string, BasicTensor<float>>&, const ad::GradMap<float>&, double,
                                const SgdOptions&, SgdState<float>&);
template void sgd_nesterov_step(std::map<std::string, BasicTensor<double>>&, const ad::GradMap<double>&, double,
                                const SgdOptions&, SgdState<double>&);

}  // namespace stunet
