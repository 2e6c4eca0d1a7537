#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace c2f::testing {

/// Scalar function of a list of float64 leaf tensors.
using ScalarFn = std::function<torch::Tensor(const std::vector<torch::Tensor>&)>;

/// Worst relative error between the autograd directional derivative and a
/// central finite difference, over `directions` random directions.
inline double directional_grad_error(const ScalarFn& f, std::vector<torch::Tensor> inputs,
                                     int directions = 4, double eps = 1e-6, uint64_t seed = 0) {
  for (auto& x : inputs) x = x.detach().to(torch::kFloat64).requires_grad_();
  auto value = f(inputs);
  auto grads = torch::autograd::grad({value}, inputs, {}, false, false, true);
  auto gen = at::detail::createCPUGenerator(seed);
  double worst = 0.0;
  for (int d = 0; d < directions; ++d) {
    std::vector<torch::Tensor> dir;
    double analytic = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
      dir.push_back(torch::randn(inputs[i].sizes(), gen, torch::kFloat64));
      if (grads[i].defined()) analytic += (grads[i] * dir[i]).sum().item<double>();
    }
    torch::NoGradGuard ng;
    std::vector<torch::Tensor> plus, minus;
    for (size_t i = 0; i < inputs.size(); ++i) {
      plus.push_back(inputs[i] + eps * dir[i]);
      minus.push_back(inputs[i] - eps * dir[i]);
    }
    const double fd = (f(plus) - f(minus)).item<double>() / (2 * eps);
    const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(fd - analytic) / scale);
  }
  return worst;
}

}  // namespace c2f::testing
