#pragma once

#include "c2f/common.hpp"

namespace c2f::nn {

inline torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

/// Exact 2x upsampling transposed convolution (4x4, stride 2, padding 1).
inline torch::nn::ConvTranspose2d deconv(int64_t in, int64_t out) {
  return torch::nn::ConvTranspose2d(
      torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

/// conv3x3 -> ReLU -> conv3x3, plus identity skip.
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels)
      : conv1_(register_module("conv1", conv(channels, channels, 3))),
        conv2_(register_module("conv2", conv(channels, channels, 3))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    return x + conv2_(torch::relu(conv1_(x)));
  }

 private:
  torch::nn::Conv2d conv1_;
  torch::nn::Conv2d conv2_;
};
TORCH_MODULE(ResBlock);

/// Zeroes every bias in the module tree (used by shape/linearity tests).
inline void zero_biases(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters(true))
    if (item.key().ends_with("bias")) item.value().zero_();
}

}  // namespace c2f::nn
