#pragma once

#include <vector>

#include "c2f/common.hpp"

namespace c2f::metrics {

/// Mean squared error on the 255 scale: 255^2 * mean((x - y)^2) for inputs in
/// [0, 1]. Differentiable; reduces over everything.
torch::Tensor mse_255(const torch::Tensor& x, const torch::Tensor& y);

/// Per-sample MSE on the [0, 1] scale for (N, ...) inputs.
torch::Tensor mse_unit(const torch::Tensor& x, const torch::Tensor& y);

/// Five-scale MS-SSIM on (N, 3, H, W) inputs in [0, 1], per sample. The
/// Gaussian window (11 taps, sigma 1.5) is truncated to the image size at the
/// coarse scales; contrast-structure terms are floored at 1e-6.
torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y);

/// PSNR in dB from a 255-scale MSE, capped at 100 dB.
double psnr_from_mse255(double mse255);
inline constexpr double kPsnrCap = 100.0;

}  // namespace c2f::metrics
