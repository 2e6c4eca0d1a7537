#include "c2f/metrics.hpp"

#include <array>
#include <cmath>

namespace c2f::metrics {

torch::Tensor mse_255(const torch::Tensor& x, const torch::Tensor& y) {
  check_shape(x.sizes() == y.sizes(), "distortion_mse: shape mismatch");
  return (x - y).square().mean() * (255.0 * 255.0);
}

torch::Tensor mse_unit(const torch::Tensor& x, const torch::Tensor& y) {
  check_shape(x.sizes() == y.sizes(), "distortion_mse: shape mismatch");
  return (x - y).square().flatten(1).mean(1);
}

double psnr_from_mse255(double mse255) {
  if (mse255 <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse255));
}

namespace {

constexpr std::array<double, 5> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

torch::Tensor gaussian_window(int64_t size, const torch::TensorOptions& opts) {
  auto coords = torch::arange(size, opts) - (size - 1) / 2.0;
  auto g = torch::exp(-coords.square() / (2.0 * 1.5 * 1.5));
  return g / g.sum();
}

torch::Tensor blur(const torch::Tensor& x, const torch::Tensor& gy, const torch::Tensor& gx) {
  const int64_t c = x.size(1);
  auto wy = gy.view({1, 1, -1, 1}).expand({c, 1, gy.size(0), 1});
  auto wx = gx.view({1, 1, 1, -1}).expand({c, 1, 1, gx.size(0)});
  auto out = torch::nn::functional::conv2d(x, wy, torch::nn::functional::Conv2dFuncOptions().groups(c));
  return torch::nn::functional::conv2d(out, wx, torch::nn::functional::Conv2dFuncOptions().groups(c));
}

// Per-sample (ssim, cs) means at one scale.
std::pair<torch::Tensor, torch::Tensor> ssim_terms(const torch::Tensor& x, const torch::Tensor& y) {
  const auto opts = x.options();
  auto gy = gaussian_window(std::min<int64_t>(11, x.size(2)), opts);
  auto gx = gaussian_window(std::min<int64_t>(11, x.size(3)), opts);
  auto mx = blur(x, gy, gx);
  auto my = blur(y, gy, gx);
  auto sxx = blur(x * x, gy, gx) - mx * mx;
  auto syy = blur(y * y, gy, gx) - my * my;
  auto sxy = blur(x * y, gy, gx) - mx * my;
  auto cs = (2.0 * sxy + kC2) / (sxx + syy + kC2);
  auto lum = (2.0 * mx * my + kC1) / (mx * mx + my * my + kC1);
  return {(lum * cs).flatten(1).mean(1), cs.flatten(1).mean(1)};
}

}  // namespace

torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y) {
  check_shape(x.dim() == 4 && x.sizes() == y.sizes(), "distortion_msssim: shape mismatch");
  auto a = x;
  auto b = y;
  torch::Tensor result;
  for (size_t s = 0; s < kScaleWeights.size(); ++s) {
    auto [ssim, cs] = ssim_terms(a, b);
    const bool last = s + 1 == kScaleWeights.size() || a.size(2) < 2 || a.size(3) < 2;
    auto term = torch::pow((last ? ssim : cs).clamp_min(1e-6), kScaleWeights[s]);
    result = s == 0 ? term : result * term;
    if (last) break;
    a = torch::avg_pool2d(a, 2, 2);
    b = torch::avg_pool2d(b, 2, 2);
  }
  return result;
}

}  // namespace c2f::metrics
