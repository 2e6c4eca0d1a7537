#include "c2f/entropy/hyperprior.hpp"

#include <cmath>

namespace c2f::entropy {

HyperAnalysisImpl::HyperAnalysisImpl(int64_t latent_channels, int64_t hyper_channels)
    : conv1_(register_module("conv1", nn::conv(latent_channels, hyper_channels, 3))),
      conv2_(register_module("conv2", nn::conv(hyper_channels, hyper_channels, 5, 2))),
      conv3_(register_module("conv3", nn::conv(hyper_channels, hyper_channels, 5, 2))) {}

torch::Tensor HyperAnalysisImpl::forward(const torch::Tensor& y) {
  check_shape(y.dim() == 4 && y.size(2) % 4 == 0 && y.size(3) % 4 == 0,
              "hyper_analyze: latent spatial dims must be divisible by 4");
  auto x = torch::relu(conv1_(y));
  x = torch::relu(conv2_(x));
  return conv3_(x);
}

HyperSynthesisImpl::HyperSynthesisImpl(int64_t latent_channels, int64_t hyper_channels)
    : latent_channels_(latent_channels),
      up1_(register_module("up1", nn::deconv(hyper_channels, hyper_channels))),
      up2_(register_module("up2", nn::deconv(hyper_channels, hyper_channels))),
      conv_(register_module("conv", nn::conv(hyper_channels, hyper_channels, 3))),
      param1_(register_module("param1", nn::conv(hyper_channels, hyper_channels, 1))),
      param2_(register_module("param2", nn::conv(hyper_channels, 2 * latent_channels, 1))) {}

EntropyParams HyperSynthesisImpl::forward(const torch::Tensor& z_hat) {
  auto x = torch::relu(up1_(z_hat));
  x = torch::relu(up2_(x));
  x = torch::relu(conv_(x));
  x = param2_(torch::relu(param1_(x)));
  auto parts = x.split(latent_channels_, 1);
  static const double kLogMin = std::log(kSigmaMin);
  static const double kLogMax = std::log(kSigmaMax);
  return {parts[0], torch::exp(parts[1].clamp(kLogMin, kLogMax))};
}

HyperpriorImpl::HyperpriorImpl(int64_t latent_channels, int64_t hyper_channels)
    : analysis(register_module("analysis", HyperAnalysis(latent_channels, hyper_channels))),
      synthesis(register_module("synthesis", HyperSynthesis(latent_channels, hyper_channels))),
      prior(register_module("prior", FactorizedPrior(hyper_channels))) {}

HyperpriorImpl::TrainResult HyperpriorImpl::forward_train(const torch::Tensor& y,
                                                          NoiseSource& noise) {
  auto z = analysis(y);
  auto z_noisy = quantize(z, CodingMode::Train, &noise);
  return {synthesis(z_noisy), prior->bits(z_noisy)};
}

EntropyParams HyperpriorImpl::params_from(const torch::Tensor& z_hat) {
  return synthesis(z_hat.contiguous());
}

void HyperpriorImpl::freeze() { tables_ = prior->build_tables(); }

HyperpriorImpl::Compressed HyperpriorImpl::compress(const torch::Tensor& y) {
  if (!frozen()) freeze();
  torch::NoGradGuard no_grad;
  Compressed out;
  out.z_hat = round_half_away(analysis(y)).contiguous();
  RangeEncoder enc;
  encode_factorized(enc, tables_, out.z_hat);
  out.bytes = enc.finish();
  out.estimated_bits = factorized_cost_bits(tables_, out.z_hat);
  out.params = params_from(out.z_hat);
  return out;
}

EntropyParams HyperpriorImpl::decompress(std::span<const uint8_t> bytes, at::IntArrayRef y_shape) {
  if (!frozen()) freeze();
  torch::NoGradGuard no_grad;
  check_shape(y_shape.size() == 4, "hyperprior: expected a 4-d latent shape");
  RangeDecoder dec(bytes);
  auto z_hat = decode_factorized(dec, tables_,
                                 {1, prior->channels(), y_shape[2] / 4, y_shape[3] / 4});
  return params_from(z_hat);
}

}  // namespace c2f::entropy
