#pragma once

#include <vector>

#include "c2f/entropy/priors.hpp"
#include "c2f/layers.hpp"

namespace c2f::entropy {

/// y -> z at a quarter of y's resolution (stride 1, 2, 2).
class HyperAnalysisImpl : public torch::nn::Module {
 public:
  HyperAnalysisImpl(int64_t latent_channels, int64_t hyper_channels);
  torch::Tensor forward(const torch::Tensor& y);

 private:
  torch::nn::Conv2d conv1_, conv2_, conv3_;
};
TORCH_MODULE(HyperAnalysis);

/// z_hat -> (mu, sigma) at y's resolution. The last stage is a 1x1 parameter
/// net emitting 2*C_l channels split into mu and log-sigma; sigma is clamped
/// to [kSigmaMin, kSigmaMax] in the log domain before exponentiation.
class HyperSynthesisImpl : public torch::nn::Module {
 public:
  HyperSynthesisImpl(int64_t latent_channels, int64_t hyper_channels);
  EntropyParams forward(const torch::Tensor& z_hat);

 private:
  int64_t latent_channels_;
  torch::nn::ConvTranspose2d up1_, up2_;
  torch::nn::Conv2d conv_, param1_, param2_;
};
TORCH_MODULE(HyperSynthesis);

/// Hyper analysis/synthesis pair plus the factorized prior used for z.
class HyperpriorImpl : public torch::nn::Module {
 public:
  HyperpriorImpl(int64_t latent_channels, int64_t hyper_channels);

  struct TrainResult {
    EntropyParams params;
    torch::Tensor z_bits;  // per element, same shape as z
  };
  TrainResult forward_train(const torch::Tensor& y, NoiseSource& noise);

  struct Compressed {
    std::vector<uint8_t> bytes;
    torch::Tensor z_hat;
    EntropyParams params;
    double estimated_bits = 0.0;
  };
  /// Quantizes z, codes it with the frozen tables, and returns (mu, sigma)
  /// recomputed from the decoded z_hat exactly as the decoder will.
  Compressed compress(const torch::Tensor& y);
  EntropyParams decompress(std::span<const uint8_t> bytes, at::IntArrayRef y_shape);

  /// (mu, sigma) from an integer-valued z_hat. Shared by both sides.
  EntropyParams params_from(const torch::Tensor& z_hat);

  /// Rebuilds the integer tables from the current prior parameters.
  void freeze();
  bool frozen() const { return !tables_.empty(); }

  HyperAnalysis analysis{nullptr};
  HyperSynthesis synthesis{nullptr};
  FactorizedPrior prior{nullptr};

 private:
  std::vector<CdfTable> tables_;
};
TORCH_MODULE(Hyperprior);

}  // namespace c2f::entropy
