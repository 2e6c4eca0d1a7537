#pragma once

#include <vector>

#include "c2f/common.hpp"
#include "c2f/entropy/hyperprior.hpp"
#include "c2f/layers.hpp"
#include "c2f/mode_prediction.hpp"

namespace c2f::motion {

/// Bilinearly samples `input` (N, C, H, W) at the k*k kernel taps displaced by
/// `offsets` (N, G*k*k*2, H, W); offsets are (dy, dx) pairs ordered by group
/// then tap. Taps falling outside the map read zero. Returns (N, C, k*k, H, W).
torch::Tensor deform_sample(const torch::Tensor& input, const torch::Tensor& offsets,
                            int64_t kernel, int64_t groups);

/// Deformable convolution without modulation masks; stride 1, "same" padding.
class DeformConv2dImpl : public torch::nn::Module {
 public:
  DeformConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t groups);
  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& offsets);

  int64_t kernel() const { return kernel_; }
  int64_t groups() const { return groups_; }
  int64_t offset_channels() const { return 2 * kernel_ * kernel_ * groups_; }

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  int64_t kernel_;
  int64_t groups_;
};
TORCH_MODULE(DeformConv2d);

/// Two stride-2 convolutions: H x W -> H/4 x W/4.
class FeatureDownsamplerImpl : public torch::nn::Module {
 public:
  explicit FeatureDownsamplerImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& feat);

 private:
  torch::nn::Conv2d conv1_, conv2_;
};
TORCH_MODULE(FeatureDownsampler);

/// Two-conv head over [ref, cur] producing offset features.
class MotionEstimatorImpl : public torch::nn::Module {
 public:
  MotionEstimatorImpl(int64_t feature_channels, int64_t offset_channels);
  torch::Tensor forward(const torch::Tensor& ref, const torch::Tensor& cur);

 private:
  torch::nn::Conv2d conv1_, conv2_;
};
TORCH_MODULE(MotionEstimator);

/// Offsets -> latent at 1/4 resolution (stride-2 conv, residual block,
/// stride-2 conv).
class MotionEncoderImpl : public torch::nn::Module {
 public:
  MotionEncoderImpl(int64_t in_channels, int64_t latent_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_, conv2_;
  nn::ResBlock res_;
};
TORCH_MODULE(MotionEncoder);

class MotionDecoderImpl : public torch::nn::Module {
 public:
  MotionDecoderImpl(int64_t latent_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& y_hat);

 private:
  torch::nn::ConvTranspose2d up1_, up2_;
  nn::ResBlock res_;
};
TORCH_MODULE(MotionDecoder);

/// Two stride-2 transposed convolutions: h x w -> 4h x 4w, channels kept.
class OffsetUpsamplerImpl : public torch::nn::Module {
 public:
  explicit OffsetUpsamplerImpl(int64_t offset_channels);
  torch::Tensor forward(const torch::Tensor& offsets);

 private:
  torch::nn::ConvTranspose2d up1_, up2_;
};
TORCH_MODULE(OffsetUpsampler);

/// Deformable warp of the reference, concatenated with the reference and
/// refined by two convolutions.
class CompensatorImpl : public torch::nn::Module {
 public:
  CompensatorImpl(int64_t feature_channels, int64_t kernel, int64_t groups);
  torch::Tensor forward(const torch::Tensor& ref, const torch::Tensor& offsets);

  DeformConv2d deform{nullptr};

 private:
  torch::nn::Conv2d conv1_, conv2_;
};
TORCH_MODULE(Compensator);

struct MotionConfig {
  int64_t feature_channels = 64;
  int64_t latent_channels = 128;
  int64_t hyper_channels = 128;
  int64_t mode_hidden = 64;
  int64_t deform_kernel = 3;
  int64_t deform_groups = 8;
  /// When false the coarse branch is skipped and the fine branch warps the
  /// reference directly (single-stage baseline).
  bool coarse_to_fine = true;
};

/// Per-branch result of the two-stage motion pipeline.
struct BranchResult {
  torch::Tensor latent;   // quantized (infer) or noisy (train) latent
  torch::Tensor offsets;  // decoded offsets at feature resolution
  torch::Tensor bits;     // (N,) estimated bits; in infer mode the coded size
  std::vector<uint8_t> hyper_bytes;
  std::vector<uint8_t> main_bytes;
};

struct MotionPrediction {
  torch::Tensor intermediate;  // F~_t (equals the reference when coarse_to_fine is off)
  torch::Tensor predicted;     // F-_t
  BranchResult coarse;
  BranchResult fine;
  entropy::EntropyParams fine_params;
  modes::HamcModes fine_modes;  // infer with HAMC only
};

/// Coarse branch (downsample, estimate, factorized-prior coding, upsample,
/// compensate) followed by the fine branch (estimate from F~_t, hyperprior +
/// optional HAMC coding, compensate F~_t).
class C2FMotionImpl : public torch::nn::Module {
 public:
  explicit C2FMotionImpl(const MotionConfig& config);

  MotionPrediction forward_train(const torch::Tensor& ref, const torch::Tensor& cur,
                                 NoiseSource& noise, const modes::GumbelConfig& gumbel,
                                 bool use_hamc);

  /// Batch size 1. Produces the coded segments and the decoder-side features.
  MotionPrediction encode(const torch::Tensor& ref, const torch::Tensor& cur, bool use_hamc);

  MotionPrediction decode(const torch::Tensor& ref, std::span<const uint8_t> coarse_bytes,
                          std::span<const uint8_t> fine_hyper_bytes,
                          std::span<const uint8_t> fine_main_bytes, bool use_hamc);

  /// Decoder-side halves shared by encode() and decode().
  torch::Tensor coarse_offsets(const torch::Tensor& coarse_latent);
  torch::Tensor fine_offsets(const torch::Tensor& fine_latent);

  void freeze();

  const MotionConfig& config() const { return config_; }

  FeatureDownsampler downsampler{nullptr};
  MotionEstimator coarse_estimator{nullptr};
  MotionEncoder coarse_encoder{nullptr};
  MotionDecoder coarse_decoder{nullptr};
  entropy::FactorizedPrior coarse_prior{nullptr};
  OffsetUpsampler upsampler{nullptr};
  Compensator coarse_compensator{nullptr};

  MotionEstimator fine_estimator{nullptr};
  MotionEncoder fine_encoder{nullptr};
  MotionDecoder fine_decoder{nullptr};
  entropy::Hyperprior fine_hyper{nullptr};
  modes::ModeNet mode_net{nullptr};
  Compensator fine_compensator{nullptr};

 private:
  MotionConfig config_;
  std::vector<entropy::CdfTable> coarse_tables_;
};
TORCH_MODULE(C2FMotion);

}  // namespace c2f::motion
