#pragma once

#include <string>
#include <vector>

#include "c2f/frame_feature.hpp"
#include "c2f/motion_c2f.hpp"

namespace c2f {

struct ModelConfig {
  motion::MotionConfig motion;
  int64_t residual_latent_channels = 128;
  int64_t residual_hyper_channels = 128;
  int64_t skip_hidden = 64;
  bool use_hamc = false;
  bool use_harc = false;

  /// Full-width configuration.
  static ModelConfig standard();
  /// Narrow configuration used for the CPU training ladder.
  static ModelConfig toy();
  /// Smallest configuration, for unit tests and gradient checks.
  static ModelConfig tiny();
};

struct PFrameTrainResult {
  torch::Tensor recon;          // (N, 3, H, W), unclamped
  torch::Tensor coarse_bits;    // (N,)
  torch::Tensor fine_bits;      // (N,)
  torch::Tensor residual_bits;  // (N,)
  torch::Tensor current_feature;
  torch::Tensor reference_feature;
  torch::Tensor intermediate;   // coarse-compensated feature
  torch::Tensor predicted;      // fine-compensated feature
};

/// Entropy-coded payloads of one P-frame, in bitstream order.
struct PFrameSegments {
  std::vector<uint8_t> coarse;
  std::vector<uint8_t> fine_hyper;
  std::vector<uint8_t> fine_main;
  std::vector<uint8_t> residual_hyper;
  std::vector<uint8_t> residual_main;

  size_t total_bytes() const {
    return coarse.size() + fine_hyper.size() + fine_main.size() + residual_hyper.size() +
           residual_main.size();
  }
};

struct PFrameCoded {
  PFrameSegments segments;
  torch::Tensor recon;  // (3, H, W) on the 8-bit grid
  modes::HamcModes fine_modes;
  torch::Tensor keep_mask;  // bool (C, h, w)
  torch::Tensor intermediate;
  torch::Tensor predicted;
  torch::Tensor current_feature;
};

/// Feature-space P-frame codec: extract, two-stage motion compensation,
/// residual coding with a hyperprior (and optional skip prediction),
/// reconstruction.
class PFrameModelImpl : public torch::nn::Module {
 public:
  explicit PFrameModelImpl(const ModelConfig& config);

  /// ref and cur: (N, 3, H, W) at original size; ref is the previous
  /// reconstruction. Uses the differentiable proxies throughout.
  PFrameTrainResult forward_train(const torch::Tensor& ref, const torch::Tensor& cur,
                                  NoiseSource& noise, const modes::GumbelConfig& gumbel);

  PFrameCoded encode(const Frame& ref, const Frame& cur);
  PFrameCoded decode(const Frame& ref, const PFrameSegments& segments, FrameDims dims);

  /// Rebuilds every integer table from the current parameters. Must follow
  /// any parameter change before coding.
  void freeze();

  const ModelConfig& config() const { return config_; }
  void set_mode_prediction(bool hamc, bool harc) {
    config_.use_hamc = hamc;
    config_.use_harc = harc;
  }

  FeatureExtractor extractor{nullptr};
  FrameReconstructor reconstructor{nullptr};
  motion::C2FMotion motion{nullptr};
  motion::MotionEncoder residual_encoder{nullptr};
  motion::MotionDecoder residual_decoder{nullptr};
  entropy::Hyperprior residual_hyper{nullptr};
  modes::SkipNet skip_net{nullptr};

 private:
  torch::Tensor residual_keep_mask(const entropy::EntropyParams& params,
                                   at::IntArrayRef latent_shape);

  ModelConfig config_;
};
TORCH_MODULE(PFrameModel);

}  // namespace c2f
