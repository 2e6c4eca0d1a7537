#pragma once

#include "c2f/common.hpp"
#include "c2f/layers.hpp"

namespace c2f {

/// Padding granularity: covers frame/2 features, /8 latents, /32 hyper-latents.
inline constexpr int64_t kPadMultiple = 32;

struct FrameDims {
  int64_t height = 0;
  int64_t width = 0;

  int64_t pixels() const { return height * width; }
  bool operator==(const FrameDims&) const = default;
};

/// RGB frame, float32 (3, H, W) with values in [0, 1].
struct Frame {
  torch::Tensor pixels;

  FrameDims dims() const { return {pixels.size(1), pixels.size(2)}; }
};

/// Throws ShapeError unless `pixels` is a finite (3, H, W) tensor in [0, 1].
void validate_frame(const Frame& frame);

struct PaddedFrame {
  Frame frame;
  FrameDims original;
};

FrameDims padded_dims(FrameDims dims);

/// Edge-replicates up to the next multiple of kPadMultiple in each dimension.
PaddedFrame pad_frame(const Frame& frame);

/// Batched form over (N, 3, H, W) tensors.
torch::Tensor pad_batch(const torch::Tensor& frames);
torch::Tensor crop_batch(const torch::Tensor& frames, FrameDims dims);

/// conv3x3 stride 2 followed by three residual blocks.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(int64_t channels);
  /// frames: (N, 3, H, W) with H, W multiples of kPadMultiple.
  torch::Tensor forward(const torch::Tensor& frames);

 private:
  torch::nn::Conv2d conv_;
  torch::nn::Sequential blocks_;
};
TORCH_MODULE(FeatureExtractor);

/// Three residual blocks followed by a 4x4 stride-2 transposed convolution.
class FrameReconstructorImpl : public torch::nn::Module {
 public:
  explicit FrameReconstructorImpl(int64_t channels);
  /// Returns (N, 3, H, W) cropped to `original`. Values are clamped to [0, 1]
  /// only in Infer mode.
  torch::Tensor forward(const torch::Tensor& feat, FrameDims original, CodingMode mode);

 private:
  torch::nn::Sequential blocks_;
  torch::nn::ConvTranspose2d deconv_;
};
TORCH_MODULE(FrameReconstructor);

/// Rounds to the nearest 1/255 step; decoded frames are stored at 8 bits.
torch::Tensor to_8bit_grid(const torch::Tensor& pixels);

}  // namespace c2f
