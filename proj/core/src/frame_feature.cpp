#include "c2f/frame_feature.hpp"

namespace c2f {

void validate_frame(const Frame& frame) {
  const auto& p = frame.pixels;
  check_shape(p.defined() && p.dim() == 3 && p.size(0) == 3 && p.size(1) >= 1 && p.size(2) >= 1,
              "frame: expected a (3, H, W) tensor with H, W >= 1");
  check_shape(torch::isfinite(p).all().item<bool>(), "frame: non-finite pixel values");
  check_shape(p.min().item<double>() >= 0.0 && p.max().item<double>() <= 1.0,
              "frame: pixel values outside [0, 1]");
}

FrameDims padded_dims(FrameDims dims) {
  auto up = [](int64_t v) { return (v + kPadMultiple - 1) / kPadMultiple * kPadMultiple; };
  return {up(dims.height), up(dims.width)};
}

torch::Tensor pad_batch(const torch::Tensor& frames) {
  check_shape(frames.dim() == 4, "pad_frame: expected (N, C, H, W)");
  const FrameDims in{frames.size(2), frames.size(3)};
  const FrameDims out = padded_dims(in);
  if (in == out) return frames;
  namespace F = torch::nn::functional;
  return F::pad(frames, F::PadFuncOptions({0, out.width - in.width, 0, out.height - in.height})
                            .mode(torch::kReplicate));
}

torch::Tensor crop_batch(const torch::Tensor& frames, FrameDims dims) {
  check_shape(frames.dim() == 4 && frames.size(2) >= dims.height && frames.size(3) >= dims.width,
              "crop: frame smaller than the requested dimensions");
  return frames.slice(2, 0, dims.height).slice(3, 0, dims.width);
}

PaddedFrame pad_frame(const Frame& frame) {
  return {{pad_batch(frame.pixels.unsqueeze(0)).squeeze(0)}, frame.dims()};
}

FeatureExtractorImpl::FeatureExtractorImpl(int64_t channels)
    : conv_(register_module("conv", nn::conv(3, channels, 3, 2))),
      blocks_(register_module("blocks", torch::nn::Sequential(nn::ResBlock(channels),
                                                              nn::ResBlock(channels),
                                                              nn::ResBlock(channels)))) {}

torch::Tensor FeatureExtractorImpl::forward(const torch::Tensor& frames) {
  check_shape(frames.dim() == 4 && frames.size(1) == 3 && frames.size(2) % kPadMultiple == 0 &&
                  frames.size(3) % kPadMultiple == 0,
              "extract_features: expected padded (N, 3, H, W) frames");
  return blocks_->forward(conv_(frames));
}

FrameReconstructorImpl::FrameReconstructorImpl(int64_t channels)
    : blocks_(register_module("blocks", torch::nn::Sequential(nn::ResBlock(channels),
                                                              nn::ResBlock(channels),
                                                              nn::ResBlock(channels)))),
      deconv_(register_module("deconv", nn::deconv(channels, 3))) {}

torch::Tensor FrameReconstructorImpl::forward(const torch::Tensor& feat, FrameDims original,
                                              CodingMode mode) {
  check_shape(feat.dim() == 4, "reconstruct_frame: expected (N, C, h, w)");
  const FrameDims padded = padded_dims(original);
  check_shape(2 * feat.size(2) == padded.height && 2 * feat.size(3) == padded.width,
              "reconstruct_frame: feature dims do not match the original frame dims");
  auto out = crop_batch(deconv_(blocks_->forward(feat)), original);
  return mode == CodingMode::Infer ? out.clamp(0.0, 1.0) : out;
}

torch::Tensor to_8bit_grid(const torch::Tensor& pixels) {
  return torch::round(pixels.clamp(0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace c2f
