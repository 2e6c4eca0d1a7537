#include "c2f/motion_c2f.hpp"

namespace c2f::motion {

torch::Tensor deform_sample(const torch::Tensor& input, const torch::Tensor& offsets,
                            int64_t kernel, int64_t groups) {
  check_shape(input.dim() == 4 && offsets.dim() == 4, "deform_sample: expected 4-d tensors");
  const int64_t n = input.size(0);
  const int64_t c = input.size(1);
  const int64_t h = input.size(2);
  const int64_t w = input.size(3);
  const int64_t taps = kernel * kernel;
  check_shape(c % groups == 0, "deform_sample: channels not divisible by groups");
  check_shape(offsets.size(0) == n && offsets.size(1) == 2 * taps * groups &&
                  offsets.size(2) == h && offsets.size(3) == w,
              "deform_sample: offsets must be (N, 2*k*k*G, H, W) matching the input");

  const auto opts = input.options();
  auto off = offsets.view({n, groups, taps, 2, h, w});
  auto tap = torch::arange(taps, opts.dtype(torch::kInt64));
  auto tap_y = (torch::div(tap, kernel, "floor") - kernel / 2).to(opts.dtype()).view({1, 1, taps, 1, 1});
  auto tap_x = (torch::remainder(tap, kernel) - kernel / 2).to(opts.dtype()).view({1, 1, taps, 1, 1});
  auto grid_y = torch::arange(h, opts).view({1, 1, 1, h, 1});
  auto grid_x = torch::arange(w, opts).view({1, 1, 1, 1, w});

  auto py = grid_y + tap_y + off.select(3, 0);
  auto px = grid_x + tap_x + off.select(3, 1);
  auto y0 = torch::floor(py).detach();
  auto x0 = torch::floor(px).detach();
  auto fy = py - y0;
  auto fx = px - x0;

  const int64_t cg = c / groups;
  const int64_t positions = taps * h * w;
  auto flat = input.reshape({n, groups, cg, h * w});
  torch::Tensor result;
  for (int corner = 0; corner < 4; ++corner) {
    const int dy = corner / 2;
    const int dx = corner % 2;
    auto cy = y0 + dy;
    auto cx = x0 + dx;
    auto weight = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
    auto valid = (cy >= 0) & (cy <= h - 1) & (cx >= 0) & (cx <= w - 1);
    auto index = (cy.clamp(0, h - 1) * w + cx.clamp(0, w - 1)).to(torch::kInt64);
    index = index.reshape({n, groups, 1, positions}).expand({n, groups, cg, positions});
    auto values = flat.gather(3, index);
    auto term = values * (weight * valid.to(weight.scalar_type())).reshape({n, groups, 1, positions});
    result = corner == 0 ? term : result + term;
  }
  return result.reshape({n, c, taps, h, w});
}

DeformConv2dImpl::DeformConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t groups)
    : kernel_(kernel), groups_(groups) {
  check_shape(in % groups == 0, "DeformConv2d: input channels not divisible by groups");
  // Same initialization as an ordinary convolution of this shape.
  torch::nn::Conv2d reference(torch::nn::Conv2dOptions(in, out, kernel).padding(kernel / 2));
  weight = register_parameter("weight", reference->weight.detach().clone());
  bias = register_parameter("bias", reference->bias.detach().clone());
}

torch::Tensor DeformConv2dImpl::forward(const torch::Tensor& input, const torch::Tensor& offsets) {
  const int64_t n = input.size(0);
  const int64_t h = input.size(2);
  const int64_t w = input.size(3);
  auto sampled = deform_sample(input, offsets, kernel_, groups_);
  auto columns = sampled.reshape({n, -1, h * w});
  auto out = torch::matmul(weight.reshape({weight.size(0), -1}), columns);
  return (out + bias.view({1, -1, 1})).reshape({n, weight.size(0), h, w});
}

FeatureDownsamplerImpl::FeatureDownsamplerImpl(int64_t channels)
    : conv1_(register_module("conv1", nn::conv(channels, channels, 3, 2))),
      conv2_(register_module("conv2", nn::conv(channels, channels, 3, 2))) {}

torch::Tensor FeatureDownsamplerImpl::forward(const torch::Tensor& feat) {
  check_shape(feat.size(2) % 4 == 0 && feat.size(3) % 4 == 0,
              "downsample_features: spatial dims must be divisible by 4");
  return conv2_(torch::relu(conv1_(feat)));
}

MotionEstimatorImpl::MotionEstimatorImpl(int64_t feature_channels, int64_t offset_channels)
    : conv1_(register_module("conv1", nn::conv(2 * feature_channels, feature_channels, 3))),
      conv2_(register_module("conv2", nn::conv(feature_channels, offset_channels, 3))) {}

torch::Tensor MotionEstimatorImpl::forward(const torch::Tensor& ref, const torch::Tensor& cur) {
  check_shape(ref.sizes() == cur.sizes(), "estimate_motion: ref and cur shapes differ");
  return conv2_(torch::relu(conv1_(torch::cat({ref, cur}, 1))));
}

MotionEncoderImpl::MotionEncoderImpl(int64_t in_channels, int64_t latent_channels)
    : conv1_(register_module("conv1", nn::conv(in_channels, latent_channels, 3, 2))),
      conv2_(register_module("conv2", nn::conv(latent_channels, latent_channels, 3, 2))),
      res_(register_module("res", nn::ResBlock(latent_channels))) {}

torch::Tensor MotionEncoderImpl::forward(const torch::Tensor& x) {
  return conv2_(res_(torch::relu(conv1_(x))));
}

MotionDecoderImpl::MotionDecoderImpl(int64_t latent_channels, int64_t out_channels)
    : up1_(register_module("up1", nn::deconv(latent_channels, latent_channels))),
      up2_(register_module("up2", nn::deconv(latent_channels, out_channels))),
      res_(register_module("res", nn::ResBlock(latent_channels))) {
  // Offsets start near zero so compensation starts close to an ordinary conv.
  torch::NoGradGuard no_grad;
  up2_->weight.mul_(0.1);
}

torch::Tensor MotionDecoderImpl::forward(const torch::Tensor& y_hat) {
  return up2_(res_(torch::relu(up1_(y_hat))));
}

OffsetUpsamplerImpl::OffsetUpsamplerImpl(int64_t offset_channels)
    : up1_(register_module("up1", nn::deconv(offset_channels, offset_channels))),
      up2_(register_module("up2", nn::deconv(offset_channels, offset_channels))) {}

torch::Tensor OffsetUpsamplerImpl::forward(const torch::Tensor& offsets) {
  return up2_(torch::relu(up1_(offsets)));
}

CompensatorImpl::CompensatorImpl(int64_t feature_channels, int64_t kernel, int64_t groups)
    : deform(register_module("deform",
                             DeformConv2d(feature_channels, feature_channels, kernel, groups))),
      conv1_(register_module("conv1", nn::conv(2 * feature_channels, feature_channels, 3))),
      conv2_(register_module("conv2", nn::conv(feature_channels, feature_channels, 3))) {}

torch::Tensor CompensatorImpl::forward(const torch::Tensor& ref, const torch::Tensor& offsets) {
  check_shape(ref.size(2) == offsets.size(2) && ref.size(3) == offsets.size(3),
              "compensate: ref and offsets spatial dims differ");
  check_shape(offsets.size(1) == deform->offset_channels(),
              "compensate: offset channels do not match the deformable config");
  auto warped = deform(ref, offsets);
  return conv2_(torch::relu(conv1_(torch::cat({warped, ref}, 1))));
}

C2FMotionImpl::C2FMotionImpl(const MotionConfig& config) : config_(config) {
  const int64_t cf = config.feature_channels;
  const int64_t cl = config.latent_channels;
  const int64_t co = 2 * config.deform_kernel * config.deform_kernel * config.deform_groups;
  if (config.coarse_to_fine) {
    downsampler = register_module("downsampler", FeatureDownsampler(cf));
    coarse_estimator = register_module("coarse_estimator", MotionEstimator(cf, co));
    coarse_encoder = register_module("coarse_encoder", MotionEncoder(co, cl));
    coarse_decoder = register_module("coarse_decoder", MotionDecoder(cl, co));
    coarse_prior = register_module("coarse_prior", entropy::FactorizedPrior(cl));
    upsampler = register_module("upsampler", OffsetUpsampler(co));
    coarse_compensator = register_module(
        "coarse_compensator", Compensator(cf, config.deform_kernel, config.deform_groups));
  }
  fine_estimator = register_module("fine_estimator", MotionEstimator(cf, co));
  fine_encoder = register_module("fine_encoder", MotionEncoder(co, cl));
  fine_decoder = register_module("fine_decoder", MotionDecoder(cl, co));
  fine_hyper = register_module("fine_hyper", entropy::Hyperprior(cl, config.hyper_channels));
  mode_net = register_module("mode_net", modes::ModeNet(cl, config.mode_hidden));
  fine_compensator = register_module(
      "fine_compensator", Compensator(cf, config.deform_kernel, config.deform_groups));
}

torch::Tensor C2FMotionImpl::coarse_offsets(const torch::Tensor& coarse_latent) {
  return upsampler(coarse_decoder(coarse_latent));
}

torch::Tensor C2FMotionImpl::fine_offsets(const torch::Tensor& fine_latent) {
  return fine_decoder(fine_latent);
}

void C2FMotionImpl::freeze() {
  if (config_.coarse_to_fine) coarse_tables_ = coarse_prior->build_tables();
  fine_hyper->freeze();
}

namespace {
torch::Tensor per_sample_sum(const torch::Tensor& x) { return x.flatten(1).sum(1); }
}  // namespace

MotionPrediction C2FMotionImpl::forward_train(const torch::Tensor& ref, const torch::Tensor& cur,
                                              NoiseSource& noise,
                                              const modes::GumbelConfig& gumbel, bool use_hamc) {
  check_shape(ref.sizes() == cur.sizes(), "c2f_motion_predict: ref and cur shapes differ");
  check_shape(ref.size(2) % 16 == 0 && ref.size(3) % 16 == 0,
              "c2f_motion_predict: feature dims must be divisible by 16");
  MotionPrediction out;
  out.intermediate = ref;
  if (config_.coarse_to_fine) {
    auto estimate = coarse_estimator(downsampler(ref), downsampler(cur));
    auto latent = entropy::quantize(coarse_encoder(estimate), CodingMode::Train, &noise);
    out.coarse.latent = latent;
    out.coarse.bits = per_sample_sum(coarse_prior->bits(latent));
    out.coarse.offsets = coarse_offsets(latent);
    out.intermediate = coarse_compensator(ref, out.coarse.offsets);
  } else {
    out.coarse.bits = torch::zeros({ref.size(0)}, ref.options());
  }

  auto y = fine_encoder(fine_estimator(out.intermediate, cur));
  auto hyper = fine_hyper->forward_train(y, noise);
  out.fine_params = hyper.params;
  modes::SoftResult coded;
  if (use_hamc) {
    coded = modes::hamc_train(y, hyper.params, mode_net, gumbel, noise);
  } else {
    auto latent = entropy::quantize(y, CodingMode::Train, &noise);
    coded = {latent, entropy::gaussian_bits(latent, hyper.params.mu, hyper.params.sigma)};
  }
  out.fine.latent = coded.y_hat;
  out.fine.bits = per_sample_sum(coded.bits) + per_sample_sum(hyper.z_bits);
  out.fine.offsets = fine_offsets(coded.y_hat);
  out.predicted = fine_compensator(out.intermediate, out.fine.offsets);
  return out;
}

MotionPrediction C2FMotionImpl::encode(const torch::Tensor& ref, const torch::Tensor& cur,
                                       bool use_hamc) {
  torch::NoGradGuard no_grad;
  check_shape(ref.size(0) == 1 && ref.sizes() == cur.sizes(),
              "c2f encode: expects matching batch-1 features");
  check_shape(ref.size(2) % 16 == 0 && ref.size(3) % 16 == 0,
              "c2f encode: feature dims must be divisible by 16");
  if (config_.coarse_to_fine && coarse_tables_.empty()) freeze();

  MotionPrediction out;
  out.intermediate = ref;
  if (config_.coarse_to_fine) {
    auto estimate = coarse_estimator(downsampler(ref), downsampler(cur));
    auto latent = round_half_away(coarse_encoder(estimate)).contiguous();
    entropy::RangeEncoder enc;
    entropy::encode_factorized(enc, coarse_tables_, latent);
    out.coarse.main_bytes = enc.finish();
    out.coarse.latent = latent;
    out.coarse.bits = torch::tensor({8.0 * out.coarse.main_bytes.size()});
    out.coarse.offsets = coarse_offsets(latent);
    out.intermediate = coarse_compensator(ref, out.coarse.offsets);
  } else {
    out.coarse.bits = torch::zeros({1});
  }

  auto y = fine_encoder(fine_estimator(out.intermediate, cur));
  auto hyper = fine_hyper->compress(y);
  out.fine_params = hyper.params;
  entropy::RangeEncoder enc;
  modes::CodedLatent coded;
  if (use_hamc) {
    out.fine_modes = modes::infer_modes(mode_net(hyper.params));
    coded = modes::hamc_encode(enc, y, hyper.params, out.fine_modes);
  } else {
    coded = modes::harc_encode(enc, y, hyper.params, torch::ones(y.sizes(), torch::kBool));
  }
  out.fine.hyper_bytes = std::move(hyper.bytes);
  out.fine.main_bytes = enc.finish();
  out.fine.latent = coded.y_hat;
  out.fine.bits = torch::tensor(
      {8.0 * (out.fine.hyper_bytes.size() + out.fine.main_bytes.size())});
  out.fine.offsets = fine_offsets(coded.y_hat);
  out.predicted = fine_compensator(out.intermediate, out.fine.offsets);
  return out;
}

MotionPrediction C2FMotionImpl::decode(const torch::Tensor& ref,
                                       std::span<const uint8_t> coarse_bytes,
                                       std::span<const uint8_t> fine_hyper_bytes,
                                       std::span<const uint8_t> fine_main_bytes, bool use_hamc) {
  torch::NoGradGuard no_grad;
  check_shape(ref.size(0) == 1 && ref.size(2) % 16 == 0 && ref.size(3) % 16 == 0,
              "c2f decode: expects a batch-1 feature with dims divisible by 16");
  if (config_.coarse_to_fine && coarse_tables_.empty()) freeze();
  const int64_t cl = config_.latent_channels;
  const int64_t h = ref.size(2);
  const int64_t w = ref.size(3);

  MotionPrediction out;
  out.intermediate = ref;
  if (config_.coarse_to_fine) {
    entropy::RangeDecoder dec(coarse_bytes);
    auto latent = entropy::decode_factorized(dec, coarse_tables_, {1, cl, h / 16, w / 16});
    out.coarse.latent = latent;
    out.coarse.offsets = coarse_offsets(latent);
    out.intermediate = coarse_compensator(ref, out.coarse.offsets);
  }

  const std::vector<int64_t> fine_shape = {1, cl, h / 4, w / 4};
  auto params = fine_hyper->decompress(fine_hyper_bytes, fine_shape);
  out.fine_params = params;
  entropy::RangeDecoder dec(fine_main_bytes);
  torch::Tensor latent;
  if (use_hamc) {
    out.fine_modes = modes::infer_modes(mode_net(params));
    latent = modes::hamc_decode(dec, params, out.fine_modes);
  } else {
    latent = modes::harc_decode(dec, params, torch::ones(fine_shape, torch::kBool));
  }
  out.fine.latent = latent;
  out.fine.offsets = fine_offsets(latent);
  out.predicted = fine_compensator(out.intermediate, out.fine.offsets);
  return out;
}

}  // namespace c2f::motion
