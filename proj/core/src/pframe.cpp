#include "c2f/pframe.hpp"

namespace c2f {

ModelConfig ModelConfig::standard() { return {}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.motion.feature_channels = 32;
  c.motion.latent_channels = 32;
  c.motion.hyper_channels = 32;
  c.motion.mode_hidden = 32;
  c.residual_latent_channels = 32;
  c.residual_hyper_channels = 32;
  c.skip_hidden = 32;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.motion.feature_channels = 8;
  c.motion.latent_channels = 8;
  c.motion.hyper_channels = 8;
  c.motion.mode_hidden = 8;
  c.motion.deform_groups = 2;
  c.residual_latent_channels = 8;
  c.residual_hyper_channels = 8;
  c.skip_hidden = 8;
  return c;
}

PFrameModelImpl::PFrameModelImpl(const ModelConfig& config) : config_(config) {
  const int64_t cf = config.motion.feature_channels;
  const int64_t cl = config.residual_latent_channels;
  extractor = register_module("extractor", FeatureExtractor(cf));
  reconstructor = register_module("reconstructor", FrameReconstructor(cf));
  motion = register_module("motion", motion::C2FMotion(config.motion));
  residual_encoder = register_module("residual_encoder", motion::MotionEncoder(cf, cl));
  residual_decoder = register_module("residual_decoder", motion::MotionDecoder(cl, cf));
  residual_hyper = register_module("residual_hyper",
                                   entropy::Hyperprior(cl, config.residual_hyper_channels));
  skip_net = register_module("skip_net", modes::SkipNet(cl, config.skip_hidden));
}

void PFrameModelImpl::freeze() {
  motion->freeze();
  residual_hyper->freeze();
}

namespace {
torch::Tensor per_sample_sum(const torch::Tensor& x) { return x.flatten(1).sum(1); }
}  // namespace

PFrameTrainResult PFrameModelImpl::forward_train(const torch::Tensor& ref,
                                                 const torch::Tensor& cur, NoiseSource& noise,
                                                 const modes::GumbelConfig& gumbel) {
  check_shape(ref.dim() == 4 && ref.sizes() == cur.sizes(),
              "P-frame: reference and current frames differ in shape");
  const FrameDims dims{cur.size(2), cur.size(3)};
  PFrameTrainResult out;
  out.reference_feature = extractor(pad_batch(ref));
  out.current_feature = extractor(pad_batch(cur));

  auto pred = motion->forward_train(out.reference_feature, out.current_feature, noise, gumbel,
                                    config_.use_hamc);
  out.intermediate = pred.intermediate;
  out.predicted = pred.predicted;
  out.coarse_bits = pred.coarse.bits;
  out.fine_bits = pred.fine.bits;

  auto y = residual_encoder(out.current_feature - out.predicted);
  auto hyper = residual_hyper->forward_train(y, noise);
  modes::SoftResult coded;
  if (config_.use_harc) {
    coded = modes::harc_train(y, hyper.params, skip_net, gumbel, noise);
  } else {
    auto latent = entropy::quantize(y, CodingMode::Train, &noise);
    coded = {latent, entropy::gaussian_bits(latent, hyper.params.mu, hyper.params.sigma)};
  }
  out.residual_bits = per_sample_sum(coded.bits) + per_sample_sum(hyper.z_bits);
  auto feature = out.predicted + residual_decoder(coded.y_hat);
  out.recon = reconstructor(feature, dims, CodingMode::Train);
  return out;
}

torch::Tensor PFrameModelImpl::residual_keep_mask(const entropy::EntropyParams& params,
                                                  at::IntArrayRef latent_shape) {
  if (!config_.use_harc)
    return torch::ones({latent_shape[1], latent_shape[2], latent_shape[3]}, torch::kBool);
  return modes::infer_keep_mask(skip_net(params));
}

PFrameCoded PFrameModelImpl::encode(const Frame& ref, const Frame& cur) {
  torch::NoGradGuard no_grad;
  check_shape(ref.dims() == cur.dims(), "P-frame: reference and current frames differ in shape");
  const FrameDims dims = cur.dims();
  PFrameCoded out;
  auto ref_feat = extractor(pad_batch(ref.pixels.unsqueeze(0)));
  out.current_feature = extractor(pad_batch(cur.pixels.unsqueeze(0)));

  auto pred = motion->encode(ref_feat, out.current_feature, config_.use_hamc);
  out.segments.coarse = std::move(pred.coarse.main_bytes);
  out.segments.fine_hyper = std::move(pred.fine.hyper_bytes);
  out.segments.fine_main = std::move(pred.fine.main_bytes);
  out.fine_modes = pred.fine_modes;
  out.intermediate = pred.intermediate;
  out.predicted = pred.predicted;

  auto y = residual_encoder(out.current_feature - pred.predicted);
  auto hyper = residual_hyper->compress(y);
  out.keep_mask = residual_keep_mask(hyper.params, y.sizes());
  entropy::RangeEncoder enc;
  auto coded = modes::harc_encode(enc, y, hyper.params, out.keep_mask);
  out.segments.residual_hyper = std::move(hyper.bytes);
  out.segments.residual_main = enc.finish();

  auto feature = pred.predicted + residual_decoder(coded.y_hat);
  out.recon = to_8bit_grid(reconstructor(feature, dims, CodingMode::Infer)).squeeze(0);
  return out;
}

PFrameCoded PFrameModelImpl::decode(const Frame& ref, const PFrameSegments& segments,
                                    FrameDims dims) {
  torch::NoGradGuard no_grad;
  check_shape(ref.dims() == dims, "P-frame: reference does not match the frame dims");
  PFrameCoded out;
  auto ref_feat = extractor(pad_batch(ref.pixels.unsqueeze(0)));
  auto pred = motion->decode(ref_feat, segments.coarse, segments.fine_hyper, segments.fine_main,
                             config_.use_hamc);
  out.fine_modes = pred.fine_modes;
  out.intermediate = pred.intermediate;
  out.predicted = pred.predicted;

  const std::vector<int64_t> shape = {1, config_.residual_latent_channels,
                                      ref_feat.size(2) / 4, ref_feat.size(3) / 4};
  auto params = residual_hyper->decompress(segments.residual_hyper, shape);
  out.keep_mask = residual_keep_mask(params, shape);
  entropy::RangeDecoder dec(segments.residual_main);
  auto y_hat = modes::harc_decode(dec, params, out.keep_mask);

  auto feature = pred.predicted + residual_decoder(y_hat);
  out.recon = to_8bit_grid(reconstructor(feature, dims, CodingMode::Infer)).squeeze(0);
  return out;
}

}  // namespace c2f
