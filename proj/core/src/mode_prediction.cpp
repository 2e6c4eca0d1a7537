#include "c2f/mode_prediction.hpp"

#include <algorithm>
#include <cmath>

#include "c2f/entropy/cdf_table.hpp"
#include "c2f/layers.hpp"

namespace c2f::modes {

using entropy::gaussian_bits;
using entropy::kSigmaMin;

BlockPartition subblock_partition(ResolutionMode mode, int row, int col) {
  switch (mode) {
    case ResolutionMode::M0:
      return {{row, col, 1, 1}, {row, col + 1, 1, 1}, {row + 1, col, 1, 1}, {row + 1, col + 1, 1, 1}};
    case ResolutionMode::M1:
      return {{row, col, 1, 2}, {row + 1, col, 1, 2}};
    case ResolutionMode::M2:
      return {{row, col, 2, 1}, {row, col + 1, 2, 1}};
    case ResolutionMode::M3:
      return {{row, col, 2, 2}};
  }
  return {};
}

BlockPartition compose_partition(ResolutionMode mode4,
                                 const std::array<ResolutionMode, 4>& modes2) {
  BlockPartition regions;
  switch (mode4) {
    case ResolutionMode::M1:
      regions = {{0, 0, 2, 4}, {2, 0, 2, 4}};
      break;
    case ResolutionMode::M2:
      regions = {{0, 0, 4, 2}, {0, 2, 4, 2}};
      break;
    case ResolutionMode::M3:
      regions = {{0, 0, 4, 4}};
      break;
    case ResolutionMode::M0:
      for (int s = 0; s < 4; ++s) {
        auto sub = subblock_partition(modes2[s], 2 * (s / 2), 2 * (s % 2));
        regions.insert(regions.end(), sub.begin(), sub.end());
      }
      break;
  }
  std::stable_sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return regions;
}

bool is_exact_cover(const BlockPartition& partition) {
  static constexpr std::array<std::pair<int, int>, 7> kShapes = {
      {{1, 1}, {1, 2}, {2, 1}, {2, 2}, {2, 4}, {4, 2}, {4, 4}}};
  std::array<int, kBlockArea> hits{};
  for (size_t i = 0; i < partition.size(); ++i) {
    const auto& r = partition[i];
    if (std::find(kShapes.begin(), kShapes.end(), std::pair{r.height, r.width}) == kShapes.end())
      return false;
    if (r.row < 0 || r.col < 0 || r.row + r.height > kBlockSize || r.col + r.width > kBlockSize)
      return false;
    if (i > 0) {
      const auto& p = partition[i - 1];
      if (p.row > r.row || (p.row == r.row && p.col >= r.col)) return false;
    }
    for (int y = r.row; y < r.row + r.height; ++y)
      for (int x = r.col; x < r.col + r.width; ++x) ++hits[y * kBlockSize + x];
  }
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

std::vector<int32_t> mode_guided_avgpool(std::span<const float, kBlockArea> block,
                                         const BlockPartition& partition) {
  std::vector<int32_t> symbols;
  symbols.reserve(partition.size());
  for (const auto& r : partition) {
    double sum = 0.0;
    for (int y = r.row; y < r.row + r.height; ++y)
      for (int x = r.col; x < r.col + r.width; ++x) sum += block[y * kBlockSize + x];
    symbols.push_back(round_half_away(sum / r.size()));
  }
  return symbols;
}

std::array<int32_t, kBlockArea> mode_guided_upsample(std::span<const int32_t> symbols,
                                                     const BlockPartition& partition) {
  if (symbols.size() != partition.size())
    throw ShapeError("mode_guided_upsample: " + std::to_string(symbols.size()) +
                     " symbols for " + std::to_string(partition.size()) + " regions");
  std::array<int32_t, kBlockArea> block{};
  for (size_t i = 0; i < partition.size(); ++i) {
    const auto& r = partition[i];
    for (int y = r.row; y < r.row + r.height; ++y)
      for (int x = r.col; x < r.col + r.width; ++x) block[y * kBlockSize + x] = symbols[i];
  }
  return block;
}

std::vector<PooledParam> pooled_params(std::span<const float, kBlockArea> mu,
                                       std::span<const float, kBlockArea> sigma,
                                       const BlockPartition& partition) {
  std::vector<PooledParam> out;
  out.reserve(partition.size());
  for (const auto& r : partition) {
    double mu_sum = 0.0;
    double var_sum = 0.0;
    for (int y = r.row; y < r.row + r.height; ++y)
      for (int x = r.col; x < r.col + r.width; ++x) {
        const double s = sigma[y * kBlockSize + x];
        mu_sum += mu[y * kBlockSize + x];
        var_sum += s * s;
      }
    const double n = r.size();
    out.push_back({mu_sum / n, std::max(kSigmaMin, std::sqrt(var_sum) / n)});
  }
  return out;
}

int select_mode(std::span<const float> scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

torch::Tensor argmax_lowest(const torch::Tensor& scores, int64_t dim) {
  const int64_t k = scores.size(dim);
  auto is_max = scores == scores.amax(dim, /*keepdim=*/true);
  std::vector<int64_t> view(scores.dim(), 1);
  view[dim < 0 ? dim + scores.dim() : dim] = k;
  auto rank = torch::arange(k, 0, -1, torch::kInt64).view(view);
  return (is_max.to(torch::kInt64) * rank).argmax(dim);
}

torch::Tensor select_mode(const torch::Tensor& scores, int64_t dim, const GumbelConfig& gumbel,
                          CodingMode mode, NoiseSource* noise) {
  if (mode == CodingMode::Infer) return argmax_lowest(scores, dim);
  if (!(gumbel.temperature > 0)) throw Error("select_mode: temperature must be positive");
  auto perturbed = scores;
  if (gumbel.noise_enabled) {
    if (noise == nullptr) throw Error("select_mode: Gumbel noise requested without a source");
    perturbed = scores + noise->gumbel(scores.sizes(), scores.scalar_type());
  }
  auto soft = torch::softmax(perturbed / gumbel.temperature, dim);
  if (!gumbel.straight_through) return soft;
  auto hard = torch::one_hot(argmax_lowest(perturbed, dim), scores.size(dim))
                  .movedim(-1, dim)
                  .to(soft.scalar_type());
  return hard - soft.detach() + soft;
}

ModeNetImpl::ModeNetImpl(int64_t latent_channels, int64_t hidden)
    : latent_channels_(latent_channels),
      trunk1_(register_module("trunk1", nn::conv(2 * latent_channels, hidden, 3))),
      trunk2_(register_module("trunk2", nn::conv(hidden, hidden, 3))),
      trunk3_(register_module("trunk3", nn::conv(hidden, hidden, 3))),
      head2_(register_module("head2", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                          hidden, kModeCount * latent_channels, 2)
                                          .stride(2)))),
      head4_(register_module("head4", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                          hidden, kModeCount * latent_channels, 4)
                                          .stride(4)))) {
  // Start from full resolution: both heads favour M0.
  torch::NoGradGuard no_grad;
  for (auto* head : {&head2_, &head4_}) {
    auto bias = (*head)->bias.view({latent_channels, kModeCount});
    bias.zero_();
    bias.select(1, 0).fill_(2.0);
  }
}

ModeScores ModeNetImpl::forward(const EntropyParams& params) {
  const auto& mu = params.mu;
  check_shape(mu.dim() == 4 && mu.size(2) % kBlockSize == 0 && mu.size(3) % kBlockSize == 0,
              "predict_block_modes: latent dims must be divisible by 4");
  auto x = torch::relu(trunk1_(torch::cat({mu, params.sigma}, 1)));
  x = torch::relu(trunk2_(x));
  x = torch::relu(trunk3_(x));
  auto reshape = [&](const torch::Tensor& t) {
    return t.view({t.size(0), latent_channels_, kModeCount, t.size(2), t.size(3)});
  };
  return {reshape(head4_(x)), reshape(head2_(x))};
}

SkipNetImpl::SkipNetImpl(int64_t latent_channels, int64_t hidden)
    : latent_channels_(latent_channels),
      trunk1_(register_module("trunk1", nn::conv(2 * latent_channels, hidden, 3))),
      trunk2_(register_module("trunk2", nn::conv(hidden, hidden, 3))),
      trunk3_(register_module("trunk3", nn::conv(hidden, hidden, 3))),
      head_(register_module("head", nn::conv(hidden, 2 * latent_channels, 1))) {
  torch::NoGradGuard no_grad;
  auto bias = head_->bias.view({latent_channels, 2});
  bias.zero_();
  bias.select(1, 0).fill_(2.0);
}

torch::Tensor SkipNetImpl::forward(const EntropyParams& params) {
  auto x = torch::relu(trunk1_(torch::cat({params.mu, params.sigma}, 1)));
  x = torch::relu(trunk2_(x));
  x = torch::relu(trunk3_(x));
  auto logits = head_(x);
  return logits.view({logits.size(0), latent_channels_, 2, logits.size(2), logits.size(3)});
}

namespace {

torch::Tensor replicate(const torch::Tensor& x, int64_t kh, int64_t kw) {
  auto out = x;
  if (kh > 1) out = out.repeat_interleave(kh, -2);
  if (kw > 1) out = out.repeat_interleave(kw, -1);
  return out;
}

torch::Tensor sum_pool(const torch::Tensor& x, int64_t kh, int64_t kw) {
  if (kh == 1 && kw == 1) return x;
  return torch::avg_pool2d(x, {kh, kw}, {kh, kw}) * static_cast<double>(kh * kw);
}

struct Candidate {
  torch::Tensor recon;  // full resolution
  torch::Tensor bits;   // one entry per pooled value
};

Candidate pooled_candidate(const torch::Tensor& y, const EntropyParams& params, int64_t kh,
                           int64_t kw, CodingMode quant, NoiseSource* noise) {
  torch::Tensor pooled, mu_bar, sigma_bar;
  if (kh == 1 && kw == 1) {
    pooled = y;
    mu_bar = params.mu;
    sigma_bar = params.sigma.clamp_min(kSigmaMin);
  } else {
    const double n = static_cast<double>(kh * kw);
    pooled = torch::avg_pool2d(y, {kh, kw}, {kh, kw});
    mu_bar = torch::avg_pool2d(params.mu, {kh, kw}, {kh, kw});
    sigma_bar = torch::sqrt(torch::avg_pool2d(params.sigma * params.sigma, {kh, kw}, {kh, kw}) / n)
                    .clamp_min(kSigmaMin);
  }
  auto q = entropy::quantize(pooled, quant, noise);
  return {replicate(q, kh, kw), gaussian_bits(q, mu_bar, sigma_bar)};
}

}  // namespace

SoftResult soft_hamc(const torch::Tensor& y, const EntropyParams& params,
                     const torch::Tensor& w4, const torch::Tensor& w2, CodingMode quant,
                     NoiseSource* noise) {
  check_shape(y.dim() == 4 && y.size(2) % kBlockSize == 0 && y.size(3) % kBlockSize == 0,
              "soft_hamc: latent dims must be divisible by 4");
  static constexpr std::array<std::pair<int64_t, int64_t>, 4> kSub = {
      {{1, 1}, {1, 2}, {2, 1}, {2, 2}}};
  static constexpr std::array<std::pair<int64_t, int64_t>, 4> kWhole = {
      {{0, 0}, {2, 4}, {4, 2}, {4, 4}}};

  auto w2_full = replicate(w2, 2, 2);
  torch::Tensor recon_sub, bits_sub;
  for (int m = 0; m < kModeCount; ++m) {
    auto [kh, kw] = kSub[m];
    auto cand = pooled_candidate(y, params, kh, kw, quant, noise);
    auto recon_term = w2_full.select(2, m) * cand.recon;
    auto bits_term = w2.select(2, m) * sum_pool(cand.bits, 2 / kh, 2 / kw);
    recon_sub = m == 0 ? recon_term : recon_sub + recon_term;
    bits_sub = m == 0 ? bits_term : bits_sub + bits_term;
  }

  auto w4_full = replicate(w4, kBlockSize, kBlockSize);
  auto recon = w4_full.select(2, 0) * recon_sub;
  auto bits = w4.select(2, 0) * sum_pool(bits_sub, 2, 2);
  for (int m = 1; m < kModeCount; ++m) {
    auto [kh, kw] = kWhole[m];
    auto cand = pooled_candidate(y, params, kh, kw, quant, noise);
    recon = recon + w4_full.select(2, m) * cand.recon;
    bits = bits + w4.select(2, m) * sum_pool(cand.bits, kBlockSize / kh, kBlockSize / kw);
  }
  return {recon, bits};
}

SoftResult soft_harc(const torch::Tensor& y, const EntropyParams& params,
                     const torch::Tensor& keep, CodingMode quant, NoiseSource* noise) {
  auto q = entropy::quantize(y, quant, noise);
  return {keep * q, keep * gaussian_bits(q, params.mu, params.sigma)};
}

HamcModes infer_modes(const ModeScores& scores) {
  check_shape(scores.scores4.size(0) == 1, "infer_modes: batch size must be 1");
  return {argmax_lowest(scores.scores4, 2).squeeze(0).contiguous(),
          argmax_lowest(scores.scores2, 2).squeeze(0).contiguous()};
}

HamcModes uniform_modes(int64_t channels, int64_t height, int64_t width, ResolutionMode mode4,
                        ResolutionMode mode2) {
  return {torch::full({channels, height / kBlockSize, width / kBlockSize},
                      static_cast<int64_t>(mode4), torch::kInt64),
          torch::full({channels, height / 2, width / 2}, static_cast<int64_t>(mode2),
                      torch::kInt64)};
}

torch::Tensor infer_keep_mask(const torch::Tensor& skip_logits) {
  check_shape(skip_logits.size(0) == 1, "infer_keep_mask: batch size must be 1");
  auto logits = skip_logits.squeeze(0);
  return (logits.select(1, 0) >= logits.select(1, 1)).contiguous();
}

namespace {

struct LatentView {
  torch::Tensor mu, sigma;
  const float* mu_data;
  const float* sigma_data;
  int64_t channels, height, width;
};

LatentView view_params(const EntropyParams& params) {
  LatentView v;
  v.mu = params.mu.detach().to(torch::kFloat32).contiguous();
  v.sigma = params.sigma.detach().to(torch::kFloat32).contiguous();
  check_shape(v.mu.dim() == 4 && v.mu.size(0) == 1 && v.mu.sizes() == v.sigma.sizes(),
              "entropy params must be (1, C, h, w)");
  v.mu_data = v.mu.data_ptr<float>();
  v.sigma_data = v.sigma.data_ptr<float>();
  v.channels = v.mu.size(1);
  v.height = v.mu.size(2);
  v.width = v.mu.size(3);
  return v;
}

template <typename Fn>
void for_each_block(const LatentView& v, const HamcModes& modes, Fn&& fn) {
  check_shape(v.height % kBlockSize == 0 && v.width % kBlockSize == 0,
              "HAMC: latent dims must be divisible by 4");
  auto m4 = modes.mode4.to(torch::kInt64).contiguous();
  auto m2 = modes.mode2.to(torch::kInt64).contiguous();
  check_shape(m4.size(0) == v.channels && m4.size(1) * kBlockSize == v.height &&
                  m4.size(2) * kBlockSize == v.width,
              "HAMC: 4x4 mode map does not match the latent");
  check_shape(m2.size(0) == v.channels && m2.size(1) * 2 == v.height && m2.size(2) * 2 == v.width,
              "HAMC: 2x2 mode map does not match the latent");
  auto a4 = m4.accessor<int64_t, 3>();
  auto a2 = m2.accessor<int64_t, 3>();
  for (int64_t c = 0; c < v.channels; ++c)
    for (int64_t by = 0; by < v.height / kBlockSize; ++by)
      for (int64_t bx = 0; bx < v.width / kBlockSize; ++bx) {
        std::array<ResolutionMode, 4> sub;
        for (int s = 0; s < 4; ++s)
          sub[s] = static_cast<ResolutionMode>(a2[c][2 * by + s / 2][2 * bx + s % 2]);
        fn(c, by, bx, compose_partition(static_cast<ResolutionMode>(a4[c][by][bx]), sub));
      }
}

std::array<float, kBlockArea> gather_block(const float* plane, int64_t width, int64_t by,
                                           int64_t bx) {
  std::array<float, kBlockArea> block;
  for (int y = 0; y < kBlockSize; ++y)
    for (int x = 0; x < kBlockSize; ++x)
      block[y * kBlockSize + x] = plane[(by * kBlockSize + y) * width + bx * kBlockSize + x];
  return block;
}

void scatter_block(float* plane, int64_t width, int64_t by, int64_t bx,
                   const std::array<int32_t, kBlockArea>& block) {
  for (int y = 0; y < kBlockSize; ++y)
    for (int x = 0; x < kBlockSize; ++x)
      plane[(by * kBlockSize + y) * width + bx * kBlockSize + x] =
          static_cast<float>(block[y * kBlockSize + x]);
}

}  // namespace

CodedLatent hamc_encode(entropy::RangeEncoder& enc, const torch::Tensor& y,
                        const EntropyParams& params, const HamcModes& modes) {
  auto view = view_params(params);
  auto values = y.detach().to(torch::kFloat32).contiguous();
  check_shape(values.sizes() == view.mu.sizes(), "hamc_encode: latent/params shape mismatch");
  const auto& tables = entropy::gaussian_tables();
  const float* data = values.data_ptr<float>();
  CodedLatent out;
  out.y_hat = torch::zeros_like(values);
  float* recon = out.y_hat.data_ptr<float>();
  const int64_t plane = view.height * view.width;

  for_each_block(view, modes, [&](int64_t c, int64_t by, int64_t bx, const BlockPartition& part) {
    const int64_t off = c * plane;
    auto block = gather_block(data + off, view.width, by, bx);
    auto mu = gather_block(view.mu_data + off, view.width, by, bx);
    auto sigma = gather_block(view.sigma_data + off, view.width, by, bx);
    auto symbols = mode_guided_avgpool(block, part);
    auto pooled = pooled_params(mu, sigma, part);
    for (size_t i = 0; i < symbols.size(); ++i) {
      const auto& table = tables[entropy::sigma_bin(pooled[i].sigma)];
      const int32_t coded = symbols[i] - round_half_away(pooled[i].mu);
      entropy::encode_value(enc, table, coded);
      out.estimated_bits += table.cost_bits(coded);
    }
    out.symbols += static_cast<int64_t>(symbols.size());
    scatter_block(recon + off, view.width, by, bx, mode_guided_upsample(symbols, part));
  });
  return out;
}

torch::Tensor hamc_decode(entropy::RangeDecoder& dec, const EntropyParams& params,
                          const HamcModes& modes) {
  auto view = view_params(params);
  const auto& tables = entropy::gaussian_tables();
  auto y_hat = torch::zeros_like(view.mu);
  float* recon = y_hat.data_ptr<float>();
  const int64_t plane = view.height * view.width;

  for_each_block(view, modes, [&](int64_t c, int64_t by, int64_t bx, const BlockPartition& part) {
    const int64_t off = c * plane;
    auto mu = gather_block(view.mu_data + off, view.width, by, bx);
    auto sigma = gather_block(view.sigma_data + off, view.width, by, bx);
    auto pooled = pooled_params(mu, sigma, part);
    std::vector<int32_t> symbols(part.size());
    for (size_t i = 0; i < part.size(); ++i) {
      const auto& table = tables[entropy::sigma_bin(pooled[i].sigma)];
      symbols[i] = entropy::decode_value(dec, table) + round_half_away(pooled[i].mu);
    }
    scatter_block(recon + off, view.width, by, bx, mode_guided_upsample(symbols, part));
  });
  return y_hat;
}

CodedLatent harc_encode(entropy::RangeEncoder& enc, const torch::Tensor& y,
                        const EntropyParams& params, const torch::Tensor& keep_mask) {
  auto view = view_params(params);
  auto values = y.detach().to(torch::kFloat32).contiguous();
  auto keep = keep_mask.to(torch::kBool).contiguous();
  check_shape(values.sizes() == view.mu.sizes(), "harc_encode: latent/params shape mismatch");
  check_shape(keep.numel() == values.numel(), "harc_encode: mask shape mismatch");
  const auto& tables = entropy::gaussian_tables();
  const float* data = values.data_ptr<float>();
  const bool* kept = keep.data_ptr<bool>();

  CodedLatent out;
  out.y_hat = torch::zeros_like(values);
  float* recon = out.y_hat.data_ptr<float>();
  for (int64_t i = 0; i < values.numel(); ++i) {
    if (!kept[i]) continue;
    const int32_t symbol = round_half_away(static_cast<double>(data[i]));
    const double sigma = std::max(kSigmaMin, static_cast<double>(view.sigma_data[i]));
    const auto& table = tables[entropy::sigma_bin(sigma)];
    const int32_t coded = symbol - round_half_away(static_cast<double>(view.mu_data[i]));
    entropy::encode_value(enc, table, coded);
    out.estimated_bits += table.cost_bits(coded);
    ++out.symbols;
    recon[i] = static_cast<float>(symbol);
  }
  return out;
}

torch::Tensor harc_decode(entropy::RangeDecoder& dec, const EntropyParams& params,
                          const torch::Tensor& keep_mask) {
  auto view = view_params(params);
  auto keep = keep_mask.to(torch::kBool).contiguous();
  check_shape(keep.numel() == view.mu.numel(), "harc_decode: mask shape mismatch");
  const auto& tables = entropy::gaussian_tables();
  const bool* kept = keep.data_ptr<bool>();
  auto y_hat = torch::zeros_like(view.mu);
  float* recon = y_hat.data_ptr<float>();
  for (int64_t i = 0; i < y_hat.numel(); ++i) {
    if (!kept[i]) continue;
    const double sigma = std::max(kSigmaMin, static_cast<double>(view.sigma_data[i]));
    const auto& table = tables[entropy::sigma_bin(sigma)];
    recon[i] = static_cast<float>(entropy::decode_value(dec, table) +
                                  round_half_away(static_cast<double>(view.mu_data[i])));
  }
  return y_hat;
}

SoftResult hamc_train(const torch::Tensor& y, const EntropyParams& params, ModeNet& net,
                      const GumbelConfig& gumbel, NoiseSource& noise) {
  auto scores = net->forward(params);
  auto w4 = select_mode(scores.scores4, 2, gumbel, CodingMode::Train, &noise);
  auto w2 = select_mode(scores.scores2, 2, gumbel, CodingMode::Train, &noise);
  return soft_hamc(y, params, w4, w2, CodingMode::Train, &noise);
}

SoftResult harc_train(const torch::Tensor& y, const EntropyParams& params, SkipNet& net,
                      const GumbelConfig& gumbel, NoiseSource& noise) {
  auto logits = net->forward(params);
  auto keep = select_mode(logits, 2, gumbel, CodingMode::Train, &noise).select(2, 0);
  return soft_harc(y, params, keep, CodingMode::Train, &noise);
}

}  // namespace c2f::modes
