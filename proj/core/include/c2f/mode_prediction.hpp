#pragma once

#include <array>
#include <span>
#include <vector>

#include "c2f/common.hpp"
#include "c2f/entropy/priors.hpp"
#include "c2f/entropy/range_coder.hpp"

namespace c2f::modes {

using entropy::EntropyParams;

/// Block edge (in latent elements) of the adaptive-resolution grid.
inline constexpr int kBlockSize = 4;
inline constexpr int kBlockArea = kBlockSize * kBlockSize;
inline constexpr int kModeCount = 4;

/// 2x2 level: M0 four 1x1, M1 two 1x2 (row pairs), M2 two 2x1 (column pairs),
/// M3 one 2x2. 4x4 level: M0 defers to the four subblock modes, M1 two 2x4
/// (top/bottom), M2 two 4x2 (left/right), M3 one 4x4.
enum class ResolutionMode : uint8_t { M0 = 0, M1 = 1, M2 = 2, M3 = 3 };

/// Rectangle inside a 4x4 block, in block-local element coordinates.
struct Region {
  int row = 0;
  int col = 0;
  int height = 1;
  int width = 1;

  int size() const { return height * width; }
  bool operator==(const Region&) const = default;
};

/// Regions tiling one 4x4 block, ordered by the raster position of their
/// top-left corners.
using BlockPartition = std::vector<Region>;

/// Regions of one 2x2 subblock whose top-left element is (row, col).
BlockPartition subblock_partition(ResolutionMode mode, int row, int col);

/// Subblock order in `modes2`: top-left, top-right, bottom-left, bottom-right.
/// The subblock modes are consulted only when mode4 == M0.
BlockPartition compose_partition(ResolutionMode mode4,
                                 const std::array<ResolutionMode, 4>& modes2);

/// True when the regions are disjoint, in canonical order, of an allowed
/// shape, and cover all 16 cells.
bool is_exact_cover(const BlockPartition& partition);

/// One symbol per region: the mean of the region's values rounded half away
/// from zero. `block` is row-major 4x4.
std::vector<int32_t> mode_guided_avgpool(std::span<const float, kBlockArea> block,
                                         const BlockPartition& partition);

/// Fills each region with its symbol. Throws ShapeError on a count mismatch.
std::array<int32_t, kBlockArea> mode_guided_upsample(std::span<const int32_t> symbols,
                                                     const BlockPartition& partition);

struct PooledParam {
  double mu;
  double sigma;
};

/// mu_bar = mean(mu); sigma_bar = max(sigma_min, sqrt(sum sigma^2) / n).
std::vector<PooledParam> pooled_params(std::span<const float, kBlockArea> mu,
                                       std::span<const float, kBlockArea> sigma,
                                       const BlockPartition& partition);

struct GumbelConfig {
  double temperature = 1.0;
  bool noise_enabled = true;
  /// Hard one-hot forward with the soft gradient. When false the soft weights
  /// are returned as-is (used by gradient checks).
  bool straight_through = true;
};

/// Argmax with lowest-index tie-break.
int select_mode(std::span<const float> scores);
torch::Tensor argmax_lowest(const torch::Tensor& scores, int64_t dim);

/// Train: selection weights with the same shape as `scores`. Infer: int64
/// indices with `dim` removed.
torch::Tensor select_mode(const torch::Tensor& scores, int64_t dim, const GumbelConfig& gumbel,
                          CodingMode mode, NoiseSource* noise);

struct ModeScores {
  torch::Tensor scores4;  // (N, C, 4, h/4, w/4)
  torch::Tensor scores2;  // (N, C, 4, h/2, w/2)
};

/// Two-branch resolution-mode predictor over [mu, sigma].
class ModeNetImpl : public torch::nn::Module {
 public:
  ModeNetImpl(int64_t latent_channels, int64_t hidden);
  ModeScores forward(const EntropyParams& params);

 private:
  int64_t latent_channels_;
  torch::nn::Conv2d trunk1_, trunk2_, trunk3_, head2_, head4_;
};
TORCH_MODULE(ModeNet);

/// Per-element keep/skip predictor over [mu, sigma]. Logits are laid out as
/// (N, C, 2, h, w) with index 0 = keep, 1 = skip.
class SkipNetImpl : public torch::nn::Module {
 public:
  SkipNetImpl(int64_t latent_channels, int64_t hidden);
  torch::Tensor forward(const EntropyParams& params);

 private:
  int64_t latent_channels_;
  torch::nn::Conv2d trunk1_, trunk2_, trunk3_, head_;
};
TORCH_MODULE(SkipNet);

/// Differentiable coding proxy: reconstruction and bits.
struct SoftResult {
  torch::Tensor y_hat;
  torch::Tensor bits;  // HAMC: per 4x4 block (N, C, h/4, w/4); HARC: per element
};

/// Blends every candidate pooling with the selection weights w4
/// (N, C, 4, h/4, w/4) and w2 (N, C, 4, h/2, w/2). The 4x4-level M0 term is
/// itself the w2-weighted blend over subblock modes. `quant` picks noise
/// (Train) or rounding (Infer) for the pooled values.
SoftResult soft_hamc(const torch::Tensor& y, const EntropyParams& params,
                     const torch::Tensor& w4, const torch::Tensor& w2, CodingMode quant,
                     NoiseSource* noise);

/// keep: (N, C, h, w) weights in [0, 1]; skipped elements reconstruct to 0 and
/// cost nothing.
SoftResult soft_harc(const torch::Tensor& y, const EntropyParams& params,
                     const torch::Tensor& keep, CodingMode quant, NoiseSource* noise);

/// Hard per-channel modes of one latent (batch size 1).
struct HamcModes {
  torch::Tensor mode4;  // int64 (C, h/4, w/4)
  torch::Tensor mode2;  // int64 (C, h/2, w/2)
};

HamcModes infer_modes(const ModeScores& scores);
HamcModes uniform_modes(int64_t channels, int64_t height, int64_t width, ResolutionMode mode4,
                        ResolutionMode mode2);

/// Keep mask (bool, (C, h, w)) from skip logits; ties keep.
torch::Tensor infer_keep_mask(const torch::Tensor& skip_logits);

struct CodedLatent {
  torch::Tensor y_hat;  // (1, C, h, w), integer valued
  int64_t symbols = 0;
  double estimated_bits = 0.0;
};

/// Symbol order: channels ascending, 4x4 blocks in raster order, regions in
/// canonical order. Each region symbol is coded as round(mean) - round(mu_bar)
/// under the Gaussian table of sigma_bar's bin.
CodedLatent hamc_encode(entropy::RangeEncoder& enc, const torch::Tensor& y,
                        const EntropyParams& params, const HamcModes& modes);
torch::Tensor hamc_decode(entropy::RangeDecoder& dec, const EntropyParams& params,
                          const HamcModes& modes);

/// Kept elements in raster order over (channel, row, col).
CodedLatent harc_encode(entropy::RangeEncoder& enc, const torch::Tensor& y,
                        const EntropyParams& params, const torch::Tensor& keep_mask);
torch::Tensor harc_decode(entropy::RangeDecoder& dec, const EntropyParams& params,
                          const torch::Tensor& keep_mask);

/// Training-time entry points: run the net, select with Gumbel, blend.
SoftResult hamc_train(const torch::Tensor& y, const EntropyParams& params, ModeNet& net,
                      const GumbelConfig& gumbel, NoiseSource& noise);
SoftResult harc_train(const torch::Tensor& y, const EntropyParams& params, SkipNet& net,
                      const GumbelConfig& gumbel, NoiseSource& noise);

}  // namespace c2f::modes
