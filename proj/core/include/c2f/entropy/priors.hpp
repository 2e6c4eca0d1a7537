#pragma once

#include <vector>

#include "c2f/common.hpp"
#include "c2f/entropy/cdf_table.hpp"

namespace c2f::entropy {

/// Train: x + U(-0.5, 0.5). Infer: round half away from zero.
torch::Tensor quantize(const torch::Tensor& x, CodingMode mode, NoiseSource* noise = nullptr);

/// Probability floor applied to every likelihood (2^-16).
inline constexpr double kLikelihoodFloor = 1.0 / 65536.0;

/// -log2 P(v) for a unit-width bin of N(mu, sigma); differentiable.
torch::Tensor gaussian_bits(const torch::Tensor& v, const torch::Tensor& mu,
                            const torch::Tensor& sigma);

/// Scalar convenience overload, evaluated in double precision.
double gaussian_bits(double v, double mu, double sigma);

/// (mu, sigma) maps that parameterize the conditional Gaussian of a latent.
struct EntropyParams {
  torch::Tensor mu;
  torch::Tensor sigma;
};

/// Learned, fully factorized per-channel density. Each channel owns a small
/// monotone network g: R -> (0,1); the cumulative used for coding is the
/// symmetrized c(x) = (g(x - m) + 1 - g(m - x)) / 2 around a learned location
/// m (initialized at zero), so the density is symmetric by construction.
class FactorizedPriorImpl : public torch::nn::Module {
 public:
  explicit FactorizedPriorImpl(int64_t channels);

  /// Likelihood of unit-width bins centred at v; v is (N, C, H, W).
  torch::Tensor likelihood(const torch::Tensor& v);
  torch::Tensor bits(const torch::Tensor& v);

  /// c(x) for x of shape (C, K), in the module's dtype.
  torch::Tensor cumulative(const torch::Tensor& x);

  /// Per-channel integer tables over the coding alphabet.
  std::vector<CdfTable> build_tables();

  int64_t channels() const { return channels_; }

 private:
  torch::Tensor logits(const torch::Tensor& x);

  int64_t channels_;
  std::vector<torch::Tensor> matrices_;
  std::vector<torch::Tensor> biases_;
  std::vector<torch::Tensor> factors_;
  torch::Tensor location_;
};
TORCH_MODULE(FactorizedPrior);

/// Codes an integer-valued (1, C, H, W) tensor channel by channel in raster
/// order with per-channel tables.
void encode_factorized(RangeEncoder& enc, const std::vector<CdfTable>& tables,
                       const torch::Tensor& symbols);
torch::Tensor decode_factorized(RangeDecoder& dec, const std::vector<CdfTable>& tables,
                                at::IntArrayRef shape);
double factorized_cost_bits(const std::vector<CdfTable>& tables, const torch::Tensor& symbols);

}  // namespace c2f::entropy
