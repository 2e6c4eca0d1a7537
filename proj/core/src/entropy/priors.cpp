#include "c2f/entropy/priors.hpp"

#include <cmath>

namespace c2f::entropy {

namespace {

torch::Tensor std_cdf(const torch::Tensor& x) { return 0.5 * torch::erfc(-x * M_SQRT1_2); }

// |sigmoid(hi) - sigmoid(lo)| evaluated on the side of the logistic where it
// does not saturate.
torch::Tensor logistic_interval(const torch::Tensor& lo, const torch::Tensor& hi) {
  auto sign = -torch::sign(lo + hi).detach();
  sign = torch::where(sign == 0, torch::ones_like(sign), sign);
  return torch::abs(torch::sigmoid(sign * hi) - torch::sigmoid(sign * lo));
}

constexpr std::array<int64_t, 5> kLayerDims = {1, 3, 3, 3, 1};
constexpr double kInitScale = 10.0;

}  // namespace

torch::Tensor quantize(const torch::Tensor& x, CodingMode mode, NoiseSource* noise) {
  if (mode == CodingMode::Infer) return round_half_away(x);
  auto u = noise ? noise->uniform(x.sizes(), x.scalar_type())
                 : torch::rand_like(x) - 0.5;
  return x + u;
}

torch::Tensor gaussian_bits(const torch::Tensor& v, const torch::Tensor& mu,
                            const torch::Tensor& sigma) {
  auto s = sigma.clamp_min(kSigmaMin);
  auto centered = torch::abs(v - mu);
  auto upper = std_cdf((0.5 - centered) / s);
  auto lower = std_cdf((-0.5 - centered) / s);
  auto likelihood = (upper - lower).clamp_min(kLikelihoodFloor);
  return -torch::log2(likelihood);
}

double gaussian_bits(double v, double mu, double sigma) {
  const double centered = std::abs(v - mu);
  const double p = normal_cdf((0.5 - centered) / sigma) - normal_cdf((-0.5 - centered) / sigma);
  return -std::log2(std::max(p, kLikelihoodFloor));
}

FactorizedPriorImpl::FactorizedPriorImpl(int64_t channels) : channels_(channels) {
  const double scale = std::pow(kInitScale, 1.0 / static_cast<double>(kLayerDims.size()));
  const size_t layers = kLayerDims.size() - 1;
  for (size_t i = 0; i < layers; ++i) {
    const int64_t in = kLayerDims[i];
    const int64_t out = kLayerDims[i + 1];
    const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(out)));
    matrices_.push_back(register_parameter("matrix" + std::to_string(i),
                                           torch::full({channels, out, in}, init)));
    biases_.push_back(register_parameter("bias" + std::to_string(i),
                                         torch::rand({channels, out, 1}) - 0.5));
    if (i + 1 < layers)
      factors_.push_back(register_parameter("factor" + std::to_string(i),
                                            torch::zeros({channels, out, 1})));
  }
  location_ = register_parameter("location", torch::zeros({channels, 1, 1}));
}

torch::Tensor FactorizedPriorImpl::logits(const torch::Tensor& x) {
  auto out = x;
  for (size_t i = 0; i < matrices_.size(); ++i) {
    auto matrix = torch::nn::functional::softplus(matrices_[i].to(x.scalar_type()));
    out = torch::matmul(matrix, out) + biases_[i].to(x.scalar_type());
    if (i < factors_.size())
      out = out + torch::tanh(factors_[i].to(x.scalar_type())) * torch::tanh(out);
  }
  return out;
}

torch::Tensor FactorizedPriorImpl::likelihood(const torch::Tensor& v) {
  check_shape(v.dim() == 4 && v.size(1) == channels_, "factorized prior: channel mismatch");
  const auto n = v.size(0);
  const auto h = v.size(2);
  const auto w = v.size(3);
  auto x = v.permute({1, 0, 2, 3}).reshape({channels_, 1, -1});
  auto a = x - location_.to(x.scalar_type());
  auto forward_part = logistic_interval(logits(a - 0.5), logits(a + 0.5));
  auto mirrored_part = logistic_interval(logits(-a - 0.5), logits(-a + 0.5));
  auto lik = 0.5 * (forward_part + mirrored_part);
  return lik.reshape({channels_, n, h, w}).permute({1, 0, 2, 3});
}

torch::Tensor FactorizedPriorImpl::bits(const torch::Tensor& v) {
  return -torch::log2(likelihood(v).clamp_min(kLikelihoodFloor));
}

torch::Tensor FactorizedPriorImpl::cumulative(const torch::Tensor& x) {
  auto xs = x.reshape({channels_, 1, -1});
  auto m = location_.to(xs.scalar_type());
  auto c = 0.5 * (torch::sigmoid(logits(xs - m)) + 1.0 - torch::sigmoid(logits(m - xs)));
  return c.reshape(x.sizes());
}

std::vector<CdfTable> FactorizedPriorImpl::build_tables() {
  torch::NoGradGuard no_grad;
  constexpr int64_t kEdges = 2 * kSymbolBound + 2;
  auto edges = torch::arange(kEdges, torch::kFloat64) - (kSymbolBound + 0.5);
  auto c = cumulative(edges.unsqueeze(0).expand({channels_, kEdges}).contiguous()).contiguous();
  auto acc = c.accessor<double, 2>();

  std::vector<CdfTable> tables;
  tables.reserve(channels_);
  std::vector<double> pmf(kAlphabetSize);
  for (int64_t ch = 0; ch < channels_; ++ch) {
    for (int s = 0; s <= 2 * kSymbolBound; ++s) pmf[s] = acc[ch][s + 1] - acc[ch][s];
    pmf[kEscapeIndex] = acc[ch][0] + (1.0 - acc[ch][kEdges - 1]);
    tables.push_back(quantize_pmf(pmf));
  }
  return tables;
}

void encode_factorized(RangeEncoder& enc, const std::vector<CdfTable>& tables,
                       const torch::Tensor& symbols) {
  check_shape(symbols.dim() == 4 && symbols.size(0) == 1 &&
                  symbols.size(1) == static_cast<int64_t>(tables.size()),
              "encode_factorized: expected (1, C, H, W) with C matching the tables");
  auto s = symbols.to(torch::kFloat32).contiguous();
  const float* data = s.data_ptr<float>();
  const int64_t plane = s.size(2) * s.size(3);
  for (int64_t ch = 0; ch < s.size(1); ++ch)
    for (int64_t i = 0; i < plane; ++i)
      encode_value(enc, tables[ch], round_half_away(static_cast<double>(data[ch * plane + i])));
}

torch::Tensor decode_factorized(RangeDecoder& dec, const std::vector<CdfTable>& tables,
                                at::IntArrayRef shape) {
  check_shape(shape.size() == 4 && shape[0] == 1 &&
                  shape[1] == static_cast<int64_t>(tables.size()),
              "decode_factorized: expected (1, C, H, W) with C matching the tables");
  auto out = torch::empty(shape, torch::kFloat32);
  float* data = out.data_ptr<float>();
  const int64_t plane = shape[2] * shape[3];
  for (int64_t ch = 0; ch < shape[1]; ++ch)
    for (int64_t i = 0; i < plane; ++i)
      data[ch * plane + i] = static_cast<float>(decode_value(dec, tables[ch]));
  return out;
}

double factorized_cost_bits(const std::vector<CdfTable>& tables, const torch::Tensor& symbols) {
  auto s = symbols.to(torch::kFloat32).contiguous();
  const float* data = s.data_ptr<float>();
  const int64_t plane = s.size(2) * s.size(3);
  double bits = 0.0;
  for (int64_t ch = 0; ch < s.size(1); ++ch)
    for (int64_t i = 0; i < plane; ++i)
      bits += tables[ch].cost_bits(round_half_away(static_cast<double>(data[ch * plane + i])));
  return bits;
}

}  // namespace c2f::entropy
