#include "doctest_torch.hpp"

#include <cmath>
#include <random>
#include <set>

#include "c2f/mode_prediction.hpp"

using namespace c2f;
using namespace c2f::modes;
using M = ResolutionMode;

namespace c2f::modes {
std::ostream& operator<<(std::ostream& os, const Region& r) {
  return os << '(' << r.row << ',' << r.col << ' ' << r.height << 'x' << r.width << ')';
}
}  // namespace c2f::modes

namespace {

std::array<M, 4> modes_from(int code) {
  return {M(code & 3), M((code >> 2) & 3), M((code >> 4) & 3), M((code >> 6) & 3)};
}

// Cell coverage count computed independently of is_exact_cover.
bool covers_once(const BlockPartition& p) {
  int count[4][4] = {};
  for (const auto& r : p)
    for (int y = r.row; y < r.row + r.height; ++y)
      for (int x = r.col; x < r.col + r.width; ++x) {
        if (y < 0 || y >= 4 || x < 0 || x >= 4) return false;
        ++count[y][x];
      }
  for (auto& row : count)
    for (int c : row)
      if (c != 1) return false;
  return true;
}

HamcModes random_modes(std::mt19937& rng, int64_t c, int64_t h, int64_t w) {
  auto m4 = torch::empty({c, h / 4, w / 4}, torch::kInt64);
  auto m2 = torch::empty({c, h / 2, w / 2}, torch::kInt64);
  for (int64_t i = 0; i < m4.numel(); ++i) m4.view(-1)[i] = static_cast<int64_t>(rng() % 4);
  for (int64_t i = 0; i < m2.numel(); ++i) m2.view(-1)[i] = static_cast<int64_t>(rng() % 4);
  return {m4, m2};
}

EntropyParams random_params(int64_t c, int64_t h, int64_t w) {
  return {torch::randn({1, c, h, w}) * 2, torch::rand({1, c, h, w}) * 4 + 0.2};
}

// Continuous Gaussian bits of every pooled symbol, block by block.
double oracle_bits(const torch::Tensor& y, const EntropyParams& params, const HamcModes& modes) {
  auto cdf = [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); };
  const int64_t c = y.size(1), h = y.size(2), w = y.size(3);
  double total = 0;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t by = 0; by < h / 4; ++by)
      for (int64_t bx = 0; bx < w / 4; ++bx) {
        std::array<float, 16> yb, mb, sb;
        for (int i = 0; i < 16; ++i) {
          const int64_t r = by * 4 + i / 4, col = bx * 4 + i % 4;
          yb[i] = y[0][ch][r][col].item<float>();
          mb[i] = params.mu[0][ch][r][col].item<float>();
          sb[i] = params.sigma[0][ch][r][col].item<float>();
        }
        std::array<M, 4> sub;
        for (int k = 0; k < 4; ++k)
          sub[k] = M(modes.mode2[ch][by * 2 + k / 2][bx * 2 + k % 2].item<int64_t>());
        auto p = compose_partition(M(modes.mode4[ch][by][bx].item<int64_t>()), sub);
        auto symbols = mode_guided_avgpool(yb, p);
        auto pooled = pooled_params(mb, sb, p);
        for (size_t i = 0; i < p.size(); ++i) {
          const double s = std::max(pooled[i].sigma, static_cast<double>(entropy::kSigmaMin));
          const double prob = cdf((symbols[i] + 0.5 - pooled[i].mu) / s) -
                              cdf((symbols[i] - 0.5 - pooled[i].mu) / s);
          total -= std::log2(std::max(prob, 1e-9));
        }
      }
  return total;
}

}  // namespace

TEST_CASE("every mode combination tiles the block exactly once") {
  int checked = 0;
  for (int m4 = 1; m4 < 4; ++m4) {
    auto p = compose_partition(M(m4), {M::M0, M::M0, M::M0, M::M0});
    CHECK(covers_once(p));
    CHECK(is_exact_cover(p));
    ++checked;
  }
  std::set<size_t> region_counts;
  for (int code = 0; code < 256; ++code) {
    auto p = compose_partition(M::M0, modes_from(code));
    CHECK(covers_once(p));
    CHECK(is_exact_cover(p));
    region_counts.insert(p.size());
    ++checked;
  }
  CHECK(checked == 259);
  CHECK(*region_counts.begin() == 4);
  CHECK(*region_counts.rbegin() == 16);
  CHECK(compose_partition(M::M1, {}).size() == 2);
  CHECK(compose_partition(M::M3, {}).size() == 1);
}

TEST_CASE("mixed subblock modes give the nine-region layout") {
  auto p = compose_partition(M::M0, {M::M1, M::M2, M::M0, M::M3});
  const BlockPartition expected = {
      {0, 0, 1, 2}, {0, 2, 2, 1}, {0, 3, 2, 1}, {1, 0, 1, 2}, {2, 0, 1, 1},
      {2, 1, 1, 1}, {2, 2, 2, 2}, {3, 0, 1, 1}, {3, 1, 1, 1},
  };
  CHECK(p == expected);
}

TEST_CASE("is_exact_cover rejects gaps, overlaps and odd shapes") {
  auto p = compose_partition(M::M3, {});
  auto gap = compose_partition(M::M1, {});
  gap.pop_back();
  CHECK_FALSE(is_exact_cover(gap));
  auto overlap = compose_partition(M::M1, {});
  overlap.push_back({0, 0, 1, 1});
  CHECK_FALSE(is_exact_cover(overlap));
  CHECK_FALSE(is_exact_cover({{0, 0, 4, 4}, {0, 0, 0, 0}}));
  CHECK_FALSE(is_exact_cover({{0, 0, 1, 4}, {1, 0, 3, 4}}));
  CHECK(is_exact_cover(p));
}

TEST_CASE("pooling a 2x2 region of [3, 4, 4, 5]") {
  std::array<float, 16> block{};
  block[0] = 3, block[1] = 4, block[4] = 4, block[5] = 5;
  auto p = compose_partition(M::M0, {M::M3, M::M0, M::M0, M::M0});
  auto symbols = mode_guided_avgpool(block, p);
  REQUIRE(symbols.size() == 13);
  CHECK(symbols[0] == 4);
  auto up = mode_guided_upsample(symbols, p);
  CHECK(up[0] == 4);
  CHECK(up[1] == 4);
  CHECK(up[4] == 4);
  CHECK(up[5] == 4);
  CHECK_THROWS_AS(mode_guided_upsample(std::span(symbols).subspan(1), p), ShapeError);
}

TEST_CASE("pool after upsample after pool is idempotent") {
  std::mt19937 rng(4);
  std::normal_distribution<float> value(0, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<float, 16> block;
    for (auto& v : block) v = value(rng);
    auto p = compose_partition(M(rng() % 4), modes_from(static_cast<int>(rng() % 256)));
    auto once = mode_guided_avgpool(block, p);
    auto up = mode_guided_upsample(once, p);
    std::array<float, 16> upf;
    for (int i = 0; i < 16; ++i) upf[i] = static_cast<float>(up[i]);
    REQUIRE(mode_guided_avgpool(upf, p) == once);
  }
}

TEST_CASE("pooled parameters") {
  std::array<float, 16> mu{}, sigma{};
  for (int i = 0; i < 16; ++i) {
    mu[i] = static_cast<float>(i);
    sigma[i] = 1.0f;
  }
  auto p = compose_partition(M::M3, {});
  auto pooled = pooled_params(mu, sigma, p);
  REQUIRE(pooled.size() == 1);
  CHECK(pooled[0].mu == doctest::Approx(7.5));
  CHECK(pooled[0].sigma == doctest::Approx(0.25).epsilon(1e-6));

  sigma.fill(0.01f);
  pooled = pooled_params(mu, sigma, p);
  CHECK(pooled[0].sigma == doctest::Approx(entropy::kSigmaMin));
}

TEST_CASE("ties resolve deterministically") {
  const std::array<float, 4> tied = {1, 3, 3, 0};
  CHECK(select_mode(tied) == 1);
  auto scores = torch::tensor({2.0f, 2.0f, 2.0f, 2.0f}).view({1, 4});
  CHECK(argmax_lowest(scores, 1).item<int64_t>() == 0);

  auto logits = torch::zeros({1, 2, 2, 3, 3});
  CHECK(infer_keep_mask(logits).all().item<bool>());
  logits.select(2, 1).fill_(1.0);
  CHECK_FALSE(infer_keep_mask(logits).any().item<bool>());
}

TEST_CASE("straight-through selection is one-hot forward") {
  NoiseSource noise(2);
  auto scores = torch::randn({2, 3, 4, 2, 2}, torch::requires_grad());
  GumbelConfig g;
  auto w = select_mode(scores, 2, g, CodingMode::Train, &noise);
  CHECK(torch::allclose(w.sum(2), torch::ones({2, 3, 2, 2})));
  CHECK(((w == 0) | (w == 1)).all().item<bool>());
  w.select(2, 0).sum().backward();
  CHECK(scores.grad().abs().sum().item<double>() > 0);
  auto idx = select_mode(scores, 2, g, CodingMode::Infer, nullptr);
  CHECK(torch::equal(idx, argmax_lowest(scores.detach(), 2)));
}

TEST_CASE("HAMC encode and decode agree for random modes") {
  torch::manual_seed(3);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t c = 3, h = 8, w = 12;
    auto modes = random_modes(rng, c, h, w);
    auto params = random_params(c, h, w);
    auto y = torch::randn({1, c, h, w}) * 5;
    y[0][0][0][0] = 500;  // escape
    entropy::RangeEncoder enc;
    auto coded = hamc_encode(enc, y, params, modes);
    const auto bytes = enc.finish();
    entropy::RangeDecoder dec(bytes);
    auto back = hamc_decode(dec, params, modes);
    REQUIRE(torch::equal(back, coded.y_hat));
    CHECK(bytes.size() * 8.0 <= coded.estimated_bits + 64 + 0.02 * coded.estimated_bits);
    CHECK(bytes.size() * 8.0 >= coded.estimated_bits - 1);
  }
}

TEST_CASE("uniform M3 modes code one symbol per 4x4 block") {
  auto modes = uniform_modes(2, 8, 8, M::M3, M::M0);
  auto params = random_params(2, 8, 8);
  entropy::RangeEncoder enc;
  auto coded = hamc_encode(enc, torch::randn({1, 2, 8, 8}), params, modes);
  CHECK(coded.symbols == 2 * 4);
  auto fine = uniform_modes(2, 8, 8, M::M0, M::M0);
  entropy::RangeEncoder enc2;
  CHECK(hamc_encode(enc2, torch::randn({1, 2, 8, 8}), params, fine).symbols == 2 * 64);
}

TEST_CASE("HARC codes kept elements and zero-fills the rest") {
  torch::manual_seed(4);
  const int64_t c = 4, h = 8, w = 8;
  auto params = random_params(c, h, w);
  auto y = torch::randn({1, c, h, w}) * 4;
  auto keep = torch::rand({c, h, w}) > 0.5;
  entropy::RangeEncoder enc;
  auto coded = harc_encode(enc, y, params, keep);
  CHECK(coded.symbols == keep.sum().item<int64_t>());
  const auto bytes = enc.finish();
  entropy::RangeDecoder dec(bytes);
  auto back = harc_decode(dec, params, keep);
  CHECK(torch::equal(back, coded.y_hat));
  CHECK(back.masked_select(~keep.unsqueeze(0)).abs().sum().item<double>() == 0);

  entropy::RangeEncoder none;
  harc_encode(none, y, params, torch::zeros({c, h, w}, torch::kBool));
  CHECK(none.finish().size() <= 8);
}

TEST_CASE("soft HAMC with one-hot weights matches hard pooling") {
  torch::manual_seed(5);
  std::mt19937 rng(5);
  const int64_t c = 2, h = 8, w = 8;
  auto modes = random_modes(rng, c, h, w);
  auto params = random_params(c, h, w);
  auto y = torch::randn({1, c, h, w}) * 3;
  auto w4 = torch::one_hot(modes.mode4, 4).permute({0, 3, 1, 2}).unsqueeze(0).to(torch::kFloat32);
  auto w2 = torch::one_hot(modes.mode2, 4).permute({0, 3, 1, 2}).unsqueeze(0).to(torch::kFloat32);
  auto soft = soft_hamc(y, params, w4, w2, CodingMode::Infer, nullptr);
  entropy::RangeEncoder enc;
  auto hard = hamc_encode(enc, y, params, modes);
  CHECK(torch::allclose(soft.y_hat, hard.y_hat));
  CHECK(soft.bits.sizes() == at::IntArrayRef({1, c, h / 4, w / 4}));
  CHECK(soft.bits.sum().item<double>() == doctest::Approx(oracle_bits(y, params, modes)).epsilon(1e-4));
  // Table costs add sigma binning and integer-mean centring on top.
  CHECK(soft.bits.sum().item<double>() == doctest::Approx(hard.estimated_bits).epsilon(0.15));
}

TEST_CASE("mode and skip networks produce the documented shapes") {
  ModeNet net(6, 16);
  SkipNet skip(6, 16);
  auto params = random_params(6, 8, 16);
  auto s = net->forward(params);
  CHECK(s.scores4.sizes() == at::IntArrayRef({1, 6, 4, 2, 4}));
  CHECK(s.scores2.sizes() == at::IntArrayRef({1, 6, 4, 4, 8}));
  CHECK(skip->forward(params).sizes() == at::IntArrayRef({1, 6, 2, 8, 16}));
  auto modes = infer_modes(s);
  CHECK(modes.mode4.sizes() == at::IntArrayRef({6, 2, 4}));
  CHECK(modes.mode2.sizes() == at::IntArrayRef({6, 4, 8}));
}
