#include "doctest_torch.hpp"

#include <cmath>
#include <random>

#include "c2f/entropy/cdf_table.hpp"
#include "c2f/entropy/hyperprior.hpp"
#include "c2f/entropy/priors.hpp"

using namespace c2f;
using namespace c2f::entropy;

namespace {

// Probability of [v - 1/2, v + 1/2] under N(mu, sigma) by composite Simpson in
// long double. Shares nothing with the library's erfc-based CDF.
long double simpson_bin_mass(double v, double mu, double sigma) {
  const int n = 4000;
  const long double a = v - 0.5L, b = v + 0.5L, h = (b - a) / n;
  const long double pi = 3.14159265358979323846264338327950288L;
  auto pdf = [&](long double x) {
    const long double z = (x - mu) / sigma;
    return std::exp(-0.5L * z * z) / (sigma * std::sqrt(2.0L * pi));
  };
  long double sum = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) sum += pdf(a + i * h) * (i % 2 ? 4 : 2);
  return sum * h / 3;
}

CdfTable random_table(std::mt19937& rng, int size) {
  std::gamma_distribution<double> g(0.3, 1.0);
  std::vector<double> pmf(size);
  for (auto& p : pmf) p = g(rng);
  return quantize_pmf(pmf);
}

}  // namespace

TEST_CASE("range coder roundtrips random symbols under random tables") {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int alphabet = 2 + static_cast<int>(rng() % 300);
    const auto table = random_table(rng, alphabet);
    const int length = static_cast<int>(rng() % 600);
    std::vector<int> symbols(length);
    RangeEncoder enc;
    for (auto& s : symbols) {
      s = static_cast<int>(rng() % alphabet);
      enc.encode(table.cdf[s], table.freq(s));
    }
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    for (int s : symbols) {
      const int got = table.lookup(dec.peek());
      REQUIRE(got == s);
      dec.consume(table.cdf[got], table.freq(got));
    }
  }
}

TEST_CASE("range coder byte counts") {
  SUBCASE("empty stream") { CHECK(RangeEncoder().finish().size() <= 8); }
  SUBCASE("1000 equiprobable binary symbols") {
    RangeEncoder enc;
    std::mt19937 rng(2);
    for (int i = 0; i < 1000; ++i) enc.encode(rng() % 2 ? kTotalFreq / 2 : 0, kTotalFreq / 2);
    const auto size = enc.finish().size();
    CHECK(size >= 125);
    CHECK(size <= 135);
  }
}

TEST_CASE("raw bits and mixed streams roundtrip") {
  std::mt19937 rng(3);
  RangeEncoder enc;
  std::vector<uint32_t> words(100);
  for (auto& w : words) {
    w = rng();
    enc.encode_u32(w);
    enc.encode_bits(w & 0x7, 3);
  }
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto w : words) {
    CHECK(dec.decode_u32() == w);
    CHECK(dec.decode_bits(3) == (w & 0x7));
  }
}

TEST_CASE("escape values roundtrip and cost their payload") {
  const auto& table = gaussian_tables()[sigma_bin(2.0)];
  const std::vector<int32_t> values = {0, 64, -64, 65, -65, 1000000, -2147483647, 3};
  RangeEncoder enc;
  for (auto v : values) encode_value(enc, table, v);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto v : values) CHECK(decode_value(dec, table) == v);
  CHECK(table.cost_bits(65) == doctest::Approx(table.cost_bits(-65)));
  CHECK(table.cost_bits(65) >= kEscapePayloadBits);
}

TEST_CASE("truncated streams raise DecodeError") {
  std::vector<uint8_t> junk = {0xFF, 0x00, 0x13};
  CHECK_THROWS_AS(RangeDecoder{junk}, DecodeError);

  std::mt19937 rng(9);
  const auto table = random_table(rng, 50);
  RangeEncoder enc;
  for (int i = 0; i < 400; ++i) enc.encode(table.cdf[i % 50], table.freq(i % 50));
  auto bytes = enc.finish();
  bytes.resize(bytes.size() / 2);
  auto decode_all = [&] {
    RangeDecoder dec(bytes);
    for (int i = 0; i < 400; ++i) {
      const int s = table.lookup(dec.peek());
      dec.consume(table.cdf[s], table.freq(s));
    }
  };
  CHECK_THROWS_AS(decode_all(), DecodeError);
}

TEST_CASE("gaussian_bits matches a high-precision oracle") {
  const double oracle0 = -std::log2(static_cast<double>(simpson_bin_mass(0, 0, 1)));
  const double oracle3 = -std::log2(static_cast<double>(simpson_bin_mass(3, 0, 1)));
  CHECK(gaussian_bits(0.0, 0.0, 1.0) == doctest::Approx(oracle0).epsilon(1e-6));
  CHECK(gaussian_bits(3.0, 0.0, 1.0) == doctest::Approx(oracle3).epsilon(1e-6));
  CHECK(std::abs(gaussian_bits(0.0, 0.0, 1.0) - 1.3851) <= 0.001);
  CHECK(std::abs(gaussian_bits(3.0, 0.0, 1.0) - 7.39) <= 0.01);

  // Tensor form agrees with the scalar form and is floored far in the tail.
  auto v = torch::tensor({0.0, 3.0, -2.0, 500.0}, torch::kFloat64);
  auto bits = gaussian_bits(v, torch::zeros_like(v), torch::ones_like(v));
  CHECK(bits[0].item<double>() == doctest::Approx(gaussian_bits(0.0, 0.0, 1.0)));
  CHECK(bits[2].item<double>() == doctest::Approx(gaussian_bits(-2.0, 0.0, 1.0)));
  CHECK(bits[3].item<double>() == doctest::Approx(16.0));
}

TEST_CASE("quantize modes") {
  auto x = torch::tensor({-1.5, -0.5, 0.4, 0.5, 2.5});
  auto r = quantize(x, CodingMode::Infer);
  CHECK(torch::equal(r, torch::tensor({-2.0, -1.0, 0.0, 1.0, 3.0})));
  NoiseSource noise(5);
  auto noisy = quantize(x, CodingMode::Train, &noise);
  CHECK((noisy - x).abs().max().item<double>() <= 0.5);
  noise.reset();
  CHECK(torch::equal(noisy, quantize(x, CodingMode::Train, &noise)));
}

TEST_CASE("quantized tables are normalized and codable") {
  for (int bin = 0; bin < kSigmaBins; ++bin) {
    const auto& t = gaussian_tables()[bin];
    REQUIRE(t.size() == kAlphabetSize);
    CHECK(t.cdf.front() == 0);
    CHECK(t.cdf.back() == kTotalFreq);
    for (int i = 0; i < t.size(); ++i) CHECK(t.freq(i) >= 1);
  }
  CHECK(sigma_bin(kSigmaMin / 10) == 0);
  CHECK(sigma_bin(kSigmaMax * 10) == kSigmaBins - 1);
  CHECK(sigma_bin_center(0) == doctest::Approx(kSigmaMin));
  CHECK(sigma_bin_center(kSigmaBins - 1) == doctest::Approx(kSigmaMax));
  for (int bin = 0; bin < kSigmaBins; ++bin) CHECK(sigma_bin(sigma_bin_center(bin)) == bin);
}

TEST_CASE("sigma = 1 table deviates from the ideal only by the floor") {
  const auto t = gaussian_table(1.0);
  const double ideal = static_cast<double>(simpson_bin_mass(0, 0, 1)) * kTotalFreq;
  // Every symbol whose ideal frequency is below one unit is lifted to one,
  // and that mass is taken from the bulk.
  int floored = 1;  // the escape
  for (int v = -kSymbolBound; v <= kSymbolBound; ++v)
    if (simpson_bin_mass(v, 0, 1) * kTotalFreq < 0.5) ++floored;
  const double dev = std::abs(static_cast<double>(t.freq(kSymbolBound)) - ideal);
  MESSAGE("sigma=1 symbol 0: ideal " << ideal << ", table " << t.freq(kSymbolBound));
  CHECK(dev <= floored + 2);
}

TEST_CASE("factorized prior tables roundtrip and track the soft rate") {
  torch::manual_seed(0);
  FactorizedPrior prior(3);
  auto tables = prior->build_tables();
  REQUIRE(tables.size() == 3);
  auto symbols = torch::randint(-6, 7, {1, 3, 4, 5}).to(torch::kFloat32);
  symbols[0][1][2][3] = 90;  // escape
  RangeEncoder enc;
  encode_factorized(enc, tables, symbols);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  auto back = decode_factorized(dec, tables, symbols.sizes());
  CHECK(torch::equal(back, symbols));

  auto inside = symbols.clamp(-6, 6);
  const double soft = prior->bits(inside).sum().item<double>();
  CHECK(factorized_cost_bits(tables, inside) == doctest::Approx(soft).epsilon(0.02));

  // Symmetric by construction around the learned location (zero at init).
  auto v = torch::linspace(-3, 3, 7).view({1, 1, 1, 7}).expand({1, 3, 1, 7}).contiguous();
  auto lik = prior->likelihood(v);
  CHECK(torch::allclose(lik, lik.flip(3), 1e-5, 1e-6));
}

TEST_CASE("hyperprior compress and decompress agree") {
  torch::manual_seed(1);
  Hyperprior hp(8, 8);
  hp->eval();
  hp->freeze();
  auto y = torch::randn({1, 8, 8, 12}) * 3;
  auto c = hp->compress(y);
  auto params = hp->decompress(c.bytes, y.sizes());
  CHECK(torch::equal(params.mu, c.params.mu));
  CHECK(torch::equal(params.sigma, c.params.sigma));
  CHECK(params.sigma.min().item<double>() >= kSigmaMin * 0.999);
  CHECK(c.bytes.size() * 8.0 <= c.estimated_bits + 64 + 0.02 * c.estimated_bits);
}
