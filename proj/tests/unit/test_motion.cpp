#include "doctest_torch.hpp"

#include <cmath>

#include "c2f/motion_c2f.hpp"
#include "c2f/pframe.hpp"

using namespace c2f;
using namespace c2f::motion;

namespace {

// Direct bilinear oracle over accessors: base tap (y + i - k/2, x + j - k/2)
// plus the (dy, dx) of its group, corners outside the map read zero.
torch::Tensor sample_oracle(const torch::Tensor& input, const torch::Tensor& offsets, int64_t k,
                            int64_t groups) {
  const auto in = input.to(torch::kFloat64);
  const auto off = offsets.to(torch::kFloat64);
  const int64_t n = in.size(0), c = in.size(1), h = in.size(2), w = in.size(3);
  auto out = torch::zeros({n, c, k * k, h, w}, torch::kFloat64);
  auto I = in.accessor<double, 4>();
  auto O = off.accessor<double, 4>();
  auto R = out.accessor<double, 5>();
  auto at = [&](int64_t b, int64_t ch, int64_t y, int64_t x) {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : I[b][ch][y][x];
  };
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t g = ch / (c / groups);
      for (int64_t t = 0; t < k * k; ++t)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            const double py = y + t / k - k / 2 + O[b][(g * k * k + t) * 2][y][x];
            const double px = x + t % k - k / 2 + O[b][(g * k * k + t) * 2 + 1][y][x];
            const auto y0 = static_cast<int64_t>(std::floor(py));
            const auto x0 = static_cast<int64_t>(std::floor(px));
            const double fy = py - y0, fx = px - x0;
            R[b][ch][t][y][x] = (1 - fy) * (1 - fx) * at(b, ch, y0, x0) +
                                (1 - fy) * fx * at(b, ch, y0, x0 + 1) +
                                fy * (1 - fx) * at(b, ch, y0 + 1, x0) +
                                fy * fx * at(b, ch, y0 + 1, x0 + 1);
          }
    }
  return out;
}

}  // namespace

TEST_CASE("deformable conv with zero offsets equals conv2d") {
  torch::manual_seed(0);
  DeformConv2d dc(8, 6, 3, 2);
  auto x = torch::randn({2, 8, 7, 9});
  auto offsets = torch::zeros({2, dc->offset_channels(), 7, 9});
  auto ref = torch::conv2d(x, dc->weight, dc->bias, 1, 1);
  CHECK(torch::allclose(dc->forward(x, offsets), ref, 1e-4, 1e-5));
  CHECK(dc->offset_channels() == 2 * 9 * 2);
  CHECK(DeformConv2d(64, 64, 3, 8)->offset_channels() == 144);
}

TEST_CASE("integer offsets translate the sampled map") {
  torch::manual_seed(1);
  auto x = torch::randn({1, 4, 6, 8});
  auto offsets = torch::zeros({1, 2 * 9 * 2, 6, 8});
  offsets.index_put_({0, torch::indexing::Slice(0, torch::indexing::None, 2)}, 1.0);   // dy = +1
  offsets.index_put_({0, torch::indexing::Slice(1, torch::indexing::None, 2)}, -2.0);  // dx = -2
  auto s = deform_sample(x, offsets, 3, 2);
  // Centre tap (t = 4) at (y, x) reads input (y + 1, x - 2).
  using torch::indexing::Slice;
  auto centre = s.select(2, 4);
  CHECK(torch::allclose(centre.index({Slice(), Slice(), Slice(0, 5), Slice(2, 8)}),
                        x.index({Slice(), Slice(), Slice(1, 6), Slice(0, 6)})));
  CHECK(centre.index({Slice(), Slice(), 5}).abs().sum().item<double>() == 0);
  CHECK(centre.index({Slice(), Slice(), Slice(), Slice(0, 2)}).abs().sum().item<double>() == 0);
}

TEST_CASE("fractional offsets match the bilinear oracle") {
  torch::manual_seed(2);
  auto x = torch::randn({2, 4, 5, 6});
  auto offsets = torch::randn({2, 2 * 9 * 2, 5, 6}) * 1.7;
  auto got = deform_sample(x, offsets, 3, 2).to(torch::kFloat64);
  auto want = sample_oracle(x, offsets, 3, 2);
  CHECK(torch::allclose(got, want, 1e-4, 1e-5));
}

TEST_CASE("deform_sample gradients match finite differences") {
  torch::manual_seed(3);
  auto x = torch::randn({1, 2, 4, 4}, torch::kFloat64).requires_grad_();
  // Keep offsets away from integer points where bilinear is not differentiable.
  auto offsets = (torch::rand({1, 2 * 9, 4, 4}, torch::kFloat64) * 0.6 + 0.2).requires_grad_();
  auto f = [&](const torch::Tensor& a, const torch::Tensor& o) {
    return (deform_sample(a, o, 3, 1) * torch::linspace(-1, 1, 9, torch::kFloat64).view({1, 1, 9, 1, 1}))
        .sum();
  };
  f(x, offsets).backward();
  auto dir = torch::randn_like(offsets);
  const double eps = 1e-6;
  torch::NoGradGuard ng;
  const double fd = (f(x, offsets + eps * dir) - f(x, offsets - eps * dir)).item<double>() / (2 * eps);
  const double an = (offsets.grad() * dir).sum().item<double>();
  CHECK(an == doctest::Approx(fd).epsilon(1e-4));
  auto dx = torch::randn_like(x);
  const double fdx = (f(x + eps * dx, offsets) - f(x - eps * dx, offsets)).item<double>() / (2 * eps);
  CHECK((x.grad() * dx).sum().item<double>() == doctest::Approx(fdx).epsilon(1e-4));
}

TEST_CASE("C2F motion shapes and encoder/decoder agreement") {
  torch::manual_seed(4);
  auto mc = ModelConfig::tiny().motion;
  const int64_t f = mc.feature_channels;
  C2FMotion motion(mc);
  auto ref = torch::randn({2, f, 32, 48});
  auto cur = torch::randn({2, f, 32, 48});
  NoiseSource noise(1);
  auto tr = motion->forward_train(ref, cur, noise, {}, false);
  CHECK(tr.predicted.sizes() == ref.sizes());
  CHECK(tr.intermediate.sizes() == ref.sizes());
  CHECK(tr.coarse.bits.sizes() == at::IntArrayRef({2}));
  CHECK(tr.fine.bits.sizes() == at::IntArrayRef({2}));
  CHECK(tr.fine.offsets.size(1) == 2 * mc.deform_kernel * mc.deform_kernel * mc.deform_groups);

  motion->eval();
  motion->freeze();
  torch::NoGradGuard ng;
  for (bool hamc : {false, true}) {
    auto r = ref.slice(0, 0, 1), c = cur.slice(0, 0, 1);
    auto enc = motion->encode(r, c, hamc);
    auto dec = motion->decode(r, enc.coarse.main_bytes, enc.fine.hyper_bytes, enc.fine.main_bytes,
                              hamc);
    CHECK(torch::equal(enc.predicted, dec.predicted));
    CHECK(torch::equal(enc.intermediate, dec.intermediate));
    if (hamc) {
      CHECK(torch::equal(enc.fine_modes.mode4, dec.fine_modes.mode4));
      CHECK(torch::equal(enc.fine_modes.mode2, dec.fine_modes.mode2));
    }
  }
}

TEST_CASE("single-stage motion skips the coarse branch") {
  torch::manual_seed(5);
  auto mc = ModelConfig::tiny().motion;
  mc.coarse_to_fine = false;
  C2FMotion motion(mc);
  motion->eval();
  motion->freeze();
  torch::NoGradGuard ng;
  auto ref = torch::randn({1, mc.feature_channels, 32, 32});
  auto enc = motion->encode(ref, torch::randn_like(ref), false);
  CHECK(torch::equal(enc.intermediate, ref));
  CHECK(enc.coarse.main_bytes.empty());
}
