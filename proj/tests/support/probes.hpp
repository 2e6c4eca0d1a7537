#pragma once

#include <string>
#include <vector>

#include "c2f/entropy/hyperprior.hpp"
#include "c2f/metrics.hpp"
#include "c2f/mode_prediction.hpp"
#include "c2f/training.hpp"
#include "gradcheck.hpp"

namespace c2f::testing {

/// A fixed-noise scalar function and the point to check it at.
struct Probe {
  std::string name;
  ScalarFn f;
  std::vector<torch::Tensor> inputs;
  std::shared_ptr<void> keep_alive;
};

inline torch::Tensor randn64(at::IntArrayRef shape) { return torch::randn(shape, torch::kFloat64); }

inline Probe rd_loss_probe() {
  auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto f = [x](const std::vector<torch::Tensor>& in) {
    train::RDLossTerms t;
    t.bpp_coarse = in[1][0] * in[1][0];
    t.bpp_fine = in[1][1].exp();
    t.bpp_residual = in[1][2];
    t.distortion = metrics::mse_unit(x, in[0]).mean();
    t.lambda = 256;
    return train::rd_loss(t);
  };
  return {"rd_loss", f, {torch::rand({1, 3, 8, 8}, torch::kFloat64), randn64({3})}, nullptr};
}

inline modes::GumbelConfig soft_selection() {
  modes::GumbelConfig g;
  g.noise_enabled = false;
  g.straight_through = false;
  return g;
}

inline Probe soft_hamc_probe() {
  auto weights = randn64({1, 2, 8, 8});
  auto f = [weights](const std::vector<torch::Tensor>& in) {
    NoiseSource noise(17);
    const auto g = soft_selection();
    auto w4 = modes::select_mode(in[3], 2, g, CodingMode::Train, nullptr);
    auto w2 = modes::select_mode(in[4], 2, g, CodingMode::Train, nullptr);
    auto r = modes::soft_hamc(in[0], {in[1], in[2]}, w4, w2, CodingMode::Train, &noise);
    return r.bits.sum() + (r.y_hat * weights).sum();
  };
  return {"soft_hamc",
          f,
          {randn64({1, 2, 8, 8}) * 3, randn64({1, 2, 8, 8}),
           torch::rand({1, 2, 8, 8}, torch::kFloat64) * 2.5 + 0.6, randn64({1, 2, 4, 2, 2}),
           randn64({1, 2, 4, 4, 4})},
          nullptr};
}

inline Probe soft_harc_probe() {
  auto weights = randn64({1, 3, 4, 4});
  auto f = [weights](const std::vector<torch::Tensor>& in) {
    NoiseSource noise(23);
    auto keep = torch::sigmoid(in[3]);
    auto r = modes::soft_harc(in[0], {in[1], in[2]}, keep, CodingMode::Train, &noise);
    return r.bits.sum() + (r.y_hat * weights).sum();
  };
  return {"soft_harc",
          f,
          {randn64({1, 3, 4, 4}) * 3, randn64({1, 3, 4, 4}),
           torch::rand({1, 3, 4, 4}, torch::kFloat64) * 2.5 + 0.6, randn64({1, 3, 4, 4})},
          nullptr};
}

/// Hyper-latent bits plus the conditional Gaussian bits of the noisy latent,
/// as a function of the latent.
inline Probe hyperprior_rate_probe() {
  torch::manual_seed(29);
  auto hp = std::make_shared<entropy::Hyperprior>(4, 4);
  (*hp)->to(torch::kFloat64);
  auto f = [hp](const std::vector<torch::Tensor>& in) {
    NoiseSource noise(31);
    auto r = (*hp)->forward_train(in[0], noise);
    auto y_tilde = in[0] + noise.uniform(in[0].sizes(), torch::kFloat64);
    return r.z_bits.sum() + entropy::gaussian_bits(y_tilde, r.params.mu, r.params.sigma).sum();
  };
  return {"hyperprior_rate", f, {randn64({1, 4, 16, 16}) * 4}, hp};
}

inline std::vector<Probe> gradient_probes() {
  return {rd_loss_probe(), soft_hamc_probe(), soft_harc_probe(), hyperprior_rate_probe()};
}

}  // namespace c2f::testing
