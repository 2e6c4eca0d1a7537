#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace c2f {

/// Train mode uses the differentiable proxies (noise quantization, Gumbel
/// straight-through); Infer mode uses hard rounding and argmax decisions.
enum class CodingMode { Train, Infer };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised by the range decoder and the bitstream parser. `offset` is the byte
/// position inside the buffer being parsed when the failure was detected.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset, int frame = -1)
      : Error(what + " (byte " + std::to_string(offset) +
              (frame >= 0 ? ", frame " + std::to_string(frame) : std::string()) + ")"),
        offset_(offset),
        frame_(frame) {}

  std::size_t offset() const { return offset_; }
  int frame() const { return frame_; }

 private:
  std::size_t offset_;
  int frame_;
};

/// Seeded source of the stochastic terms used while training: additive
/// uniform quantization noise and Gumbel(0,1) samples. Resetting to the same
/// seed replays the same draws, which is what finite-difference checks need.
class NoiseSource {
 public:
  explicit NoiseSource(uint64_t seed = 0) { reset(seed); }

  void reset(uint64_t seed) {
    seed_ = seed;
    generator_ = at::detail::createCPUGenerator(seed);
  }
  void reset() { reset(seed_); }
  uint64_t seed() const { return seed_; }

  /// U(-0.5, 0.5) with the given shape and dtype.
  torch::Tensor uniform(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32) {
    return torch::rand(shape, generator_, torch::TensorOptions().dtype(dtype)) - 0.5;
  }

  torch::Tensor gumbel(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32) {
    auto u = torch::rand(shape, generator_, torch::TensorOptions().dtype(dtype));
    u = u.clamp(1e-10, 1.0 - 1e-7);
    return -torch::log(-torch::log(u));
  }

  at::Generator& generator() { return generator_; }

 private:
  uint64_t seed_ = 0;
  at::Generator generator_;
};

/// Round half away from zero, elementwise.
inline torch::Tensor round_half_away(const torch::Tensor& x) {
  return torch::sign(x) * torch::floor(torch::abs(x) + 0.5);
}

inline int32_t round_half_away(double x) {
  return static_cast<int32_t>(x < 0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5));
}

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace c2f
