#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "c2f/frame_feature.hpp"

namespace c2f::data {

/// Frame sequence stored as float32 (T, 3, H, W) in [0, 1].
struct Clip {
  torch::Tensor frames;

  int64_t size() const { return frames.defined() ? frames.size(0) : 0; }
  FrameDims dims() const { return {frames.size(2), frames.size(3)}; }
  Frame frame(int64_t t) const { return {frames[t]}; }
};

struct ObjectMotion {
  double x = 0, y = 0;        // centre at frame 0, pixels
  double radius_x = 0, radius_y = 0;
  double vx = 0, vy = 0;      // pixels per frame
  double scale_rate = 0;      // relative size change per frame
};

struct SynthConfig {
  int64_t height = 64;
  int64_t width = 64;
  int64_t frames = 7;
  uint64_t seed = 0;
  /// Global translation in pixels per frame (content moves by +dx, +dy).
  double global_dx = 0;
  double global_dy = 0;
  int objects = 0;
  /// Largest per-object speed, pixels per frame. Zero keeps objects static.
  double object_speed = 0;
  /// Largest per-object relative scale change per frame.
  double object_scale = 0;
  /// Sinusoid components per texture.
  int components = 6;
  /// Round to the 8-bit grid, as real footage would be.
  bool quantize_8bit = true;
};

struct SynthClip {
  Clip clip;
  std::vector<ObjectMotion> objects;  // ground-truth object trajectories
};

/// Deterministic given the config: a procedural sinusoid texture translated by
/// the global motion, with textured ellipses moving on top.
SynthClip gen_synthetic(const SynthConfig& config);

/// Config with random global and object motion drawn from `seed`, as used by
/// the training ladder and held-out sets.
SynthConfig random_synth_config(uint64_t seed, int64_t height, int64_t width, int64_t frames);

/// Numerically ordered PNG/PPM files in a directory, or a raw clip file.
Clip load_clip(const std::filesystem::path& path);

/// Raw clip container: "C2FC", u16 width, u16 height, u32 frames, then 8-bit
/// RGB planes frame by frame (channel-major).
void save_raw_clip(const Clip& clip, const std::filesystem::path& path);
Clip load_raw_clip(const std::filesystem::path& path);

/// Writes one PNG per frame (frame_0000.png, ...).
void save_png_sequence(const Clip& clip, const std::filesystem::path& dir);

/// Packs (3, H, W) [0, 1] pixels into interleaved 8-bit RGB and back.
std::vector<uint8_t> to_rgb8(const Frame& frame);
Frame from_rgb8(std::span<const uint8_t> rgb, FrameDims dims);

}  // namespace c2f::data
