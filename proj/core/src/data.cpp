#include "c2f/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <regex>

namespace c2f::data {

namespace {

struct Texture {
  std::array<double, 3> base;
  std::vector<std::array<double, 6>> waves;  // fx, fy, phase, amp_r, amp_g, amp_b
};

Texture random_texture(std::mt19937_64& rng, int components) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Texture t;
  for (auto& b : t.base) b = 0.3 + 0.4 * unit(rng);
  for (int k = 0; k < components; ++k) {
    const double period = 6.0 + 26.0 * unit(rng);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double amp = 0.25 / std::sqrt(static_cast<double>(components)) * (0.5 + unit(rng));
    t.waves.push_back({std::cos(angle) / period, std::sin(angle) / period,
                       2.0 * std::numbers::pi * unit(rng), amp * (0.6 + 0.8 * unit(rng)),
                       amp * (0.6 + 0.8 * unit(rng)), amp * (0.6 + 0.8 * unit(rng))});
  }
  return t;
}

// (3, H, W) texture sampled at the given coordinate grids.
torch::Tensor render(const Texture& t, const torch::Tensor& xs, const torch::Tensor& ys) {
  std::vector<torch::Tensor> channels;
  for (int c = 0; c < 3; ++c) channels.push_back(torch::full_like(xs, t.base[c]));
  for (const auto& w : t.waves) {
    auto s = torch::sin(2.0 * std::numbers::pi * (w[0] * xs + w[1] * ys) + w[2]);
    for (int c = 0; c < 3; ++c) channels[c] = channels[c] + w[3 + c] * s;
  }
  return torch::stack(channels).clamp(0.0, 1.0);
}

}  // namespace

SynthClip gen_synthetic(const SynthConfig& config) {
  check_shape(config.height >= 1 && config.width >= 1 && config.frames >= 1,
              "gen_synthetic: dimensions and frame count must be positive");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto grid_y = torch::arange(config.height, opts).view({-1, 1}).expand({config.height, config.width});
  auto grid_x = torch::arange(config.width, opts).view({1, -1}).expand({config.height, config.width});

  const Texture background = random_texture(rng, config.components);
  SynthClip out;
  std::vector<Texture> object_textures;
  for (int i = 0; i < config.objects; ++i) {
    ObjectMotion m;
    m.x = config.width * (0.2 + 0.6 * unit(rng));
    m.y = config.height * (0.2 + 0.6 * unit(rng));
    m.radius_x = std::max<double>(3.0, std::min(config.width, config.height) * (0.08 + 0.12 * unit(rng)));
    m.radius_y = m.radius_x * (0.6 + 0.8 * unit(rng));
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double speed = config.object_speed * unit(rng);
    m.vx = speed * std::cos(angle);
    m.vy = speed * std::sin(angle);
    m.scale_rate = config.object_scale * (2.0 * unit(rng) - 1.0);
    out.objects.push_back(m);
    object_textures.push_back(random_texture(rng, std::max(2, config.components / 2)));
  }

  std::vector<torch::Tensor> frames;
  for (int64_t t = 0; t < config.frames; ++t) {
    const double td = static_cast<double>(t);
    auto frame = render(background, grid_x - td * config.global_dx, grid_y - td * config.global_dy);
    for (size_t i = 0; i < out.objects.size(); ++i) {
      const auto& m = out.objects[i];
      const double scale = std::pow(1.0 + m.scale_rate, td);
      const double cx = m.x + td * m.vx;
      const double cy = m.y + td * m.vy;
      auto lx = (grid_x - cx) / scale;
      auto ly = (grid_y - cy) / scale;
      auto dist = torch::sqrt((lx / m.radius_x).square() + (ly / m.radius_y).square());
      auto alpha = ((1.0 - dist) * std::min(m.radius_x, m.radius_y) * scale + 0.5).clamp(0.0, 1.0);
      auto tex = render(object_textures[i], lx, ly);
      frame = frame * (1.0 - alpha) + tex * alpha;
    }
    if (config.quantize_8bit) frame = torch::round(frame * 255.0) / 255.0;
    frames.push_back(frame.to(torch::kFloat32));
  }
  out.clip.frames = torch::stack(frames);
  return out;
}

SynthConfig random_synth_config(uint64_t seed, int64_t height, int64_t width, int64_t frames) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SynthConfig c;
  c.height = height;
  c.width = width;
  c.frames = frames;
  c.seed = seed;
  c.global_dx = 6.0 * unit(rng) - 3.0;
  c.global_dy = 6.0 * unit(rng) - 3.0;
  c.objects = 1 + static_cast<int>(3 * unit(rng));
  c.object_speed = 3.0;
  c.object_scale = 0.02;
  return c;
}

std::vector<uint8_t> to_rgb8(const Frame& frame) {
  auto p = torch::round(frame.pixels.detach().clamp(0.0, 1.0) * 255.0)
               .to(torch::kUInt8)
               .permute({1, 2, 0})
               .contiguous();
  const uint8_t* ptr = p.data_ptr<uint8_t>();
  return {ptr, ptr + p.numel()};
}

Frame from_rgb8(std::span<const uint8_t> rgb, FrameDims dims) {
  check_shape(static_cast<int64_t>(rgb.size()) == 3 * dims.pixels(),
              "from_rgb8: buffer size does not match the dims");
  auto t = torch::from_blob(const_cast<uint8_t*>(rgb.data()), {dims.height, dims.width, 3},
                            torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat32) /
           255.0;
  return {t.contiguous()};
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Frame read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("unreadable PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const FrameDims dims{png_get_image_height(png, info), png_get_image_width(png, info)};
  std::vector<uint8_t> rgb(3 * dims.pixels());
  std::vector<png_bytep> rows(dims.height);
  for (int64_t y = 0; y < dims.height; ++y) rows[y] = rgb.data() + 3 * y * dims.width;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(rgb, dims);
}

void write_png(const Frame& frame, const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG write failed for " + path.string());
  }
  const FrameDims dims = frame.dims();
  auto rgb = to_rgb8(frame);
  png_init_io(png, file.get());
  png_set_IHDR(png, info, dims.width, dims.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < dims.height; ++y) png_write_row(png, rgb.data() + 3 * y * dims.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string magic;
  int64_t width = 0, height = 0, maxval = 0;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
      in >> std::ws;
    }
  };
  in >> magic;
  skip_comments();
  in >> width;
  skip_comments();
  in >> height;
  skip_comments();
  in >> maxval;
  in.get();
  if (!in || magic != "P6" || width < 1 || height < 1 || maxval != 255)
    throw Error("unsupported PPM (need 8-bit P6): " + path.string());
  std::vector<uint8_t> rgb(3 * width * height);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!in) throw Error("truncated PPM " + path.string());
  return from_rgb8(rgb, {height, width});
}

void write_u16(std::ostream& out, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}
void write_u32(std::ostream& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>(v >> (8 * i)));
}
uint32_t read_le(std::istream& in, int bytes) {
  uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw Error("raw clip: truncated header");
    v |= static_cast<uint32_t>(c) << (8 * i);
  }
  return v;
}

}  // namespace

void save_raw_clip(const Clip& clip, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const FrameDims dims = clip.dims();
  out.write("C2FC", 4);
  write_u16(out, static_cast<uint16_t>(dims.width));
  write_u16(out, static_cast<uint16_t>(dims.height));
  write_u32(out, static_cast<uint32_t>(clip.size()));
  auto bytes = torch::round(clip.frames.clamp(0.0, 1.0) * 255.0).to(torch::kUInt8).contiguous();
  out.write(reinterpret_cast<const char*>(bytes.data_ptr<uint8_t>()), bytes.numel());
}

Clip load_raw_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "C2FC") throw Error("not a raw clip: " + path.string());
  const int64_t width = read_le(in, 2);
  const int64_t height = read_le(in, 2);
  const int64_t count = read_le(in, 4);
  if (width < 1 || height < 1 || count < 1) throw Error("raw clip: empty clip");
  auto bytes = torch::empty({count, 3, height, width}, torch::kUInt8);
  in.read(reinterpret_cast<char*>(bytes.data_ptr<uint8_t>()), bytes.numel());
  if (in.gcount() != bytes.numel()) throw Error("raw clip: truncated frame data");
  return {bytes.to(torch::kFloat32) / 255.0};
}

Clip load_clip(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw Error("no such clip: " + path.string());
  if (!fs::is_directory(path)) return load_raw_clip(path);

  static const std::regex kNumber(R"((\d+))");
  std::vector<std::pair<long long, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext != ".png" && ext != ".ppm") continue;
    const auto stem = entry.path().stem().string();
    long long index = -1;
    for (std::sregex_iterator it(stem.begin(), stem.end(), kNumber), end; it != end; ++it)
      index = std::stoll(it->str());
    files.emplace_back(index, entry.path());
  }
  if (files.empty()) throw Error("no PNG/PPM frames in " + path.string());
  std::sort(files.begin(), files.end());

  std::vector<torch::Tensor> frames;
  for (const auto& [index, file] : files) {
    const auto ext = file.extension().string();
    Frame f = (ext == ".ppm" || ext == ".PPM") ? read_ppm(file) : read_png(file);
    if (!frames.empty() && f.pixels.sizes() != frames.front().sizes())
      throw Error("frame size differs from the first frame: " + file.string());
    frames.push_back(f.pixels);
  }
  return {torch::stack(frames)};
}

void save_png_sequence(const Clip& clip, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int64_t t = 0; t < clip.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04lld.png", static_cast<long long>(t));
    write_png(clip.frame(t), dir / name);
  }
}

}  // namespace c2f::data
