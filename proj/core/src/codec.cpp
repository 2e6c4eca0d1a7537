#include "c2f/codec.hpp"

#include <zlib.h>

#include <cstring>

#include "c2f/metrics.hpp"

namespace c2f::codec {

namespace {

constexpr char kMagic[4] = {'C', '2', 'F', 'V'};

class Writer {
 public:
  void u8(uint8_t v) { out_.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void bytes(std::span<const uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void segment(std::span<const uint8_t> b) {
    u32(static_cast<uint32_t>(b.size()));
    bytes(b);
  }
  void split_segment(std::span<const uint8_t> hyper, std::span<const uint8_t> main) {
    u32(static_cast<uint32_t>(4 + hyper.size() + main.size()));
    u32(static_cast<uint32_t>(hyper.size()));
    bytes(hyper);
    bytes(main);
  }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> data) : data_(data) {}

  void set_frame(int frame) { frame_ = frame; }
  size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

  std::span<const uint8_t> take(size_t n, const char* what) {
    if (n > data_.size() - pos_)
      throw DecodeError(std::string("truncated ") + what, pos_, frame_);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  uint8_t u8(const char* what) { return take(1, what)[0]; }
  uint16_t u16(const char* what) {
    auto b = take(2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32(const char* what) {
    auto b = take(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::vector<uint8_t> segment(const char* what) {
    const uint32_t n = u32(what);
    auto b = take(n, what);
    return {b.begin(), b.end()};
  }
  void split_segment(const char* what, std::vector<uint8_t>& hyper, std::vector<uint8_t>& main) {
    const size_t start = pos_;
    const uint32_t n = u32(what);
    if (n < 4) throw DecodeError(std::string("malformed ") + what, start, frame_);
    Reader inner(take(n, what));
    inner.frame_ = frame_;
    const uint32_t hyper_len = inner.u32(what);
    if (hyper_len > n - 4) throw DecodeError(std::string("malformed ") + what, start + 4, frame_);
    auto h = inner.take(hyper_len, what);
    auto m = inner.take(n - 4 - hyper_len, what);
    hyper.assign(h.begin(), h.end());
    main.assign(m.begin(), m.end());
  }

 private:
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  int frame_ = -1;
};

Header read_header(Reader& in) {
  auto magic = in.take(4, "header");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DecodeError("bad magic", 0);
  Header h;
  h.version = in.u8("header");
  if (h.version != kVersion)
    throw DecodeError("unsupported version " + std::to_string(h.version), 4);
  h.flags = in.u8("header");
  h.width = in.u16("header");
  h.height = in.u16("header");
  h.frames = in.u32("header");
  h.gop = in.u16("header");
  h.model_id = in.u8("header");
  h.intra_codec_id = in.u8("header");
  if (h.width == 0 || h.height == 0) throw DecodeError("zero frame dimensions", 6);
  if (h.gop == 0) throw DecodeError("zero GoP size", 14);
  if (h.intra_codec_id != kIntraDeflate)
    throw DecodeError("unknown intra codec " + std::to_string(h.intra_codec_id), 17);
  return h;
}

FrameRecord read_record(Reader& in, int frame) {
  in.set_frame(frame);
  const size_t start = in.position();
  FrameRecord r;
  const uint8_t type = in.u8("record type");
  if (type > static_cast<uint8_t>(RecordType::InterAlt))
    throw DecodeError("unknown record type " + std::to_string(type), start, frame);
  r.type = static_cast<RecordType>(type);
  if (r.type == RecordType::Intra) {
    r.intra = in.segment("intra segment");
    return r;
  }
  if (r.type == RecordType::InterAlt) r.alt_model_id = in.u8("alt model id");
  r.inter.coarse = in.segment("coarse motion segment");
  in.split_segment("fine motion segment", r.inter.fine_hyper, r.inter.fine_main);
  in.split_segment("residual segment", r.inter.residual_hyper, r.inter.residual_main);
  return r;
}

uint8_t flags_for(const ModelConfig& c, bool alt) {
  uint8_t f = 0;
  if (c.use_hamc) f |= kFlagHamc;
  if (c.use_harc) f |= kFlagHarc;
  if (c.motion.coarse_to_fine) f |= kFlagCoarseToFine;
  if (alt) f |= kFlagAltModel;
  return f;
}

constexpr uint8_t kModelFlagMask = kFlagHamc | kFlagHarc | kFlagCoarseToFine;

}  // namespace

std::vector<uint8_t> serialize(const Bitstream& stream) {
  Writer out;
  const auto& h = stream.header;
  out.bytes({reinterpret_cast<const uint8_t*>(kMagic), 4});
  out.u8(h.version);
  out.u8(h.flags);
  out.u16(h.width);
  out.u16(h.height);
  out.u32(h.frames);
  out.u16(h.gop);
  out.u8(h.model_id);
  out.u8(h.intra_codec_id);
  for (const auto& r : stream.records) {
    out.u8(static_cast<uint8_t>(r.type));
    if (r.type == RecordType::Intra) {
      out.segment(r.intra);
      continue;
    }
    if (r.type == RecordType::InterAlt) out.u8(r.alt_model_id);
    out.segment(r.inter.coarse);
    out.split_segment(r.inter.fine_hyper, r.inter.fine_main);
    out.split_segment(r.inter.residual_hyper, r.inter.residual_main);
  }
  return out.take();
}

Header parse_header(std::span<const uint8_t> bytes) {
  Reader in(bytes);
  return read_header(in);
}

Bitstream parse(std::span<const uint8_t> bytes) {
  Reader in(bytes);
  Bitstream s;
  s.header = read_header(in);
  for (uint32_t f = 0; f < s.header.frames; ++f)
    s.records.push_back(read_record(in, static_cast<int>(f)));
  if (!in.done()) throw DecodeError("trailing bytes after the last frame", in.position());
  return s;
}

FrameBytes frame_bytes(const FrameRecord& r) {
  FrameBytes b;
  b.overhead = r.type == RecordType::InterAlt ? 2 : 1;
  if (r.type == RecordType::Intra) {
    b.intra = 4 + r.intra.size();
    return b;
  }
  b.coarse = 4 + r.inter.coarse.size();
  b.fine = 8 + r.inter.fine_hyper.size() + r.inter.fine_main.size();
  b.residual = 8 + r.inter.residual_hyper.size() + r.inter.residual_main.size();
  return b;
}

std::vector<uint8_t> intra_encode(const Frame& frame) {
  const auto rgb = data::to_rgb8(frame);
  uLongf size = compressBound(static_cast<uLong>(rgb.size()));
  std::vector<uint8_t> out(size);
  if (compress2(out.data(), &size, rgb.data(), static_cast<uLong>(rgb.size()), 9) != Z_OK)
    throw Error("intra: deflate failed");
  out.resize(size);
  return out;
}

Frame intra_decode(std::span<const uint8_t> payload, FrameDims dims) {
  std::vector<uint8_t> rgb(3 * dims.pixels());
  uLongf size = static_cast<uLongf>(rgb.size());
  const int rc = uncompress(rgb.data(), &size, payload.data(), static_cast<uLong>(payload.size()));
  if (rc != Z_OK || size != rgb.size()) throw DecodeError("intra: corrupt deflate payload", 0);
  return data::from_rgb8(rgb, dims);
}

namespace {

const CodecModel& model_for_record(const FrameRecord& r, const CodecModel& main,
                                   const std::optional<CodecModel>& alt, int frame) {
  if (r.type != RecordType::InterAlt) return main;
  if (!alt || alt->id != r.alt_model_id)
    throw DecodeError("stream needs alternate model " + std::to_string(r.alt_model_id), 0, frame);
  return *alt;
}

}  // namespace

EncodeResult encode_video(const data::Clip& clip, const CodecModel& model,
                          const EncodeOptions& options) {
  check_shape(clip.size() >= 1 && clip.frames.dim() == 4 && clip.frames.size(1) == 3,
              "encode_video: expected a non-empty (T, 3, H, W) clip");
  const FrameDims dims = clip.dims();
  check_shape(dims.height <= 65535 && dims.width <= 65535, "encode_video: frame too large");
  if (options.gop < 1 || options.gop > 65535) throw Error("encode_video: GoP size out of range");
  if (options.alt) {
    const auto& a = PFrameModel(options.alt->model)->config();
    const auto& m = model.model->config();
    if (a.use_hamc != m.use_hamc || a.use_harc != m.use_harc ||
        a.motion.coarse_to_fine != m.motion.coarse_to_fine)
      throw Error("encode_video: alternate model uses different coding flags");
    PFrameModel(options.alt->model)->eval();
    PFrameModel(options.alt->model)->freeze();
  }
  PFrameModel(model.model)->eval();
  PFrameModel(model.model)->freeze();

  EncodeResult out;
  auto& h = out.stream.header;
  h.flags = flags_for(model.model->config(), options.alt.has_value());
  h.width = static_cast<uint16_t>(dims.width);
  h.height = static_cast<uint16_t>(dims.height);
  h.frames = static_cast<uint32_t>(clip.size());
  h.gop = static_cast<uint16_t>(options.gop);
  h.model_id = model.id;

  std::vector<torch::Tensor> recon;
  Frame ref;
  for (int64_t t = 0; t < clip.size(); ++t) {
    const Frame cur{clip.frames[t].contiguous()};
    FrameRecord record;
    FrameDecisions decisions;
    const int64_t pos = t % options.gop;
    if (pos == 0) {
      record.type = RecordType::Intra;
      record.intra = intra_encode(cur);
      ref = intra_decode(record.intra, dims);
    } else {
      const bool use_alt = options.alt && pos % 4 == 0;
      record.type = use_alt ? RecordType::InterAlt : RecordType::Inter;
      const CodecModel& coder = use_alt ? *options.alt : model;
      if (use_alt) record.alt_model_id = coder.id;
      auto coded = PFrameModel(coder.model)->encode(ref, cur);
      record.inter = std::move(coded.segments);
      decisions = {coded.fine_modes, coded.keep_mask};
      ref = Frame{coded.recon};
    }
    recon.push_back(ref.pixels);
    out.decisions.push_back(std::move(decisions));
    out.stream.records.push_back(std::move(record));
  }
  out.recon.frames = torch::stack(recon);
  out.bytes = serialize(out.stream);
  return out;
}

DecodeResult decode_video(std::span<const uint8_t> bytes, const CodecModel& model,
                          const DecodeOptions& options) {
  Reader in(bytes);
  const Header h = read_header(in);
  if (h.model_id != model.id)
    throw DecodeError("stream was coded with model " + std::to_string(h.model_id) +
                          ", loaded model is " + std::to_string(model.id),
                      16);
  if ((h.flags & kModelFlagMask) != flags_for(model.model->config(), false))
    throw DecodeError("stream coding flags do not match the loaded model", 5);
  if ((h.flags & kFlagAltModel) && !options.alt)
    throw DecodeError("stream uses an alternate model that was not supplied", 5);
  PFrameModel(model.model)->eval();
  PFrameModel(model.model)->freeze();
  if (options.alt) {
    PFrameModel(options.alt->model)->eval();
    PFrameModel(options.alt->model)->freeze();
  }

  const FrameDims dims{h.height, h.width};
  DecodeResult out;
  std::vector<torch::Tensor> frames;
  Frame ref;
  bool broken = false;  // concealing until the next intra frame
  for (uint32_t f = 0; f < h.frames; ++f) {
    const int frame = static_cast<int>(f);
    const size_t start = in.position();
    FrameRecord record = read_record(in, frame);
    const bool intra = record.type == RecordType::Intra;
    if (intra != (f % h.gop == 0))
      throw DecodeError("record type does not match the GoP structure", start, frame);
    FrameDecisions decisions;
    try {
      if (intra) {
        try {
          ref = intra_decode(record.intra, dims);
        } catch (const DecodeError& e) {
          throw DecodeError("intra: corrupt deflate payload", start + 5, frame);
        }
        broken = false;
      } else if (!broken) {
        const CodecModel& coder = model_for_record(record, model, options.alt, frame);
        PFrameCoded coded;
        try {
          coded = PFrameModel(coder.model)->decode(ref, record.inter, dims);
        } catch (const DecodeError& e) {
          throw DecodeError(std::string("P-frame payload: ") + e.what(), start, frame);
        }
        decisions = {coded.fine_modes, coded.keep_mask};
        ref = Frame{coded.recon};
      } else {
        out.concealed.push_back("frame " + std::to_string(frame) + ": repeated after earlier error");
      }
    } catch (const DecodeError& e) {
      if (!options.conceal_errors) throw;
      broken = true;
      if (!ref.pixels.defined()) ref = Frame{torch::full({3, dims.height, dims.width}, 0.5)};
      out.concealed.push_back(e.what());
    }
    frames.push_back(ref.pixels);
    out.decisions.push_back(std::move(decisions));
  }
  if (!in.done()) throw DecodeError("trailing bytes after the last frame", in.position());
  out.frames.frames = torch::stack(frames);
  return out;
}

RDStats evaluate(const data::Clip& original, const data::Clip& recon,
                 std::span<const uint8_t> file) {
  check_shape(original.size() == recon.size() && original.frames.sizes() == recon.frames.sizes(),
              "evaluate: original and reconstruction differ in frame count or size");
  const Bitstream stream = parse(file);
  check_shape(static_cast<int64_t>(stream.header.frames) == original.size() &&
                  stream.header.width == original.dims().width &&
                  stream.header.height == original.dims().height,
              "evaluate: stream does not describe this clip");
  const double pixels = static_cast<double>(original.dims().pixels());
  auto bpp = [&](size_t bytes) { return 8.0 * static_cast<double>(bytes) / pixels; };

  RDStats stats;
  stats.file_bytes = file.size();
  torch::NoGradGuard no_grad;
  for (int64_t t = 0; t < original.size(); ++t) {
    const auto b = frame_bytes(stream.records[t]);
    FrameStats s;
    s.bpp = bpp(b.total());
    s.bpp_overhead = bpp(b.overhead);
    s.bpp_intra = bpp(b.intra);
    s.bpp_coarse = bpp(b.coarse);
    s.bpp_fine = bpp(b.fine);
    s.bpp_residual = bpp(b.residual);
    auto x = original.frames[t].unsqueeze(0).to(torch::kFloat64);
    auto y = recon.frames[t].unsqueeze(0).to(torch::kFloat64);
    s.mse = metrics::mse_255(x, y).item<double>();
    s.psnr = metrics::psnr_from_mse255(s.mse);
    s.ms_ssim = s.mse == 0.0 ? 1.0 : metrics::ms_ssim(x, y).item<double>();
    stats.frames.push_back(s);
  }
  const double n = static_cast<double>(stats.frames.size());
  for (const auto& s : stats.frames) {
    stats.mean.bpp += s.bpp / n;
    stats.mean.bpp_overhead += s.bpp_overhead / n;
    stats.mean.bpp_intra += s.bpp_intra / n;
    stats.mean.bpp_coarse += s.bpp_coarse / n;
    stats.mean.bpp_fine += s.bpp_fine / n;
    stats.mean.bpp_residual += s.bpp_residual / n;
    stats.mean.psnr += s.psnr / n;
    stats.mean.ms_ssim += s.ms_ssim / n;
    stats.mean.mse += s.mse / n;
  }
  return stats;
}

}  // namespace c2f::codec
