#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2f/data.hpp"
#include "c2f/pframe.hpp"

namespace c2f::codec {

inline constexpr uint8_t kVersion = 1;
inline constexpr size_t kHeaderSize = 18;

enum Flags : uint8_t {
  kFlagHamc = 1 << 0,
  kFlagHarc = 1 << 1,
  kFlagCoarseToFine = 1 << 2,
  kFlagAltModel = 1 << 3,
};

enum class RecordType : uint8_t { Intra = 0, Inter = 1, InterAlt = 2 };

/// Lossless deflate of 8-bit RGB.
inline constexpr uint8_t kIntraDeflate = 0;

struct Header {
  uint8_t version = kVersion;
  uint8_t flags = 0;
  uint16_t width = 0;
  uint16_t height = 0;
  uint32_t frames = 0;
  uint16_t gop = 0;
  uint8_t model_id = 0;
  uint8_t intra_codec_id = kIntraDeflate;
};

struct FrameRecord {
  RecordType type = RecordType::Intra;
  uint8_t alt_model_id = 0;      // InterAlt only
  std::vector<uint8_t> intra;    // Intra only
  PFrameSegments inter;          // Inter and InterAlt
};

struct Bitstream {
  Header header;
  std::vector<FrameRecord> records;
};

/// Byte-exact layout, little-endian:
///   header: "C2FV" version flags width height frames gop model_id intra_codec_id
///   intra record: 0x00, u32 len, payload
///   inter record: 0x01 (or 0x02 + u8 alt model id), then three segments
///     (coarse motion, fine motion, residual), each u32 len + payload; the
///     fine and residual payloads are u32 hyper_len + hyper bytes + main bytes
std::vector<uint8_t> serialize(const Bitstream& stream);

/// Throws DecodeError (with byte offset and frame index) on a bad magic,
/// version, record type, or any length running past the end of the buffer.
Bitstream parse(std::span<const uint8_t> bytes);
Header parse_header(std::span<const uint8_t> bytes);

/// Bytes each frame contributes to the file, by category.
struct FrameBytes {
  size_t overhead = 0;  // record type byte(s)
  size_t intra = 0;
  size_t coarse = 0;    // includes its length prefix
  size_t fine = 0;      // includes both length prefixes
  size_t residual = 0;  // includes both length prefixes

  size_t total() const { return overhead + intra + coarse + fine + residual; }
};
FrameBytes frame_bytes(const FrameRecord& record);

std::vector<uint8_t> intra_encode(const Frame& frame);
Frame intra_decode(std::span<const uint8_t> payload, FrameDims dims);

/// A loaded model together with the id written into streams it produces.
struct CodecModel {
  PFrameModel model{nullptr};
  uint8_t id = 0;
};

struct EncodeOptions {
  int gop = 10;
  /// Every 4th P-frame of a GoP uses this model when set.
  std::optional<CodecModel> alt;
};

/// Per-P-frame decisions; empty tensors for intra frames.
struct FrameDecisions {
  modes::HamcModes fine_modes;
  torch::Tensor keep_mask;
};

struct EncodeResult {
  Bitstream stream;
  std::vector<uint8_t> bytes;
  data::Clip recon;  // encoder-side reconstructions
  std::vector<FrameDecisions> decisions;
};

EncodeResult encode_video(const data::Clip& clip, const CodecModel& model,
                          const EncodeOptions& options);

struct DecodeOptions {
  std::optional<CodecModel> alt;
  /// On a corrupt P-frame, repeat the last good frame until the next intra
  /// frame instead of throwing.
  bool conceal_errors = false;
};

struct DecodeResult {
  data::Clip frames;
  std::vector<FrameDecisions> decisions;
  std::vector<std::string> concealed;  // one message per concealed frame
};

/// Refuses (DecodeError) before emitting anything when the stream's model id
/// or coding flags do not match the model.
DecodeResult decode_video(std::span<const uint8_t> bytes, const CodecModel& model,
                          const DecodeOptions& options = {});

struct FrameStats {
  double bpp = 0;
  double bpp_overhead = 0;
  double bpp_intra = 0;
  double bpp_coarse = 0;
  double bpp_fine = 0;
  double bpp_residual = 0;
  double psnr = 0;
  double ms_ssim = 0;
  double mse = 0;  // 255 scale
};

struct RDStats {
  std::vector<FrameStats> frames;
  FrameStats mean;
  size_t header_bytes = kHeaderSize;
  size_t file_bytes = 0;
};

/// bpp uses the original frame dims from the stream header.
RDStats evaluate(const data::Clip& original, const data::Clip& recon,
                 std::span<const uint8_t> file);

}  // namespace c2f::codec
