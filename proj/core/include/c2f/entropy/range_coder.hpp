#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace c2f::entropy {

/// Frequencies are expressed in units of 2^-kPrecisionBits.
inline constexpr int kPrecisionBits = 16;
inline constexpr uint32_t kTotalFreq = 1u << kPrecisionBits;

/// Byte-oriented range encoder with carry propagation (32-bit range, 64-bit
/// low). The always-zero leading byte is not emitted; finish() flushes four
/// bytes, so an empty stream is exactly 4 bytes long.
class RangeEncoder {
 public:
  /// Codes the interval [cum, cum + freq) of a 2^16 total.
  void encode(uint32_t cum, uint32_t freq);

  /// Codes `nbits` (1..16) raw bits with a uniform model.
  void encode_bits(uint32_t value, int nbits);

  void encode_u32(uint32_t value) {
    encode_bits(value >> 16, 16);
    encode_bits(value & 0xFFFF, 16);
  }

  std::vector<uint8_t> finish();

 private:
  void shift_low();
  void normalize();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
  bool leading_ = true;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> data);

  /// Returns the cumulative frequency target in [0, 2^16). The caller maps it
  /// to a symbol and must then call consume() with that symbol's interval.
  uint32_t peek();
  void consume(uint32_t cum, uint32_t freq);

  uint32_t decode_bits(int nbits);
  uint32_t decode_u32() {
    uint32_t hi = decode_bits(16);
    return (hi << 16) | decode_bits(16);
  }

  std::size_t position() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  uint8_t next_byte();
  void normalize();

  std::span<const uint8_t> data_;
  std::size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t step_ = 0;
};

}  // namespace c2f::entropy
