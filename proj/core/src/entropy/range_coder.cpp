#include "c2f/entropy/range_coder.hpp"

#include <cassert>

#include "c2f/common.hpp"

namespace c2f::entropy {

namespace {
constexpr uint32_t kTop = 1u << 24;
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t pending = cache_;
    do {
      if (leading_) {
        // The first byte is always zero: the coded value is below 1.0.
        assert(static_cast<uint8_t>(pending + carry) == 0);
        leading_ = false;
      } else {
        out_.push_back(static_cast<uint8_t>(pending + carry));
      }
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::normalize() {
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
  assert(freq > 0 && cum + freq <= kTotalFreq);
  const uint32_t r = range_ >> kPrecisionBits;
  low_ += static_cast<uint64_t>(r) * cum;
  range_ = r * freq;
  normalize();
}

void RangeEncoder::encode_bits(uint32_t value, int nbits) {
  assert(nbits >= 1 && nbits <= 16 && value < (1u << nbits));
  range_ >>= nbits;
  low_ += static_cast<uint64_t>(range_) * value;
  normalize();
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  std::vector<uint8_t> result;
  result.swap(out_);
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  cache_ = 0;
  cache_size_ = 1;
  leading_ = true;
  return result;
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> data) : data_(data) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= data_.size()) throw DecodeError("range decoder: stream underrun", pos_);
  return data_[pos_++];
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::peek() {
  step_ = range_ >> kPrecisionBits;
  const uint32_t target = code_ / step_;
  if (target >= kTotalFreq) throw DecodeError("range decoder: corrupt stream", pos_);
  return target;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
  code_ -= step_ * cum;
  range_ = step_ * freq;
  normalize();
}

uint32_t RangeDecoder::decode_bits(int nbits) {
  range_ >>= nbits;
  const uint32_t value = code_ / range_;
  if (value >= (1u << nbits)) throw DecodeError("range decoder: corrupt raw bits", pos_);
  code_ -= value * range_;
  normalize();
  return value;
}

}  // namespace c2f::entropy
