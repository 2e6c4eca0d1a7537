#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "c2f/entropy/range_coder.hpp"

namespace c2f::entropy {

/// Values in [-kSymbolBound, kSymbolBound] are coded directly; anything else
/// is coded as the escape symbol followed by a raw 32-bit two's complement
/// payload.
inline constexpr int32_t kSymbolBound = 64;
inline constexpr int kAlphabetSize = 2 * kSymbolBound + 2;  // values + escape
inline constexpr int kEscapeIndex = 2 * kSymbolBound + 1;
inline constexpr int kEscapePayloadBits = 32;

inline constexpr double kSigmaMin = 0.11;
inline constexpr double kSigmaMax = 256.0;
inline constexpr int kSigmaBins = 64;

/// Frozen integer CDF over the alphabet. cdf.front() == 0,
/// cdf.back() == 2^16, and every symbol owns at least one unit.
struct CdfTable {
  std::vector<uint32_t> cdf;

  uint32_t freq(int index) const { return cdf[index + 1] - cdf[index]; }
  int size() const { return static_cast<int>(cdf.size()) - 1; }

  /// Bits the coder spends on `value` (escape payload included).
  double cost_bits(int32_t value) const;

  /// Largest index whose cumulative frequency is <= target.
  int lookup(uint32_t target) const;
};

/// Quantizes a probability vector to 16-bit frequencies. Every entry gets at
/// least one unit; the remaining rounding error is settled greedily where it
/// costs the fewest expected bits.
CdfTable quantize_pmf(std::span<const double> pmf);

/// Table for a zero-mean discretized Gaussian with standard deviation sigma.
CdfTable gaussian_table(double sigma);

/// Index of the log-spaced sigma bin closest to sigma (clamped).
int sigma_bin(double sigma);
double sigma_bin_center(int bin);

/// The kSigmaBins Gaussian tables, built once.
const std::vector<CdfTable>& gaussian_tables();

void encode_value(RangeEncoder& enc, const CdfTable& table, int32_t value);
int32_t decode_value(RangeDecoder& dec, const CdfTable& table);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace c2f::entropy
