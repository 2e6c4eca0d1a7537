#include "c2f/entropy/cdf_table.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <queue>

namespace c2f::entropy {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double CdfTable::cost_bits(int32_t value) const {
  const bool direct = value >= -kSymbolBound && value <= kSymbolBound;
  const int index = direct ? value + kSymbolBound : kEscapeIndex;
  const double bits = -std::log2(static_cast<double>(freq(index)) / kTotalFreq);
  return direct ? bits : bits + kEscapePayloadBits;
}

int CdfTable::lookup(uint32_t target) const {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  return static_cast<int>(it - cdf.begin()) - 1;
}

CdfTable quantize_pmf(std::span<const double> pmf) {
  const int n = static_cast<int>(pmf.size());
  assert(n >= 1 && static_cast<uint32_t>(n) <= kTotalFreq);

  double mass = 0.0;
  for (double p : pmf) mass += std::max(p, 0.0);
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) p[i] = mass > 0 ? std::max(pmf[i], 0.0) / mass : 1.0 / n;

  std::vector<int64_t> freq(n);
  int64_t total = 0;
  for (int i = 0; i < n; ++i) {
    freq[i] = std::max<int64_t>(1, std::llround(p[i] * kTotalFreq));
    total += freq[i];
  }

  // Marginal change in expected code length per unit moved, using p_i as the
  // weight. Removals hit the entry where losing one unit is cheapest.
  auto removal_cost = [&](int i) {
    return p[i] * std::log2(static_cast<double>(freq[i]) / (freq[i] - 1));
  };
  auto addition_gain = [&](int i) {
    return p[i] * std::log2(static_cast<double>(freq[i] + 1) / freq[i]);
  };

  using Entry = std::pair<double, int>;
  if (total > kTotalFreq) {
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (int i = 0; i < n; ++i)
      if (freq[i] > 1) heap.emplace(removal_cost(i), i);
    while (total > kTotalFreq) {
      auto [cost, i] = heap.top();
      heap.pop();
      --freq[i];
      --total;
      if (freq[i] > 1) heap.emplace(removal_cost(i), i);
    }
  } else if (total < kTotalFreq) {
    std::priority_queue<Entry> heap;
    for (int i = 0; i < n; ++i) heap.emplace(addition_gain(i), i);
    while (total < kTotalFreq) {
      auto [gain, i] = heap.top();
      heap.pop();
      ++freq[i];
      ++total;
      heap.emplace(addition_gain(i), i);
    }
  }

  CdfTable table;
  table.cdf.resize(n + 1);
  table.cdf[0] = 0;
  for (int i = 0; i < n; ++i) table.cdf[i + 1] = table.cdf[i] + static_cast<uint32_t>(freq[i]);
  assert(table.cdf.back() == kTotalFreq);
  return table;
}

CdfTable gaussian_table(double sigma) {
  std::vector<double> pmf(kAlphabetSize);
  for (int32_t v = -kSymbolBound; v <= kSymbolBound; ++v)
    pmf[v + kSymbolBound] = normal_cdf((v + 0.5) / sigma) - normal_cdf((v - 0.5) / sigma);
  // Tail mass, computed directly to avoid cancellation for small sigma.
  pmf[kEscapeIndex] = 2.0 * normal_cdf((-kSymbolBound - 0.5) / sigma);
  return quantize_pmf(pmf);
}

namespace {
const double kLogSigmaMin = std::log(kSigmaMin);
const double kLogSigmaStep = (std::log(kSigmaMax) - std::log(kSigmaMin)) / (kSigmaBins - 1);
}  // namespace

int sigma_bin(double sigma) {
  if (!(sigma > kSigmaMin)) return 0;
  const double position = (std::log(sigma) - kLogSigmaMin) / kLogSigmaStep;
  return std::clamp(static_cast<int>(std::lround(position)), 0, kSigmaBins - 1);
}

double sigma_bin_center(int bin) { return std::exp(kLogSigmaMin + bin * kLogSigmaStep); }

const std::vector<CdfTable>& gaussian_tables() {
  static const std::vector<CdfTable> tables = [] {
    std::vector<CdfTable> t;
    t.reserve(kSigmaBins);
    for (int b = 0; b < kSigmaBins; ++b) t.push_back(gaussian_table(sigma_bin_center(b)));
    return t;
  }();
  return tables;
}

void encode_value(RangeEncoder& enc, const CdfTable& table, int32_t value) {
  if (value >= -kSymbolBound && value <= kSymbolBound) {
    const int index = value + kSymbolBound;
    enc.encode(table.cdf[index], table.freq(index));
    return;
  }
  enc.encode(table.cdf[kEscapeIndex], table.freq(kEscapeIndex));
  enc.encode_u32(static_cast<uint32_t>(value));
}

int32_t decode_value(RangeDecoder& dec, const CdfTable& table) {
  const int index = table.lookup(dec.peek());
  dec.consume(table.cdf[index], table.freq(index));
  if (index != kEscapeIndex) return index - kSymbolBound;
  return static_cast<int32_t>(dec.decode_u32());
}

}  // namespace c2f::entropy
