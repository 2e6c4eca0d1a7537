#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace c2f::rd {

struct RDPoint {
  double bpp = 0;
  double quality = 0;  // PSNR in dB or MS-SSIM
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;

  /// Sorts by bpp; throws if fewer than four points or bpp is not strictly
  /// increasing.
  void normalize();
};

/// Average rate difference of `test` against `anchor` at equal quality, in
/// percent (negative = savings). Cubic fit of log10(rate) over quality,
/// integrated over the overlapping quality range only.
double bd_rate(RDCurve anchor, RDCurve test);

/// Average quality difference at equal rate (cubic fit of quality over
/// log10(rate), integrated over the overlapping rate range).
double bd_quality(RDCurve anchor, RDCurve test);

/// Writes `out_path` as an SVG plot and a tab-separated table of the points
/// next to it (same stem, ".tsv"). Returns the table path.
std::filesystem::path plot_rd(const std::vector<RDCurve>& curves,
                              const std::filesystem::path& out_path,
                              const std::string& quality_label = "PSNR (dB)");

/// Reads a table written by plot_rd.
std::vector<RDCurve> read_rd_table(const std::filesystem::path& path);

}  // namespace c2f::rd
