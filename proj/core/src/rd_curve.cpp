#include "c2f/rd_curve.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "c2f/common.hpp"

namespace c2f::rd {

void RDCurve::normalize() {
  if (points.size() < 4) throw Error("RD curve '" + label + "' needs at least 4 points");
  std::sort(points.begin(), points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  for (size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].bpp > 0) || !std::isfinite(points[i].quality))
      throw Error("RD curve '" + label + "' has a non-positive rate or non-finite quality");
    if (i > 0 && !(points[i].bpp > points[i - 1].bpp))
      throw Error("RD curve '" + label + "' rates are not strictly increasing");
  }
}

namespace {

// Least-squares cubic y = c0 + c1 x + c2 x^2 + c3 x^3.
Eigen::Vector4d fit_cubic(const std::vector<double>& x, const std::vector<double>& y) {
  Eigen::MatrixXd a(x.size(), 4);
  Eigen::VectorXd b(y.size());
  for (size_t i = 0; i < x.size(); ++i) {
    a.row(i) << 1.0, x[i], x[i] * x[i], x[i] * x[i] * x[i];
    b(i) = y[i];
  }
  return a.colPivHouseholderQr().solve(b);
}

double integral(const Eigen::Vector4d& c, double lo, double hi) {
  auto prim = [&](double x) {
    return c(0) * x + c(1) * x * x / 2 + c(2) * x * x * x / 3 + c(3) * x * x * x * x / 4;
  };
  return prim(hi) - prim(lo);
}

// Mean of (fit_test - fit_anchor) over the overlap of the two x ranges.
double mean_difference(const std::vector<double>& xa, const std::vector<double>& ya,
                       const std::vector<double>& xt, const std::vector<double>& yt) {
  const double lo = std::max(*std::min_element(xa.begin(), xa.end()),
                             *std::min_element(xt.begin(), xt.end()));
  const double hi = std::min(*std::max_element(xa.begin(), xa.end()),
                             *std::max_element(xt.begin(), xt.end()));
  if (!(hi > lo)) throw Error("RD curves do not overlap");
  const auto ca = fit_cubic(xa, ya);
  const auto ct = fit_cubic(xt, yt);
  return (integral(ct, lo, hi) - integral(ca, lo, hi)) / (hi - lo);
}

struct Columns {
  std::vector<double> log_rate;
  std::vector<double> quality;
};

Columns columns(RDCurve& curve) {
  curve.normalize();
  Columns c;
  for (const auto& p : curve.points) {
    c.log_rate.push_back(std::log10(p.bpp));
    c.quality.push_back(p.quality);
  }
  return c;
}

}  // namespace

double bd_rate(RDCurve anchor, RDCurve test) {
  const auto a = columns(anchor);
  const auto t = columns(test);
  const double diff = mean_difference(a.quality, a.log_rate, t.quality, t.log_rate);
  return (std::pow(10.0, diff) - 1.0) * 100.0;
}

double bd_quality(RDCurve anchor, RDCurve test) {
  const auto a = columns(anchor);
  const auto t = columns(test);
  return mean_difference(a.log_rate, a.quality, t.log_rate, t.quality);
}

std::filesystem::path plot_rd(const std::vector<RDCurve>& curves,
                              const std::filesystem::path& out_path,
                              const std::string& quality_label) {
  if (curves.empty()) throw Error("plot_rd: no curves");
  double x0 = std::numeric_limits<double>::max(), x1 = std::numeric_limits<double>::lowest();
  double y0 = x0, y1 = x1;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      x0 = std::min(x0, p.bpp);
      x1 = std::max(x1, p.bpp);
      y0 = std::min(y0, p.quality);
      y1 = std::max(y1, p.quality);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;

  constexpr double kW = 640, kH = 480, kL = 70, kR = 20, kT = 20, kB = 50;
  auto sx = [&](double x) { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); };
  auto sy = [&](double y) { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ofstream svg(out_path);
  if (!svg) throw Error("plot_rd: cannot write " + out_path.string());
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\""
      << kH - kT - kB << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\">"
        << std::setprecision(3) << xv << "</text>\n"
        << "<text x=\"" << kL - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv
        << "</text>\n"
        << std::setprecision(2);
  }
  svg << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 10
      << "\" text-anchor=\"middle\">bpp</text>\n"
      << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (kT + kH - kB) / 2 << ")\">" << quality_label << "</text>\n";
  for (size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : curves[c].points) svg << sx(p.bpp) << ',' << sy(p.quality) << ' ';
    svg << "\"/>\n";
    for (const auto& p : curves[c].points)
      svg << "<circle cx=\"" << sx(p.bpp) << "\" cy=\"" << sy(p.quality) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    svg << "<text x=\"" << kL + 10 << "\" y=\"" << kT + 16 + 16 * c << "\" fill=\"" << color
        << "\">" << curves[c].label << "</text>\n";
  }
  svg << "</svg>\n";

  auto table_path = out_path;
  table_path.replace_extension(".tsv");
  std::ofstream table(table_path);
  if (!table) throw Error("plot_rd: cannot write " + table_path.string());
  table << "curve\tbpp\tquality\n" << std::setprecision(17);
  for (const auto& c : curves)
    for (const auto& p : c.points) table << c.label << '\t' << p.bpp << '\t' << p.quality << '\n';
  return table_path;
}

std::vector<RDCurve> read_rd_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open RD table " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "curve\tbpp\tquality") throw Error("not an RD table: " + path.string());
  std::vector<RDCurve> curves;
  std::map<std::string, size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string label, bpp, quality;
    if (!std::getline(row, label, '\t') || !std::getline(row, bpp, '\t') ||
        !std::getline(row, quality, '\t'))
      throw Error("malformed RD table row: " + line);
    auto [it, inserted] = index.emplace(label, curves.size());
    if (inserted) curves.push_back({label, {}});
    curves[it->second].points.push_back({std::stod(bpp), std::stod(quality)});
  }
  return curves;
}

}  // namespace c2f::rd
