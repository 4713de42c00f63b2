#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bdmri/calibrate/pp.hpp"
#include "bdmri/core/errors.hpp"

namespace bdmri::io {

namespace detail {

struct Frame {
  double width = 480, height = 480, margin = 56;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); }
  double py(double y) const { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); }
};

inline std::string polyline(const Frame& f, const std::vector<double>& x, const std::vector<double>& y,
                            const std::string& style) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" " << style << " points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) s << f.px(x[i]) << "," << f.py(y[i]) << " ";
  s << "\"/>\n";
  return s.str();
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, const std::string& title) {
  std::ostringstream s;
  s << "<rect x=\"" << f.margin << "\" y=\"" << f.margin << "\" width=\"" << f.width - 2 * f.margin
    << "\" height=\"" << f.height - 2 * f.margin << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tx = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double ty = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s << "<text x=\"" << f.px(tx) << "\" y=\"" << f.height - f.margin + 16
      << "\" font-size=\"11\" text-anchor=\"middle\">" << tx << "</text>\n";
    s << "<text x=\"" << f.margin - 6 << "\" y=\"" << f.py(ty) + 4
      << "\" font-size=\"11\" text-anchor=\"end\">" << ty << "</text>\n";
  }
  s << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 14 << "\" font-size=\"13\" text-anchor=\"middle\">"
    << xlabel << "</text>\n";
  s << "<text x=\"16\" y=\"" << f.height / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << f.height / 2 << ")\">" << ylabel << "</text>\n";
  s << "<text x=\"" << f.width / 2 << "\" y=\"" << f.margin - 18 << "\" font-size=\"14\" text-anchor=\"middle\">"
    << title << "</text>\n";
  return s.str();
}

inline void write_document(const std::string& path, const Frame& f, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << f.width << "\" height=\""
      << f.height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body << "</svg>\n";
}

}  // namespace detail

struct NamedCurve {
  std::string label;
  calibrate::PPCurve curve;
};

/// P-P plot: the diagonal, the binomial band of the first curve, and one
/// polyline per curve.
inline void write_pp_svg(const std::string& path, const std::vector<NamedCurve>& curves, const std::string& title) {
  if (curves.empty()) throw DataError("P-P plot: no curves");
  detail::Frame f;
  std::ostringstream body;
  body << detail::axes(f, "theoretical probability p", "observed coverage", title);
  const auto& first = curves.front().curve;
  std::ostringstream band;
  band << "<polygon fill=\"#dddddd\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < first.p.size(); ++i) band << f.px(first.p[i]) << "," << f.py(first.band_hi[i]) << " ";
  for (std::size_t i = first.p.size(); i-- > 0;) band << f.px(first.p[i]) << "," << f.py(first.band_lo[i]) << " ";
  band << "\"/>\n";
  body << band.str();
  body << detail::polyline(f, {0.0, 1.0}, {0.0, 1.0}, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
  const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const std::string colour = colours[c % 4];
    body << detail::polyline(f, curves[c].curve.p, curves[c].curve.coverage,
                             "stroke=\"" + colour + "\" stroke-width=\"2\"");
    body << "<text x=\"" << f.margin + 8 << "\" y=\"" << f.margin + 16 + 16 * c << "\" font-size=\"12\" fill=\""
         << colour << "\">" << curves[c].label << "</text>\n";
  }
  detail::write_document(path, f, body.str());
}

/// Histogram with `bins` equal-width bins over the sample range.
inline void write_histogram_svg(const std::string& path, const std::vector<double>& samples, int bins,
                                const std::string& title) {
  if (samples.empty() || bins < 1) throw DataError("histogram: need samples and at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : samples) {
    auto b = static_cast<int>((v - lo) / (hi - lo) * bins);
    counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
  }
  detail::Frame f;
  f.x0 = lo;
  f.x1 = hi;
  f.y1 = *std::max_element(counts.begin(), counts.end());
  std::ostringstream body;
  body << detail::axes(f, "value", "count", title);
  const double w = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    const double x = lo + b * w;
    body << "<rect x=\"" << f.px(x) << "\" y=\"" << f.py(counts[static_cast<std::size_t>(b)]) << "\" width=\""
         << f.px(x + w) - f.px(x) << "\" height=\"" << f.py(0) - f.py(counts[static_cast<std::size_t>(b)])
         << "\" fill=\"#1f77b4\" stroke=\"white\"/>\n";
  }
  detail::write_document(path, f, body.str());
}

}  // namespace bdmri::io
