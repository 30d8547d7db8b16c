#include "raresynth/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace raresynth {

namespace {

constexpr int kW = 640, kH = 420;
constexpr int kLeft = 64, kRight = 24, kTop = 40, kBottom = 56;

std::string fmt(double v, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::string render_line_plot(const std::string& title, const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<PlotSeries>& series, bool log_x) {
  // Collect x positions; under log_x, zero is parked at min_positive/2.
  double min_pos = 0.0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points)
      if (x > 0.0 && (min_pos == 0.0 || x < min_pos)) min_pos = x;
  if (min_pos == 0.0) min_pos = 1.0;
  auto xpos = [&](double x) {
    if (!log_x) return x;
    return std::log10(x > 0.0 ? x : min_pos / 2.0);
  };

  double xmin = 1e300, xmax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, xpos(x));
      xmax = std::max(xmax, xpos(x));
    }
  if (xmin >= xmax) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  const double ymin = 0.0, ymax = 1.0;

  auto px = [&](double x) {
    return kLeft + (xpos(x) - xmin) / (xmax - xmin) * (kW - kLeft - kRight);
  };
  auto py = [&](double y) {
    return kH - kBottom - (y - ymin) / (ymax - ymin) * (kH - kTop - kBottom);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\""
      << kH << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // y grid and ticks
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    out << "<line x1=\"" << kLeft << "\" y1=\"" << fmt(py(y)) << "\" x2=\""
        << kW - kRight << "\" y2=\"" << fmt(py(y))
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(y) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(y, 1) << "</text>\n";
  }
  // x ticks at the union of series x values
  std::vector<double> xs;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) xs.push_back(x);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    out << "<line x1=\"" << fmt(px(x)) << "\" y1=\"" << kH - kBottom << "\" x2=\""
        << fmt(px(x)) << "\" y2=\"" << kH - kBottom + 5
        << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(px(x)) << "\" y=\"" << kH - kBottom + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(x) << "</text>\n";
  }
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\""
      << kW - kLeft - kRight << "\" height=\"" << kH - kTop - kBottom
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << kH / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 18 " << kH / 2 << ")\">" << y_label << "</text>\n";

  int legend_y = kTop + 10;
  for (const auto& s : series) {
    if (!s.markers_only && s.points.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"2\" points=\"";
      for (const auto& [x, y] : s.points) out << fmt(px(x)) << "," << fmt(py(y)) << " ";
      out << "\"/>\n";
    }
    for (const auto& [x, y] : s.points)
      out << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y))
          << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    out << "<rect x=\"" << kLeft + 10 << "\" y=\"" << legend_y - 8
        << "\" width=\"14\" height=\"4\" fill=\"" << s.color << "\"/>\n";
    out << "<text x=\"" << kLeft + 30 << "\" y=\"" << legend_y
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_histogram_overlay(const std::string& title,
                                     const std::string& x_label,
                                     const Distribution& a, const std::string& name_a,
                                     const Distribution& b, const std::string& name_b) {
  const double xmin = std::min(a.bin_edges.empty() ? 0.0 : a.bin_edges.front(),
                               b.bin_edges.empty() ? 0.0 : b.bin_edges.front());
  const double xmax = std::max(a.bin_edges.empty() ? 1.0 : a.bin_edges.back(),
                               b.bin_edges.empty() ? 1.0 : b.bin_edges.back());
  std::int64_t cmax = 1;
  for (auto c : a.bin_counts) cmax = std::max(cmax, c);
  for (auto c : b.bin_counts) cmax = std::max(cmax, c);

  auto px = [&](double x) {
    return kLeft + (x - xmin) / (xmax > xmin ? xmax - xmin : 1.0) *
                       (kW - kLeft - kRight);
  };
  auto py = [&](double c) {
    return kH - kBottom - c / static_cast<double>(cmax) * (kH - kTop - kBottom);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\""
      << kH << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  auto bars = [&](const Distribution& d, const std::string& color) {
    for (std::size_t i = 0; i < d.bin_counts.size(); ++i) {
      const double x0 = px(d.bin_edges[i]);
      const double x1 = px(d.bin_edges[i + 1]);
      const double y = py(static_cast<double>(d.bin_counts[i]));
      out << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y) << "\" width=\""
          << fmt(std::max(0.5, x1 - x0)) << "\" height=\""
          << fmt(kH - kBottom - y) << "\" fill=\"" << color
          << "\" fill-opacity=\"0.45\"/>\n";
    }
  };
  bars(a, "#1f77b4");
  bars(b, "#d62728");

  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\""
      << kW - kLeft - kRight << "\" height=\"" << kH - kTop - kBottom
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (int i = 0; i <= 6; ++i) {
    const double x = xmin + (xmax - xmin) * i / 6.0;
    out << "<text x=\"" << fmt(px(x)) << "\" y=\"" << kH - kBottom + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(x) << "</text>\n";
  }
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << "</text>\n";
  out << "<rect x=\"" << kLeft + 10 << "\" y=\"" << kTop + 4
      << "\" width=\"14\" height=\"10\" fill=\"#1f77b4\" fill-opacity=\"0.45\"/>\n";
  out << "<text x=\"" << kLeft + 30 << "\" y=\"" << kTop + 13
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << name_a << "</text>\n";
  out << "<rect x=\"" << kLeft + 10 << "\" y=\"" << kTop + 20
      << "\" width=\"14\" height=\"10\" fill=\"#d62728\" fill-opacity=\"0.45\"/>\n";
  out << "<text x=\"" << kLeft + 30 << "\" y=\"" << kTop + 29
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << name_b << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace raresynth
