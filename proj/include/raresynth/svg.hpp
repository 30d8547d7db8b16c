#pragma once

#include <string>
#include <utility>
#include <vector>

#include "raresynth/diversity.hpp"

namespace raresynth {

struct PlotSeries {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;  // (x, y)
  bool markers_only = false;
};

// Line chart with an optionally log-scaled x axis. x == 0 is drawn at half
// the smallest positive x and labeled "0". Deterministic output text.
std::string render_line_plot(const std::string& title, const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<PlotSeries>& series, bool log_x);

// Two overlaid histograms (translucent bars) sharing one x axis.
std::string render_histogram_overlay(const std::string& title,
                                     const std::string& x_label,
                                     const Distribution& a, const std::string& name_a,
                                     const Distribution& b, const std::string& name_b);

}  // namespace raresynth
