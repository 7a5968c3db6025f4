#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cxr {

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
};

// Self-contained line plot, fixed 640x480 viewBox. Data coordinates map
// linearly onto the plot area; no external assets.
std::string line_plot_svg(const std::vector<SvgSeries>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          std::pair<double, double> x_range, std::pair<double, double> y_range);

}  // namespace cxr
