#include "cxr/svg.hpp"

#include <algorithm>
#include <sstream>

#include "cxr/error.hpp"

namespace cxr {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 64, kRight = 616, kTop = 48, kBottom = 432;

const char* kPalette[] = {"#1f6fb4", "#d1462f", "#3a9a4c", "#8456b8", "#c98a1e", "#3aa0a0"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string line_plot_svg(const std::vector<SvgSeries>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          std::pair<double, double> x_range, std::pair<double, double> y_range) {
  if (x_range.second <= x_range.first || y_range.second <= y_range.first) {
    throw ValueError("line_plot_svg: degenerate axis range");
  }
  auto px = [&](double x) {
    return kLeft + (x - x_range.first) / (x_range.second - x_range.first) * (kRight - kLeft);
  };
  auto py = [&](double y) {
    return kBottom - (y - y_range.first) / (y_range.second - y_range.first) * (kBottom - kTop);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 480\" "
        "font-family=\"sans-serif\" font-size=\"13\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
  os << "<text x=\"320\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
     << "</text>\n";

  // Axes with five ticks per side.
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kBottom) << "\" x2=\"" << num(kRight)
     << "\" y2=\"" << num(kBottom) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft)
     << "\" y2=\"" << num(kBottom) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = x_range.first + (x_range.second - x_range.first) * i / 5.0;
    const double fy = y_range.first + (y_range.second - y_range.first) * i / 5.0;
    os << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << num(kBottom) << "\" x2=\"" << num(px(fx))
       << "\" y2=\"" << num(kBottom + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kBottom + 20)
       << "\" text-anchor=\"middle\">" << num(fx) << "</text>\n";
    os << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(kLeft)
       << "\" y2=\"" << num(py(fy)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(py(fy) + 4)
       << "\" text-anchor=\"end\">" << num(fy) << "</text>\n";
  }
  os << "<text x=\"" << num((kLeft + kRight) / 2) << "\" y=\"470\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num((kTop + kBottom) / 2)
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << num((kTop + kBottom) / 2)
     << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const SvgSeries& sr = series[s];
    if (sr.points.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6] << "\" stroke-width=\"1.5\"";
    if (sr.dashed) os << " stroke-dasharray=\"6 4\"";
    os << " points=\"";
    for (const auto& [x, y] : sr.points) {
      os << num(px(std::clamp(x, x_range.first, x_range.second))) << ","
         << num(py(std::clamp(y, y_range.first, y_range.second))) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << num(kRight - 180) << "\" y=\"" << num(kTop + 18 + 16 * s)
       << "\" fill=\"" << kPalette[s % 6] << "\">" << escape(sr.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace cxr
