#pragma once

#include <string>
#include <vector>

namespace protoreg::report {

/// Minimal SVG writer with a fixed 800x600 view box. Coordinates are
/// already in pixels; number formatting is fixed so output is byte-stable.
class SvgCanvas {
 public:
  static constexpr double kWidth = 800.0;
  static constexpr double kHeight = 600.0;

  void circle(double x, double y, double r, const std::string& fill, const std::string& cls);
  void plus(double x, double y, double size, const std::string& stroke, const std::string& cls);
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width,
            const std::string& cls);
  void polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke, double width,
                const std::string& cls);
  void polygon(const std::vector<std::pair<double, double>>& points, const std::string& stroke,
               const std::string& cls);
  void text(double x, double y, const std::string& content, const std::string& cls);

  std::string str() const;

 private:
  std::vector<std::string> elements_;
};

/// Maps a data box onto the canvas with a margin, preserving orientation (y up).
class Viewport {
 public:
  Viewport(double xmin, double xmax, double ymin, double ymax, double margin = 50.0);
  double x(double v) const;
  double y(double v) const;

 private:
  double xmin_, xspan_, ymin_, yspan_, margin_;
};

/// Fixed palette, cycled by index.
const std::string& palette(std::size_t i);

std::string fmt(double v);

}  // namespace protoreg::report
