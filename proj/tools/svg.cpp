#include "svg.hpp"

#include <array>
#include <cmath>
#include <cstdio>

namespace protoreg::report {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", std::abs(v) < 0.005 ? 0.0 : v);
  return buf;
}

const std::string& palette(std::size_t i) {
  static const std::array<std::string, 8> colors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % colors.size()];
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string points_attr(const std::vector<std::pair<double, double>>& points) {
  std::string out;
  for (const auto& [x, y] : points) {
    if (!out.empty()) out += ' ';
    out += fmt(x) + "," + fmt(y);
  }
  return out;
}

}  // namespace

void SvgCanvas::circle(double x, double y, double r, const std::string& fill, const std::string& cls) {
  elements_.push_back("<circle class=\"" + cls + "\" cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"" + fmt(r) +
                      "\" fill=\"" + fill + "\" fill-opacity=\"0.7\"/>");
}

void SvgCanvas::plus(double x, double y, double size, const std::string& stroke, const std::string& cls) {
  elements_.push_back("<path class=\"" + cls + "\" d=\"M" + fmt(x - size) + " " + fmt(y) + " H" + fmt(x + size) +
                      " M" + fmt(x) + " " + fmt(y - size) + " V" + fmt(y + size) + "\" stroke=\"" + stroke +
                      "\" stroke-width=\"3\"/>");
}

void SvgCanvas::line(double x1, double y1, double x2, double y2, const std::string& stroke, double width,
                     const std::string& cls) {
  elements_.push_back("<line class=\"" + cls + "\" x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
                      "\" y2=\"" + fmt(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt(width) + "\"/>");
}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke,
                         double width, const std::string& cls) {
  elements_.push_back("<polyline class=\"" + cls + "\" points=\"" + points_attr(points) +
                      "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt(width) + "\"/>");
}

void SvgCanvas::polygon(const std::vector<std::pair<double, double>>& points, const std::string& stroke,
                        const std::string& cls) {
  elements_.push_back("<polygon class=\"" + cls + "\" points=\"" + points_attr(points) +
                      "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\"/>");
}

void SvgCanvas::text(double x, double y, const std::string& content, const std::string& cls) {
  elements_.push_back("<text class=\"" + cls + "\" x=\"" + fmt(x) + "\" y=\"" + fmt(y) +
                      "\" font-family=\"sans-serif\" font-size=\"14\">" + escape(content) + "</text>");
}

std::string SvgCanvas::str() const {
  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n"
      "<rect width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n";
  for (const auto& e : elements_) out += e + "\n";
  out += "</svg>\n";
  return out;
}

Viewport::Viewport(double xmin, double xmax, double ymin, double ymax, double margin)
    : xmin_(xmin), xspan_(xmax - xmin), ymin_(ymin), yspan_(ymax - ymin), margin_(margin) {
  if (!(xspan_ > 0.0)) {
    xmin_ -= 0.5;
    xspan_ = 1.0;
  }
  if (!(yspan_ > 0.0)) {
    ymin_ -= 0.5;
    yspan_ = 1.0;
  }
}

double Viewport::x(double v) const { return margin_ + (v - xmin_) / xspan_ * (SvgCanvas::kWidth - 2 * margin_); }

double Viewport::y(double v) const {
  return SvgCanvas::kHeight - margin_ - (v - ymin_) / yspan_ * (SvgCanvas::kHeight - 2 * margin_);
}

}  // namespace protoreg::report
