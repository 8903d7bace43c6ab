#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace volcal {

// Minimal SVG builder. Coordinates print with two decimals so output is
// byte-stable; no timestamps or ids are emitted.
class Svg {
 public:
  Svg(double width, double height);

  Svg& rect(double x, double y, double w, double h, std::string_view fill,
            std::string_view stroke = "none");
  Svg& line(double x1, double y1, double x2, double y2, std::string_view stroke, double width = 1.0,
            std::string_view dash = "");
  Svg& circle(double cx, double cy, double r, std::string_view fill);
  Svg& text(double x, double y, std::string_view s, double size = 11.0,
            std::string_view anchor = "start");
  // Space-separated "x,y" pairs.
  Svg& polyline(std::string_view points, std::string_view stroke, double width = 1.0);

  std::string str() const;
  void write(const std::filesystem::path& path) const;

  static std::string num(double v);
  // Viridis-like ramp for t in [0, 1].
  static std::string heat(double t);

 private:
  double width_;
  double height_;
  std::string body_;
};

// Axis-aligned mapping from data to pixel coordinates.
struct PlotFrame {
  double left, top, width, height;
  double x0, x1, y0, y1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
  double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
  void axes(Svg& svg, std::string_view xlabel, std::string_view ylabel, int ticks = 5) const;
};

}  // namespace volcal
