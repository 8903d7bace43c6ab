#include "volcal/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "volcal/fs_util.hpp"

namespace volcal {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string Svg::num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string Svg::heat(double t) {
  // Five-stop approximation of viridis.
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  char buf[16];
  int rgb[3];
  for (int k = 0; k < 3; ++k) {
    rgb[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

Svg::Svg(double width, double height) : width_(width), height_(height) {}

Svg& Svg::rect(double x, double y, double w, double h, std::string_view fill, std::string_view stroke) {
  body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" +
           num(h) + "\" fill=\"" + std::string(fill) + "\" stroke=\"" + std::string(stroke) + "\"/>\n";
  return *this;
}

Svg& Svg::line(double x1, double y1, double x2, double y2, std::string_view stroke, double width,
               std::string_view dash) {
  body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
           "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" + num(width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + std::string(dash) + "\"";
  body_ += "/>\n";
  return *this;
}

Svg& Svg::circle(double cx, double cy, double r, std::string_view fill) {
  body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" +
           std::string(fill) + "\"/>\n";
  return *this;
}

Svg& Svg::text(double x, double y, std::string_view s, double size, std::string_view anchor) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) +
           "\" font-family=\"sans-serif\" text-anchor=\"" + std::string(anchor) + "\">" + escape(s) +
           "</text>\n";
  return *this;
}

Svg& Svg::polyline(std::string_view points, std::string_view stroke, double width) {
  body_ += "<polyline points=\"" + std::string(points) + "\" fill=\"none\" stroke=\"" +
           std::string(stroke) + "\" stroke-width=\"" + num(width) + "\"/>\n";
  return *this;
}

std::string Svg::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" +
         num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n" +
         "<rect x=\"0\" y=\"0\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
         "\" fill=\"white\"/>\n" + body_ + "</svg>\n";
}

void Svg::write(const std::filesystem::path& path) const { write_text_atomic(path, str()); }

void PlotFrame::axes(Svg& svg, std::string_view xlabel, std::string_view ylabel, int ticks) const {
  svg.line(left, top + height, left + width, top + height, "black");
  svg.line(left, top, left, top + height, "black");
  char buf[32];
  for (int i = 0; i <= ticks; ++i) {
    const double fx = x0 + (x1 - x0) * i / ticks;
    const double fy = y0 + (y1 - y0) * i / ticks;
    std::snprintf(buf, sizeof buf, "%.3g", fx);
    svg.line(px(fx), top + height, px(fx), top + height + 4, "black");
    svg.text(px(fx), top + height + 16, buf, 10, "middle");
    std::snprintf(buf, sizeof buf, "%.3g", fy);
    svg.line(left - 4, py(fy), left, py(fy), "black");
    svg.text(left - 6, py(fy) + 3, buf, 10, "end");
  }
  svg.text(left + width / 2, top + height + 32, xlabel, 11, "middle");
  svg.text(left - 40, top - 8, ylabel, 11, "start");
}

}  // namespace volcal
