#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "idm/checkpoint.hpp"  // IoError
#include "idm/data.hpp"

namespace idm {

// Tiny SVG emitter: world coordinates mapped into a fixed pixel viewport with
// the y axis flipped so larger y is up. Text format keeps plots diffable.
class SvgCanvas {
 public:
  SvgCanvas(Vec2 lo, Vec2 hi, int width = 640, int height = 640)
      : lo_(lo), hi_(hi), width_(width), height_(height) {
    if (!(hi.x > lo.x && hi.y > lo.y)) throw ShapeError("SvgCanvas: degenerate bounds");
    body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
          << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_ << "\">\n";
    body_ << "<rect width=\"" << width_ << "\" height=\"" << height_ << "\" fill=\"white\"/>\n";
  }

  void polyline(const std::vector<Vec2>& pts, const std::string& color, double stroke_width,
                double opacity = 1.0) {
    if (pts.empty()) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
          << stroke_width << "\" stroke-opacity=\"" << opacity << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << " ";
      body_ << px(pts[i].x) << "," << py(pts[i].y);
    }
    body_ << "\"/>\n";
  }

  void circle(const Vec2& p, double radius_px, const std::string& color, double opacity = 1.0) {
    body_ << "<circle cx=\"" << px(p.x) << "\" cy=\"" << py(p.y) << "\" r=\"" << radius_px
          << "\" fill=\"" << color << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }

  // Axis-aligned world-space cell, used for density layers.
  void cell(const Vec2& cell_lo, const Vec2& cell_hi, const std::string& color, double opacity) {
    const double x0 = px(cell_lo.x), x1 = px(cell_hi.x);
    const double y0 = py(cell_hi.y), y1 = py(cell_lo.y);  // y flips
    body_ << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << (x1 - x0)
          << "\" height=\"" << (y1 - y0) << "\" fill=\"" << color << "\" fill-opacity=\""
          << opacity << "\"/>\n";
  }

  void text(const Vec2& p, const std::string& s, int font_px = 12) {
    body_ << "<text x=\"" << px(p.x) << "\" y=\"" << py(p.y) << "\" font-size=\"" << font_px
          << "\" font-family=\"monospace\">" << s << "</text>\n";
  }

  std::string str() const { return body_.str() + "</svg>\n"; }

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << str();
    if (!os) throw IoError("write failure: " + path);
  }

 private:
  double px(double x) const { return (x - lo_.x) / (hi_.x - lo_.x) * width_; }
  double py(double y) const { return height_ - (y - lo_.y) / (hi_.y - lo_.y) * height_; }

  Vec2 lo_, hi_;
  int width_, height_;
  std::ostringstream body_;
};

}  // namespace idm
