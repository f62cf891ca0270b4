#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atn/fwhm.hpp"
#include "atn/image.hpp"
#include "atn/nets.hpp"

namespace atn::app {

using Rgb = std::array<std::uint8_t, 3>;

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});
  int width() const { return width_; }
  int height() const { return height_; }
  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  void line(double x0, double y0, double x1, double y1, Rgb c);
  void rect(int x, int y, int w, int h, Rgb c);
  /// 5x7 bitmap glyphs, upper case only; `scale` multiplies the glyph size.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  /// Grey-scale image window [lo, hi] drawn at (x, y), each pixel `zoom` wide.
  void image(const Image& img, int x, int y, int zoom, double lo, double hi);
  void save(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> rgb_;
};

struct Series {
  std::string name;
  std::vector<double> x, y;
};

/// Line chart with axes; y is optionally shown on a log10 scale.
Canvas line_chart(const std::vector<Series>& series, const std::string& title,
                  const std::string& x_label, const std::string& y_label, bool log_y);

/// Rows of patches, each row windowed to its own range.
Canvas patch_grid(const std::vector<std::vector<Image>>& rows, int zoom);

/// Patches with inner/outer ellipses (mm, patch-centred) drawn on top.
struct EllipseOverlay {
  Image patch;
  double spacing_mm = 0.5;
  std::vector<AirwayLabel> labels;  // drawn in order, colours cycle
};
Canvas overlay_grid(const std::vector<EllipseOverlay>& items, int zoom, int columns);

}  // namespace atn::app
