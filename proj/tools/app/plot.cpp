#include "plot.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"

namespace atn::app {

namespace {

const std::map<char, std::array<std::uint8_t, 7>>& glyphs() {
  static const std::map<char, std::array<std::uint8_t, 7>> table{
#include "font5x7.inc"
  };
  return table;
}

const Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14},
                        {148, 103, 189}, {140, 86, 75}};

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) < 1e-2 || std::abs(v) >= 1e5))
    std::snprintf(buf, sizeof buf, "%.0e", v);
  else
    std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb background)
    : width_(width), height_(height), rgb_(static_cast<std::size_t>(width) * height * 3) {
  if (width <= 0 || height <= 0) throw ConfigError("canvas size must be positive");
  for (std::size_t i = 0; i < rgb_.size(); i += 3)
    std::copy(background.begin(), background.end(), rgb_.begin() + static_cast<std::ptrdiff_t>(i));
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  rgb_[i] = c[0];
  rgb_[i + 1] = c[1];
  rgb_[i + 2] = c[2];
}

Rgb Canvas::get(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb c) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int n = std::max(1, static_cast<int>(std::ceil(len)));
  for (int k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / n;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
        static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Canvas::rect(int x, int y, int w, int h, Rgb c) {
  for (int j = y; j < y + h; ++j)
    for (int i = x; i < x + w; ++i) set(i, j, c);
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  for (char ch : s) {
    const auto it = glyphs().find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (it != glyphs().end()) {
      for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
          if (it->second[r] & (1 << (4 - col))) rect(cx + col * scale, y + r * scale, scale, scale, c);
    }
    cx += 6 * scale;
  }
}

void Canvas::image(const Image& img, int x, int y, int zoom, double lo, double hi) {
  const double span = hi > lo ? hi - lo : 1.0;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double v = std::clamp((img.at(r, c) - lo) / span, 0.0, 1.0);
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * v));
      rect(x + c * zoom, y + r * zoom, zoom, zoom, {g, g, g});
    }
  }
}

void Canvas::save(const std::filesystem::path& path) const {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw IoError(path.string(), "cannot open image for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError(path.string(), "PNG encoding failed");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width_), static_cast<png_uint_32>(height_), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height_; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb_.data() + static_cast<std::size_t>(y) * width_ * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Canvas line_chart(const std::vector<Series>& series, const std::string& title,
                  const std::string& x_label, const std::string& y_label, bool log_y) {
  constexpr int W = 720, H = 480, left = 80, right = 20, top = 40, bottom = 60;
  Canvas cv(W, H);
  auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-12)) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const int pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  const Rgb axis{0, 0, 0}, grid{225, 225, 225};
  for (int k = 0; k <= 5; ++k) {
    const double yv = y0 + (y1 - y0) * k / 5.0;
    cv.line(left, py(yv), left + pw, py(yv), grid);
    cv.text(4, static_cast<int>(py(yv)) - 3, tick_label(log_y ? std::pow(10.0, yv) : yv), axis);
    const double xv = x0 + (x1 - x0) * k / 5.0;
    cv.line(px(xv), top, px(xv), top + ph, grid);
    cv.text(static_cast<int>(px(xv)) - 12, top + ph + 8, tick_label(xv), axis);
  }
  cv.line(left, top, left, top + ph, axis);
  cv.line(left, top + ph, left + pw, top + ph, axis);
  cv.text(left, 12, title, axis, 2);
  cv.text(left + pw / 2 - 3 * static_cast<int>(x_label.size()), H - 22, x_label, axis);
  cv.text(4, top - 14, y_label + (log_y ? " (LOG)" : ""), axis);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb col = kPalette[s % std::size(kPalette)];
    const auto& sr = series[s];
    for (std::size_t i = 1; i < sr.x.size(); ++i) {
      if (!std::isfinite(sr.y[i - 1]) || !std::isfinite(sr.y[i])) continue;
      cv.line(px(sr.x[i - 1]), py(ty(sr.y[i - 1])), px(sr.x[i]), py(ty(sr.y[i])), col);
    }
    const int ly = top + 8 + static_cast<int>(s) * 12;
    cv.rect(left + pw - 150, ly, 10, 7, col);
    cv.text(left + pw - 135, ly, sr.name, axis);
  }
  return cv;
}

Canvas patch_grid(const std::vector<std::vector<Image>>& rows, int zoom) {
  if (rows.empty() || rows[0].empty()) throw DataError("nothing to draw");
  const int h = rows[0][0].height, w = rows[0][0].width, gap = 4;
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  Canvas cv(static_cast<int>(cols) * (w * zoom + gap) + gap,
            static_cast<int>(rows.size()) * (h * zoom + gap) + gap, {40, 40, 40});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    float lo = 1e30f, hi = -1e30f;
    for (const auto& img : rows[r])
      for (float v : img.pixels) lo = std::min(lo, v), hi = std::max(hi, v);
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      cv.image(rows[r][c], gap + static_cast<int>(c) * (w * zoom + gap),
               gap + static_cast<int>(r) * (h * zoom + gap), zoom, lo, hi);
  }
  return cv;
}

Canvas overlay_grid(const std::vector<EllipseOverlay>& items, int zoom, int columns) {
  if (items.empty()) throw DataError("nothing to draw");
  const int h = items[0].patch.height, w = items[0].patch.width, gap = 4;
  columns = std::max(1, std::min<int>(columns, static_cast<int>(items.size())));
  const int rows = (static_cast<int>(items.size()) + columns - 1) / columns;
  Canvas cv(columns * (w * zoom + gap) + gap, rows * (h * zoom + gap) + gap, {40, 40, 40});
  const Rgb colours[][2] = {{{0, 200, 255}, {255, 200, 0}}, {{255, 60, 60}, {255, 60, 200}}};
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const int ox = gap + static_cast<int>(i % columns) * (w * zoom + gap);
    const int oy = gap + static_cast<int>(i / columns) * (h * zoom + gap);
    float lo = 1e30f, hi = -1e30f;
    for (float v : it.patch.pixels) lo = std::min(lo, v), hi = std::max(hi, v);
    cv.image(it.patch, ox, oy, zoom, lo, hi);
    for (std::size_t k = 0; k < it.labels.size(); ++k) {
      const auto& l = it.labels[k];
      for (int e = 0; e < 2; ++e) {
        const double a = e == 0 ? l.r_a : l.w_a, b = e == 0 ? l.r_b : l.w_b;
        const Rgb col = colours[k % 2][e];
        double prev_x = 0, prev_y = 0;
        for (int s = 0; s <= 90; ++s) {
          const double t = 2.0 * std::numbers::pi * s / 90;
          const double u = a * std::cos(t), v = b * std::sin(t);
          const double x = l.c_x + u * std::cos(l.theta) - v * std::sin(l.theta);
          const double y = l.c_y + u * std::sin(l.theta) + v * std::cos(l.theta);
          // mm -> canvas pixels; column = x / spacing + W/2.
          const double cx = ox + (x / it.spacing_mm + w / 2.0) * zoom;
          const double cy = oy + (y / it.spacing_mm + h / 2.0) * zoom;
          if (s > 0) cv.line(prev_x, prev_y, cx, cy, col);
          prev_x = cx;
          prev_y = cy;
        }
      }
    }
  }
  return cv;
}

}  // namespace atn::app
