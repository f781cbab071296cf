#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sidekick/common.hpp"

namespace sidekick {

// Minimal 8-bit RGB raster with binary PPM (P6) output. PPM is the artifact's
// standard image format: lossless, deterministic, viewable everywhere.
struct ImageRGB {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h, std::uint8_t fill = 255)
      : width(w), height(h), rgb(w * h * 3, fill) {}

  void set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g,
           std::uint8_t b) {
    if (x >= width || y >= height) return;
    auto* p = &rgb[(y * width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  void get(std::size_t x, std::size_t y, std::uint8_t& r, std::uint8_t& g,
           std::uint8_t& b) const {
    const auto* p = &rgb[(y * width + x) * 3];
    r = p[0];
    g = p[1];
    b = p[2];
  }
};

inline std::uint8_t to_u8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return std::uint8_t(v * 255.0 + 0.5);
}

void write_ppm(const ImageRGB& img, const std::string& path);

// Draws a straight line segment (used for action arrows).
void draw_line(ImageRGB& img, int x0, int y0, int x1, int y1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b);

void draw_rect_outline(ImageRGB& img, int x0, int y0, int w, int h,
                       std::uint8_t r, std::uint8_t g, std::uint8_t b,
                       int thickness = 1);

}  // namespace sidekick
