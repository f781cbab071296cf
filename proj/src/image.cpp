#include "sidekick/image.hpp"

#include <cmath>
#include <fstream>

#include "sidekick/io.hpp"

namespace sidekick {

void write_ppm(const ImageRGB& img, const std::string& path) {
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(header.data(), std::streamsize(header.size()));
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           std::streamsize(img.rgb.size()));
  if (!os) throw DataError("write failed: " + path);
}

void draw_line(ImageRGB& img, int x0, int y0, int x1, int y1, std::uint8_t r,
               std::uint8_t g, std::uint8_t b) {
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && y0 >= 0) img.set(std::size_t(x0), std::size_t(y0), r, g, b);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_rect_outline(ImageRGB& img, int x0, int y0, int w, int h,
                       std::uint8_t r, std::uint8_t g, std::uint8_t b,
                       int thickness) {
  for (int t = 0; t < thickness; ++t) {
    int xa = x0 + t, ya = y0 + t, xb = x0 + w - 1 - t, yb = y0 + h - 1 - t;
    draw_line(img, xa, ya, xb, ya, r, g, b);
    draw_line(img, xa, yb, xb, yb, r, g, b);
    draw_line(img, xa, ya, xa, yb, r, g, b);
    draw_line(img, xb, ya, xb, yb, r, g, b);
  }
}

}  // namespace sidekick
