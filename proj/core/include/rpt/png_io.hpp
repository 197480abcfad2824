#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rpt {

/// Minimal RGB8 raster with zlib-compressed PNG output; enough for loss
/// curves, bar charts, and mask overlays without a plotting dependency.
class Canvas {
 public:
  Canvas(int width, int height, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255);

  int width() const { return w_; }
  int height() const { return h_; }
  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b);
  void fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
  void line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);

  void save_png(const std::filesystem::path& path) const;

 private:
  int w_, h_;
  std::vector<uint8_t> pixels_;  // RGB, row-major
};

}  // namespace rpt
