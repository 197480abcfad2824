#include "rpt/png_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "rpt/errors.hpp"

namespace rpt {

Canvas::Canvas(int width, int height, uint8_t r, uint8_t g, uint8_t b)
    : w_(width), h_(height), pixels_(static_cast<size_t>(width) * height * 3) {
  for (size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = r;
    pixels_[i + 1] = g;
    pixels_[i + 2] = b;
  }
}

void Canvas::set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
  if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
  size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
  pixels_[i] = r;
  pixels_[i + 1] = g;
  pixels_[i + 2] = b;
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, r, g, b);
}

void Canvas::line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, r, g, b);
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

namespace {

uint32_t crc_table_entry(uint32_t n) {
  uint32_t c = n;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

uint32_t crc32_of(const uint8_t* data, size_t len, uint32_t crc = 0xffffffffu) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t n = 0; n < 256; ++n) table[n] = crc_table_entry(n);
    init = true;
  }
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& os, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> buf;
  put_be32(buf, static_cast<uint32_t>(data.size()));
  buf.insert(buf.end(), type, type + 4);
  buf.insert(buf.end(), data.begin(), data.end());
  uint32_t crc = crc32_of(buf.data() + 4, buf.size() - 4) ^ 0xffffffffu;
  put_be32(buf, crc);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void Canvas::save_png(const std::filesystem::path& path) const {
  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h_) * (static_cast<size_t>(w_) * 3 + 1));
  for (int y = 0; y < h_; ++y) {
    raw.push_back(0);
    const uint8_t* row = pixels_.data() + static_cast<size_t>(y) * w_ * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(w_) * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> zdata(zlen);
  if (compress(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size())) != Z_OK)
    throw IoError("png: zlib compression failed");
  zdata.resize(zlen);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write png: " + path.string());
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  os.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(w_));
  put_be32(ihdr, static_cast<uint32_t>(h_));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(os, "IHDR", ihdr);
  write_chunk(os, "IDAT", zdata);
  write_chunk(os, "IEND", {});
  if (!os) throw IoError("png write failed: " + path.string());
}

}  // namespace rpt
