#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfdocseg {

enum class ErrorCode {
  SHAPE_ERROR,
  SHAPE_MISMATCH,
  BATCH_MISMATCH,
  REGION_PACKING_FAILED,
  NO_COMPONENTS,
  EMPTY_MASK,
  EMPTY_MASK_NORMALIZER,
  EMPTY_SPLIT,
  MISSING_CHECKPOINT,
  IO_ERROR,
  CONFIG_ERROR,
};

struct Error : std::runtime_error {
  Error(ErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
  ErrorCode code;
};

const char* error_code_name(ErrorCode c);

// Axis-aligned box, half-open in neither sense: [x0,x1] x [y0,y1] inclusive.
struct Box {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool intersects(const Box& o) const {
    return !(o.x0 > x1 || o.x1 < x0 || o.y0 > y1 || o.y1 < y0);
  }
  Box dilated(int r) const { return Box{x0 - r, y0 - r, x1 + r, y1 + r}; }
  bool operator==(const Box& o) const = default;
};

// Interleaved 8-bit RGB raster.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<uint8_t> px;  // size 3*width*height, row-major, r g b

  RgbImage() = default;
  RgbImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), px(static_cast<size_t>(3) * w * h, fill) {}

  uint8_t* at(int x, int y) { return &px[3 * (static_cast<size_t>(y) * width + x)]; }
  const uint8_t* at(int x, int y) const {
    return &px[3 * (static_cast<size_t>(y) * width + x)];
  }
  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    uint8_t* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
  bool operator==(const RgbImage& o) const = default;
};

struct GrayImage {
  int width = 0, height = 0;
  std::vector<uint8_t> px;

  GrayImage() = default;
  GrayImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }
  bool operator==(const GrayImage& o) const = default;
};

// Binary raster with values {0,1}.
struct Bitmap {
  int width = 0, height = 0;
  std::vector<uint8_t> px;

  Bitmap() = default;
  Bitmap(int w, int h, uint8_t fill = 0)
      : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return px.empty(); }
  bool operator==(const Bitmap& o) const = default;

  long popcount() const {
    long n = 0;
    for (uint8_t v : px) n += v;
    return n;
  }
  // Tight bounding box of the 1-pixels; empty box if none.
  Box bounding_box() const;
};

}  // namespace selfdocseg
