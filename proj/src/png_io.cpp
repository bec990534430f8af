#include "selfdocseg/png_io.hpp"

#include <png.h>

#include <cstring>

namespace selfdocseg {

namespace {

void read_png(const std::string& path, png_uint_32 format, int channels, int* w,
              int* h, std::vector<uint8_t>* out) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::IO_ERROR,
                "cannot read png: " + path + " (" + image.message + ")");
  }
  image.format = format;
  *w = static_cast<int>(image.width);
  *h = static_cast<int>(image.height);
  out->resize(static_cast<size_t>(channels) * image.width * image.height);
  if (!png_image_finish_read(&image, nullptr, out->data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::IO_ERROR,
                "cannot decode png: " + path + " (" + image.message + ")");
  }
}

void write_png(const std::string& path, png_uint_32 format, int channels, int w,
               int h, const uint8_t* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, channels * w,
                               nullptr)) {
    throw Error(ErrorCode::IO_ERROR,
                "cannot write png: " + path + " (" + image.message + ")");
  }
}

}  // namespace

RgbImage read_rgb_png(const std::string& path) {
  RgbImage img;
  read_png(path, PNG_FORMAT_RGB, 3, &img.width, &img.height, &img.px);
  return img;
}

GrayImage read_gray_png(const std::string& path) {
  GrayImage img;
  read_png(path, PNG_FORMAT_GRAY, 1, &img.width, &img.height, &img.px);
  return img;
}

void write_rgb_png(const RgbImage& img, const std::string& path) {
  write_png(path, PNG_FORMAT_RGB, 3, img.width, img.height, img.px.data());
}

void write_gray_png(const GrayImage& img, const std::string& path) {
  write_png(path, PNG_FORMAT_GRAY, 1, img.width, img.height, img.px.data());
}

void write_mask_png(const Bitmap& mask, const std::string& path) {
  std::vector<uint8_t> buf(mask.px.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = mask.px[i] ? 255 : 0;
  write_png(path, PNG_FORMAT_GRAY, 1, mask.width, mask.height, buf.data());
}

Bitmap read_mask_png(const std::string& path) {
  GrayImage g = read_gray_png(path);
  Bitmap m(g.width, g.height);
  for (size_t i = 0; i < g.px.size(); ++i) m.px[i] = g.px[i] >= 128 ? 1 : 0;
  return m;
}

}  // namespace selfdocseg
