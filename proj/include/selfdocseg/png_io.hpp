#pragma once

#include <string>

#include "selfdocseg/types.hpp"

namespace selfdocseg {

RgbImage read_rgb_png(const std::string& path);
GrayImage read_gray_png(const std::string& path);

void write_rgb_png(const RgbImage& img, const std::string& path);
void write_gray_png(const GrayImage& img, const std::string& path);

// Bitmap written with values {0,255}.
void write_mask_png(const Bitmap& mask, const std::string& path);
Bitmap read_mask_png(const std::string& path);

}  // namespace selfdocseg
