#pragma once

#include <optional>
#include <vector>

#include "selfdocseg/types.hpp"

namespace selfdocseg::maskgen {

struct MaskGenParams {
  int threshold = 239;        // grayscale <= threshold is ink
  int kernel_h = 5;           // rectangular structuring element
  int kernel_w = 5;
  int min_component_area_px = 16;  // 0 keeps every component

  void validate() const;  // throws CONFIG_ERROR
};

// Rec.709 luma: round(0.2126 R + 0.7152 G + 0.0722 B).
GrayImage to_grayscale(const RgbImage& img);

// 0 = ink where gray <= threshold, 1 = paper. Erosion (min filter) then
// thickens the 0-regions.
Bitmap binarize(const GrayImage& gray, int threshold);

// Morphological minimum over a kh x kw window; borders padded with 1 (paper)
// so page edges never turn into ink.
Bitmap erode(const Bitmap& bin, int kernel_h, int kernel_w);

// m = 1 - m_bar; 1 marks layout-object regions.
Bitmap invert(const Bitmap& m_bar);

// invert(erode(binarize(to_grayscale(img)))) — the full pipeline.
Bitmap generate_layout_mask(const RgbImage& img, const MaskGenParams& params);

struct ObjectMaskSet {
  std::vector<Bitmap> masks;  // one filled raster per component
  std::vector<int> areas;
  int filtered_area = 0;  // pixels dropped by the min-area filter

  size_t size() const { return masks.size(); }
};

// 8-connected components of the 1-pixels, ordered by first pixel in row-major
// scan; components below min_area are dropped. Throws NO_COMPONENTS when
// nothing survives.
ObjectMaskSet extract_object_masks(const Bitmap& m, int min_area);

// Any-overlap downsample onto an exact (target_h, target_w) partition of the
// grid. nullopt means the component vanished and must be dropped from pooling.
// Requires mask dims divisible by the target dims.
std::optional<Bitmap> downsample_mask(const Bitmap& mask, int target_h, int target_w);

}  // namespace selfdocseg::maskgen
