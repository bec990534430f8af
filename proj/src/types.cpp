#include "selfdocseg/types.hpp"

namespace selfdocseg {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::SHAPE_ERROR: return "SHAPE_ERROR";
    case ErrorCode::SHAPE_MISMATCH: return "SHAPE_MISMATCH";
    case ErrorCode::BATCH_MISMATCH: return "BATCH_MISMATCH";
    case ErrorCode::REGION_PACKING_FAILED: return "REGION_PACKING_FAILED";
    case ErrorCode::NO_COMPONENTS: return "NO_COMPONENTS";
    case ErrorCode::EMPTY_MASK: return "EMPTY_MASK";
    case ErrorCode::EMPTY_MASK_NORMALIZER: return "EMPTY_MASK_NORMALIZER";
    case ErrorCode::EMPTY_SPLIT: return "EMPTY_SPLIT";
    case ErrorCode::MISSING_CHECKPOINT: return "MISSING_CHECKPOINT";
    case ErrorCode::IO_ERROR: return "IO_ERROR";
    case ErrorCode::CONFIG_ERROR: return "CONFIG_ERROR";
  }
  return "UNKNOWN";
}

Box Bitmap::bounding_box() const {
  Box b{width, height, -1, -1};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (at(x, y)) {
        if (x < b.x0) b.x0 = x;
        if (x > b.x1) b.x1 = x;
        if (y < b.y0) b.y0 = y;
        if (y > b.y1) b.y1 = y;
      }
    }
  }
  return b;
}

}  // namespace selfdocseg
