#include "selfdocseg/maskgen.hpp"

#include <cmath>
#include <deque>

namespace selfdocseg::maskgen {

void MaskGenParams::validate() const {
  if (threshold <= 0 || threshold >= 255)
    throw Error(ErrorCode::CONFIG_ERROR, "threshold must be in (0,255)");
  if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0)
    throw Error(ErrorCode::CONFIG_ERROR, "kernel dims must be odd and >= 1");
  if (min_component_area_px < 0)
    throw Error(ErrorCode::CONFIG_ERROR, "min_component_area_px must be >= 0");
}

GrayImage to_grayscale(const RgbImage& img) {
  if (img.px.size() != static_cast<size_t>(3) * img.width * img.height)
    throw Error(ErrorCode::SHAPE_ERROR, "image is not 3-channel 8-bit");
  GrayImage g(img.width, img.height);
  for (size_t i = 0, n = g.px.size(); i < n; ++i) {
    const uint8_t* p = &img.px[3 * i];
    double y = 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2];
    long v = std::lround(y);
    g.px[i] = static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
  }
  return g;
}

Bitmap binarize(const GrayImage& gray, int threshold) {
  if (threshold <= 0 || threshold >= 255)
    throw Error(ErrorCode::CONFIG_ERROR, "threshold must be in (0,255)");
  Bitmap b(gray.width, gray.height);
  for (size_t i = 0; i < gray.px.size(); ++i)
    b.px[i] = gray.px[i] <= threshold ? 0 : 1;
  return b;
}

Bitmap erode(const Bitmap& bin, int kernel_h, int kernel_w) {
  if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0)
    throw Error(ErrorCode::CONFIG_ERROR, "kernel dims must be odd and >= 1");
  const int rh = kernel_h / 2, rw = kernel_w / 2;
  const int W = bin.width, H = bin.height;
  // Separable min filter: rows then columns. Out-of-range samples count as 1.
  Bitmap rows(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      uint8_t v = 1;
      for (int dx = -rw; dx <= rw && v; ++dx) {
        int xx = x + dx;
        if (xx >= 0 && xx < W && bin.at(xx, y) == 0) v = 0;
      }
      rows.at(x, y) = v;
    }
  Bitmap out(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      uint8_t v = 1;
      for (int dy = -rh; dy <= rh && v; ++dy) {
        int yy = y + dy;
        if (yy >= 0 && yy < H && rows.at(x, yy) == 0) v = 0;
      }
      out.at(x, y) = v;
    }
  return out;
}

Bitmap invert(const Bitmap& m_bar) {
  Bitmap m(m_bar.width, m_bar.height);
  for (size_t i = 0; i < m.px.size(); ++i) m.px[i] = m_bar.px[i] ? 0 : 1;
  return m;
}

Bitmap generate_layout_mask(const RgbImage& img, const MaskGenParams& params) {
  params.validate();
  return invert(erode(binarize(to_grayscale(img), params.threshold),
                      params.kernel_h, params.kernel_w));
}

ObjectMaskSet extract_object_masks(const Bitmap& m, int min_area) {
  const int W = m.width, H = m.height;
  std::vector<int> label(static_cast<size_t>(W) * H, -1);
  ObjectMaskSet set;
  std::deque<std::pair<int, int>> queue;
  int next = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m.at(x, y) || label[static_cast<size_t>(y) * W + x] >= 0) continue;
      // New component rooted at its topmost-leftmost pixel.
      int id = next++;
      Bitmap comp(W, H, 0);
      int area = 0;
      queue.clear();
      queue.emplace_back(x, y);
      label[static_cast<size_t>(y) * W + x] = id;
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        comp.at(cx, cy) = 1;
        ++area;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
            size_t idx = static_cast<size_t>(ny) * W + nx;
            if (m.px[idx] && label[idx] < 0) {
              label[idx] = id;
              queue.emplace_back(nx, ny);
            }
          }
      }
      if (area >= min_area) {
        set.masks.push_back(std::move(comp));
        set.areas.push_back(area);
      } else {
        set.filtered_area += area;
      }
    }
  }
  if (set.masks.empty())
    throw Error(ErrorCode::NO_COMPONENTS, "no component with area >= " +
                                              std::to_string(min_area));
  return set;
}

std::optional<Bitmap> downsample_mask(const Bitmap& mask, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1 || target_h > mask.height || target_w > mask.width)
    throw Error(ErrorCode::SHAPE_ERROR, "bad downsample target");
  if (mask.height % target_h != 0 || mask.width % target_w != 0)
    throw Error(ErrorCode::SHAPE_ERROR,
                "mask dims must be divisible by target dims (pad upstream)");
  const int sy = mask.height / target_h, sx = mask.width / target_w;
  Bitmap out(target_w, target_h, 0);
  bool any = false;
  for (int ty = 0; ty < target_h; ++ty)
    for (int tx = 0; tx < target_w; ++tx) {
      uint8_t v = 0;
      for (int y = ty * sy; y < (ty + 1) * sy && !v; ++y)
        for (int x = tx * sx; x < (tx + 1) * sx && !v; ++x)
          if (mask.at(x, y)) v = 1;
      out.at(tx, ty) = v;
      any = any || v;
    }
  if (!any) return std::nullopt;  // VANISHED
  return out;
}

}  // namespace selfdocseg::maskgen
