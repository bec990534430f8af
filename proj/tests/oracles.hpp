// Brute-force reference implementations used as test oracles. Everything here
// is written as directly as possible, independent of the library's code paths.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "selfdocseg/docgen.hpp"
#include "selfdocseg/evalkit.hpp"
#include "selfdocseg/types.hpp"

namespace oracles {

using selfdocseg::Bitmap;
using Eigen::MatrixXd;

// Eq.-2 style mask pooling as a plain per-cell loop.
inline std::vector<std::vector<double>> brute_mask_pool(
    const std::vector<std::vector<std::vector<double>>>& f,  // [c][y][x]
    const std::vector<Bitmap>& masks) {
  size_t c = f.size();
  std::vector<std::vector<double>> out;
  for (const Bitmap& m : masks) {
    std::vector<double> v(c, 0.0);
    double area = 0.0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (m.at(x, y)) {
          area += 1.0;
          for (size_t ch = 0; ch < c; ++ch) v[ch] += f[ch][y][x];
        }
    for (size_t ch = 0; ch < c; ++ch) v[ch] /= area;
    out.push_back(v);
  }
  return out;
}

// Direct 2-D min filter with out-of-range treated as 1.
inline Bitmap brute_min_filter(const Bitmap& in, int kh, int kw) {
  Bitmap out(in.width, in.height, 1);
  int rh = kh / 2, rw = kw / 2;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      int mn = 1;
      for (int dy = -rh; dy <= rh; ++dy)
        for (int dx = -rw; dx <= rw; ++dx) {
          int yy = y + dy, xx = x + dx;
          int v = (yy >= 0 && yy < in.height && xx >= 0 && xx < in.width)
                      ? in.at(xx, yy)
                      : 1;
          mn = std::min(mn, v);
        }
      out.at(x, y) = static_cast<uint8_t>(mn);
    }
  return out;
}

// Direct dense 2-D Gaussian convolution with mirror reflection (no edge
// duplication), double accumulation, rounded at the end.
inline selfdocseg::RgbImage brute_gaussian_blur(const selfdocseg::RgbImage& img,
                                                double sigma) {
  int r = static_cast<int>(std::ceil(3.0 * sigma));
  int n = 2 * r + 1;
  std::vector<double> k(static_cast<size_t>(n) * n);
  double sum = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      double w = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
      k[static_cast<size_t>(dy + r) * n + (dx + r)] = w;
      sum += w;
    }
  for (double& w : k) w /= sum;
  auto reflect = [](int i, int size) {
    if (size == 1) return 0;
    int period = 2 * (size - 1);
    i = ((i % period) + period) % period;
    return i < size ? i : period - i;
  };
  selfdocseg::RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            int yy = reflect(y + dy, img.height);
            int xx = reflect(x + dx, img.width);
            acc += k[static_cast<size_t>(dy + r) * n + (dx + r)] *
                   img.px[3 * (static_cast<size_t>(yy) * img.width + xx) + c];
          }
        long v = std::lround(acc);
        out.px[3 * (static_cast<size_t>(y) * img.width + x) + c] =
            static_cast<uint8_t>(std::clamp(v, 0l, 255l));
      }
  return out;
}

// Connected components by recursive-style flood fill (stack), 8-connectivity.
inline std::vector<Bitmap> brute_components(const Bitmap& m) {
  std::vector<Bitmap> comps;
  Bitmap seen(m.width, m.height, 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y) || seen.at(x, y)) continue;
      Bitmap comp(m.width, m.height, 0);
      std::vector<std::pair<int, int>> stack{{x, y}};
      seen.at(x, y) = 1;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        comp.at(cx, cy) = 1;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
            if (m.at(nx, ny) && !seen.at(nx, ny)) {
              seen.at(nx, ny) = 1;
              stack.emplace_back(nx, ny);
            }
          }
      }
      comps.push_back(std::move(comp));
    }
  return comps;
}

inline double brute_iou(const Bitmap& a, const Bitmap& b) {
  double inter = 0, uni = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    inter += (a.px[i] && b.px[i]) ? 1 : 0;
    uni += (a.px[i] || b.px[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : inter / uni;
}

// AP by explicit enumeration of the ranked PR curve. Matching mirrors the
// stated convention (score order, best unmatched IoU >= threshold, lower GT
// index on exact ties) but the curve integral is evaluated pointwise: at each
// rank, precision is interpolated as the max precision at any rank with
// recall >= this one.
inline double brute_ap(const std::vector<selfdocseg::evalkit::Detection>& dets,
                       const selfdocseg::docgen::GroundTruth& gts,
                       double iou_thresh) {
  std::vector<int> classes;
  for (const auto& d : dets) classes.push_back(d.label);
  for (const auto& g : gts.objects) classes.push_back(g.label);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) return 1.0;

  double total = 0.0;
  for (int cls : classes) {
    std::vector<size_t> gt_ids, det_ids;
    for (size_t i = 0; i < gts.objects.size(); ++i)
      if (gts.objects[i].label == cls) gt_ids.push_back(i);
    for (size_t i = 0; i < dets.size(); ++i)
      if (dets[i].label == cls) det_ids.push_back(i);
    std::stable_sort(det_ids.begin(), det_ids.end(),
                     [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
    if (gt_ids.empty()) {
      total += det_ids.empty() ? 1.0 : 0.0;
      continue;
    }
    std::vector<bool> used(gt_ids.size(), false);
    std::vector<int> is_tp;
    for (size_t di : det_ids) {
      int best = -1;
      double best_v = -1.0;
      for (size_t g = 0; g < gt_ids.size(); ++g) {
        if (used[g]) continue;
        double v = brute_iou(dets[di].mask, gts.objects[gt_ids[g]].mask);
        if (v >= iou_thresh && v > best_v) {
          best_v = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[static_cast<size_t>(best)] = true;
        is_tp.push_back(1);
      } else {
        is_tp.push_back(0);
      }
    }
    // pointwise PR enumeration
    size_t nd = is_tp.size();
    std::vector<double> prec(nd), rec(nd);
    for (size_t i = 0; i < nd; ++i) {
      int tp = 0;
      for (size_t j = 0; j <= i; ++j) tp += is_tp[j];
      prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
      rec[i] = static_cast<double>(tp) / static_cast<double>(gt_ids.size());
    }
    double ap = 0.0;
    double prev_r = 0.0;
    for (size_t i = 0; i < nd; ++i) {
      double p_interp = 0.0;
      for (size_t j = 0; j < nd; ++j)
        if (rec[j] >= rec[i]) p_interp = std::max(p_interp, prec[j]);
      ap += (rec[i] - prev_r) * p_interp;
      prev_r = rec[i];
    }
    total += ap;
  }
  return total / static_cast<double>(classes.size());
}

// Central finite difference of a scalar function w.r.t. one coordinate.
template <typename F>
double central_diff(F&& f, double* coord, double h = 1e-5) {
  double orig = *coord;
  *coord = orig + h;
  double hi = f();
  *coord = orig - h;
  double lo = f();
  *coord = orig;
  return (hi - lo) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

// Dual-tolerance gradient comparison: the absolute floor absorbs the
// cancellation noise of central differences around exact-zero gradients
// (e.g. biases ahead of a standardization layer).
inline bool grad_close(double analytic, double fd, double rtol = 1e-4,
                       double atol = 1e-7) {
  return std::fabs(analytic - fd) <=
         atol + rtol * std::max(std::fabs(analytic), std::fabs(fd));
}

}  // namespace oracles
