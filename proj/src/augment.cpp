#include "selfdocseg/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace selfdocseg::augment {

namespace {

uint8_t round_u8(double v) {
  long r = std::lround(v);
  return static_cast<uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

double luma(double r, double g, double b) {
  return 0.2126 * r + 0.7152 * g + 0.0722 * b;
}

// Mirror reflection without duplicating the border pixel (-1 -> 1).
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

RgbImage apply_brightness(const RgbImage& img, double f) {
  RgbImage out(img.width, img.height);
  for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = round_u8(img.px[i] * f);
  return out;
}

RgbImage apply_contrast(const RgbImage& img, double f) {
  double mu = 0.0;
  size_t n = img.px.size() / 3;
  for (size_t i = 0; i < n; ++i)
    mu += luma(img.px[3 * i], img.px[3 * i + 1], img.px[3 * i + 2]);
  mu /= static_cast<double>(n);
  RgbImage out(img.width, img.height);
  for (size_t i = 0; i < img.px.size(); ++i)
    out.px[i] = round_u8(mu + (img.px[i] - mu) * f);
  return out;
}

RgbImage apply_saturation(const RgbImage& img, double f) {
  RgbImage out(img.width, img.height);
  size_t n = img.px.size() / 3;
  for (size_t i = 0; i < n; ++i) {
    double l = luma(img.px[3 * i], img.px[3 * i + 1], img.px[3 * i + 2]);
    for (int c = 0; c < 3; ++c)
      out.px[3 * i + c] = round_u8(l + (img.px[3 * i + c] - l) * f);
  }
  return out;
}

RgbImage apply_hue(const RgbImage& img, double shift) {
  RgbImage out(img.width, img.height);
  size_t n = img.px.size() / 3;
  for (size_t i = 0; i < n; ++i) {
    double r = img.px[3 * i] / 255.0;
    double g = img.px[3 * i + 1] / 255.0;
    double b = img.px[3 * i + 2] / 255.0;
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    double d = mx - mn;
    if (d == 0.0) {  // gray pixel, hue undefined
      for (int c = 0; c < 3; ++c) out.px[3 * i + c] = img.px[3 * i + c];
      continue;
    }
    double h;
    if (mx == r)
      h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
      h = (b - r) / d + 2.0;
    else
      h = (r - g) / d + 4.0;
    h /= 6.0;
    h = h - std::floor(h);
    h = h + shift;
    h = h - std::floor(h);
    double c = d, m = mn;
    double hp = h * 6.0;
    double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double rr = 0, gg = 0, bb = 0;
    if (hp < 1) {
      rr = c; gg = x;
    } else if (hp < 2) {
      rr = x; gg = c;
    } else if (hp < 3) {
      gg = c; bb = x;
    } else if (hp < 4) {
      gg = x; bb = c;
    } else if (hp < 5) {
      rr = x; bb = c;
    } else {
      rr = c; bb = x;
    }
    out.px[3 * i] = round_u8((rr + m) * 255.0);
    out.px[3 * i + 1] = round_u8((gg + m) * 255.0);
    out.px[3 * i + 2] = round_u8((bb + m) * 255.0);
  }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(blur_prob) || !prob_ok(jitter_prob) || !prob_ok(drop_prob) ||
      !prob_ok(solarize_prob))
    throw Error(ErrorCode::CONFIG_ERROR, "augment probabilities must be in [0,1]");
  if (blur_sigma_min <= 0.0 || blur_sigma_max < blur_sigma_min)
    throw Error(ErrorCode::CONFIG_ERROR, "bad blur sigma range");
  if (jitter_strengths.brightness < 0 || jitter_strengths.contrast < 0 ||
      jitter_strengths.saturation < 0 || jitter_strengths.hue < 0)
    throw Error(ErrorCode::CONFIG_ERROR, "jitter strengths must be >= 0");
  if (solarize_threshold < 0 || solarize_threshold > 255)
    throw Error(ErrorCode::CONFIG_ERROR, "solarize_threshold must be in [0,255]");
}

RgbImage gaussian_blur(const RgbImage& img, double sigma) {
  if (sigma <= 0.0) throw Error(ErrorCode::CONFIG_ERROR, "sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;

  const int W = img.width, H = img.height;
  std::vector<double> tmp(img.px.size()), acc(img.px.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += k[i + r] * img.px[3 * (static_cast<size_t>(y) * W + reflect_index(x + i, W)) + c];
        tmp[3 * (static_cast<size_t>(y) * W + x) + c] = s;
      }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += k[i + r] * tmp[3 * (static_cast<size_t>(reflect_index(y + i, H)) * W + x) + c];
        acc[3 * (static_cast<size_t>(y) * W + x) + c] = s;
      }
  RgbImage out(W, H);
  for (size_t i = 0; i < acc.size(); ++i) out.px[i] = round_u8(acc[i]);
  return out;
}

RgbImage color_jitter(const RgbImage& img, const JitterStrengths& s, Rng& rng) {
  double fb = rng.uniform(1.0 - s.brightness, 1.0 + s.brightness);
  double fc = rng.uniform(1.0 - s.contrast, 1.0 + s.contrast);
  double fs = rng.uniform(1.0 - s.saturation, 1.0 + s.saturation);
  double fh = rng.uniform(-s.hue, s.hue);
  std::array<int, 4> order = {0, 1, 2, 3};
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

  RgbImage out = img;
  for (int op : order) {
    switch (op) {
      case 0: if (fb != 1.0) out = apply_brightness(out, fb); break;
      case 1: if (fc != 1.0) out = apply_contrast(out, fc); break;
      case 2: if (fs != 1.0) out = apply_saturation(out, fs); break;
      case 3: if (fh != 0.0) out = apply_hue(out, fh); break;
    }
  }
  return out;
}

RgbImage color_drop(const RgbImage& img) {
  RgbImage out(img.width, img.height);
  size_t n = img.px.size() / 3;
  for (size_t i = 0; i < n; ++i) {
    uint8_t l = round_u8(luma(img.px[3 * i], img.px[3 * i + 1], img.px[3 * i + 2]));
    out.px[3 * i] = out.px[3 * i + 1] = out.px[3 * i + 2] = l;
  }
  return out;
}

RgbImage solarize(const RgbImage& img, int threshold) {
  if (threshold < 0 || threshold > 255)
    throw Error(ErrorCode::CONFIG_ERROR, "solarize threshold must be in [0,255]");
  RgbImage out(img.width, img.height);
  for (size_t i = 0; i < img.px.size(); ++i)
    out.px[i] = img.px[i] >= threshold ? static_cast<uint8_t>(255 - img.px[i])
                                       : img.px[i];
  return out;
}

namespace {

RgbImage make_view(const RgbImage& img, const AugmentConfig& cfg, Rng& rng,
                   bool allow_solarize) {
  RgbImage v = img;
  if (rng.bernoulli(cfg.jitter_prob)) v = color_jitter(v, cfg.jitter_strengths, rng);
  if (rng.bernoulli(cfg.drop_prob)) v = color_drop(v);
  if (rng.bernoulli(cfg.blur_prob)) {
    double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    v = gaussian_blur(v, sigma);
  }
  if (allow_solarize && rng.bernoulli(cfg.solarize_prob))
    v = solarize(v, cfg.solarize_threshold);
  return v;
}

}  // namespace

std::pair<RgbImage, RgbImage> make_view_pair(const RgbImage& img,
                                             const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  RgbImage v1 = make_view(img, cfg, rng, /*allow_solarize=*/false);
  RgbImage v2 = make_view(img, cfg, rng, /*allow_solarize=*/true);
  return {std::move(v1), std::move(v2)};
}

}  // namespace selfdocseg::augment
