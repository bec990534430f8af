#pragma once

#include <utility>

#include "selfdocseg/rng.hpp"
#include "selfdocseg/types.hpp"

namespace selfdocseg::augment {

struct JitterStrengths {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.2;
  double hue = 0.1;  // fraction of the full hue circle
};

// Photometric-only view generation; no crop, no flip, so one layout mask
// stays valid for both views.
struct AugmentConfig {
  double blur_prob = 0.5;
  double jitter_prob = 0.8;
  double drop_prob = 0.2;
  double solarize_prob = 0.2;  // applied to the second view only
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  JitterStrengths jitter_strengths;
  int solarize_threshold = 128;

  void validate() const;  // throws CONFIG_ERROR
};

// Normalized Gaussian kernel of radius ceil(3*sigma), mirror-reflected
// borders, separable passes in double, rounded once at the end.
RgbImage gaussian_blur(const RgbImage& img, double sigma);

// Brightness/contrast/saturation factors from [1-s, 1+s], hue shift from
// [-s_h, s_h], sub-ops applied in a randomized order.
RgbImage color_jitter(const RgbImage& img, const JitterStrengths& strengths, Rng& rng);

// Luma replicated to all three channels.
RgbImage color_drop(const RgbImage& img);

// p -> 255-p where p >= threshold, per channel.
RgbImage solarize(const RgbImage& img, int threshold);

std::pair<RgbImage, RgbImage> make_view_pair(const RgbImage& img,
                                             const AugmentConfig& cfg, Rng& rng);

}  // namespace selfdocseg::augment
