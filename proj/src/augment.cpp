// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "s2b/training.hpp"

namespace s2b {

namespace {

struct Hsv {
  double h, s, v;
};

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = (b - r) / d + 2.0;
    } else {
      h = (r - g) / d + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

void hsv_to_rgb(const Hsv& c, double& r, double& g, double& b) {
  const double h6 = c.h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = c.v * (1.0 - c.s);
  const double q = c.v * (1.0 - c.s * f);
  const double t = c.v * (1.0 - c.s * (1.0 - f));
  switch (sector) {
    case 0: r = c.v, g = t, b = p; break;
    case 1: r = q, g = c.v, b = p; break;
    case 2: r = p, g = c.v, b = t; break;
    case 3: r = p, g = q, b = c.v; break;
    case 4: r = t, g = p, b = c.v; break;
    default: r = c.v, g = p, b = q; break;
  }
}

double draw_factor(Rng& rng, double range) { return range > 0.0 ? uniform(rng, 1.0 - range, 1.0 + range) : 1.0; }

float luma_of(const Image& im, int y, int x) {
  return 0.299f * im.at(y, x, 0) + 0.587f * im.at(y, x, 1) + 0.114f * im.at(y, x, 2);
}

Image color_jitter(Image img, const AugmentPolicy& p, Rng& rng) {
  const double fb = draw_factor(rng, p.brightness);
  const double fc = draw_factor(rng, p.contrast);
  const double fs = draw_factor(rng, p.saturation);
  const double shift = p.hue > 0.0 ? uniform(rng, -p.hue, p.hue) : 0.0;
  if (fb != 1.0) {
    for (float& v : img.pixels()) v = std::clamp(static_cast<float>(v * fb), 0.0f, 1.0f);
  }
  if (fc != 1.0) {
    double m = 0.0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) m += luma_of(img, y, x);
    }
    m /= double(img.height()) * img.width();
    for (float& v : img.pixels()) v = std::clamp(static_cast<float>((v - m) * fc + m), 0.0f, 1.0f);
  }
  if (fs != 1.0) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const float g = luma_of(img, y, x);
        for (int c = 0; c < 3; ++c) {
          img.at(y, x, c) = std::clamp(static_cast<float>((img.at(y, x, c) - g) * fs + g), 0.0f, 1.0f);
        }
      }
    }
  }
  if (shift != 0.0) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        Hsv c = rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
        c.h = std::fmod(c.h + shift + 1.0, 1.0);
        double r, g, b;
        hsv_to_rgb(c, r, g, b);
        img.at(y, x, 0) = static_cast<float>(std::clamp(r, 0.0, 1.0));
        img.at(y, x, 1) = static_cast<float>(std::clamp(g, 0.0, 1.0));
        img.at(y, x, 2) = static_cast<float>(std::clamp(b, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

std::string_view to_string(AugmentBlur mode) {
  switch (mode) {
    case AugmentBlur::none: return "none";
    case AugmentBlur::global: return "global";
    case AugmentBlur::ccmba: return "ccmba";
    case AugmentBlur::mixed: return "mixed";
  }
  return "none";
}

AugmentBlur augment_blur_from_string(std::string_view name) {
  if (name == "none") return AugmentBlur::none;
  if (name == "global") return AugmentBlur::global;
  if (name == "ccmba") return AugmentBlur::ccmba;
  if (name == "mixed") return AugmentBlur::mixed;
  throw std::invalid_argument("unknown blur_mode: " + std::string(name));
}

void AugmentPolicy::validate() const {
  for (double r : {brightness, contrast, saturation}) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("colour jitter ranges must lie in [0, 1)");
  }
  if (!(hue >= 0.0 && hue <= 0.5)) throw std::invalid_argument("hue jitter must lie in [0, 0.5]");
  if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) throw std::invalid_argument("rotation_deg must lie in [0, 180]");
  if (!(p_jpeg >= 0.0 && p_jpeg <= 1.0)) throw std::invalid_argument("p_jpeg must lie in [0, 1]");
  if (jpeg_quality_min < 1 || jpeg_quality_max > 100 || jpeg_quality_min > jpeg_quality_max) {
    throw std::invalid_argument("augmentation JPEG quality range invalid");
  }
  if (!(p_blur >= 0.0 && p_blur <= 1.0)) throw std::invalid_argument("p_blur must lie in [0, 1]");
  if (blur_mode != AugmentBlur::none) blur.validate();
}

AugmentedViews augment(const Image& image, const AugmentPolicy& policy, Phase phase, Rng& rng, const Mask* mask) {
  policy.validate();
  if (phase == Phase::teacher && policy.blur_mode != AugmentBlur::none) {
    throw std::invalid_argument("teacher augmentation must not blur (blur_mode must be none)");
  }
  if (phase == Phase::student && policy.blur_mode == AugmentBlur::none) {
    throw std::invalid_argument("student augmentation needs a blur_mode other than none");
  }
  Image x = color_jitter(image, policy, rng);
  if (policy.rotation_deg > 0.0) x = rotate(x, uniform(rng, -policy.rotation_deg, policy.rotation_deg));
  if (bernoulli(rng, policy.p_jpeg)) {
    x = jpeg_degrade(x, uniform_int(rng, policy.jpeg_quality_min, policy.jpeg_quality_max));
  }
  AugmentedViews out;
  out.sharp = quantize_8bit(x);
  if (phase == Phase::student && bernoulli(rng, policy.p_blur)) {
    BlurPolicy bp = policy.blur;
    bp.mode = policy.blur_mode == AugmentBlur::ccmba   ? BlurMode::ccmba
              : policy.blur_mode == AugmentBlur::mixed ? BlurMode::mixed
                                                       : BlurMode::global;
    PairedSample pair = synthesize_pair(out.sharp, Label::real, bp, rng, mask);
    out.blurred = quantize_8bit(pair.blurred);
    out.severity = pair.degradation.severity();
    out.degradation = std::move(pair.degradation);
  } else {
    out.blurred = out.sharp;
  }
  return out;
}

}  // namespace s2b
