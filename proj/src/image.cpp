// SPDX-License-Identifier: Apache-2.0
#include "s2b/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "s2b/rng.hpp"

namespace s2b {

Image::Image(int height, int width, float fill)
    : height_(height), width_(width),
      pixels_(static_cast<std::size_t>(height) * width * kChannels, fill) {
  if (height < 0 || width < 0) throw std::invalid_argument("Image: negative dimensions");
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (float& v : out.pixels()) {
    v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  }
  return out;
}

void clamp_unit(Image& image) {
  for (float& v : image.pixels()) v = std::clamp(v, 0.0f, 1.0f);
}

Plane luma(const Image& image) {
  Plane out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.at(y, x) = 0.299f * image.at(y, x, 0) + 0.587f * image.at(y, x, 1) +
                     0.114f * image.at(y, x, 2);
    }
  }
  return out;
}

float max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  float m = 0.0f;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
  return m;
}

double mean_value(const Image& image) {
  double s = 0.0;
  for (float v : image.pixels()) s += v;
  return image.empty() ? 0.0 : s / static_cast<double>(image.size());
}

float sample_bilinear(const Image& image, double y, double x, int c) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  const int h = image.height();
  const int w = image.width();
  const int ya = reflect_index(y0, h), yb = reflect_index(y0 + 1, h);
  const int xa = reflect_index(x0, w), xb = reflect_index(x0 + 1, w);
  const double top = (1.0 - fx) * image.at(ya, xa, c) + fx * image.at(ya, xb, c);
  const double bottom = (1.0 - fx) * image.at(yb, xa, c) + fx * image.at(yb, xb, c);
  return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

Image rotate(const Image& image, double degrees) {
  if (degrees == 0.0) return image;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double cy = (image.height() - 1) / 2.0;
  const double cx = (image.width() - 1) / 2.0;
  Image out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      // Inverse map: destination pixel pulls from the source rotated by -theta.
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = sample_bilinear(image, sy, sx, c);
    }
  }
  return out;
}

namespace {

cv::Mat to_mat_f32(const Image& image) {
  cv::Mat m(image.height(), image.width(), CV_32FC3);
  std::copy(image.pixels().begin(), image.pixels().end(), m.ptr<float>());
  return m;
}

Image from_mat_f32(const cv::Mat& m) {
  cv::Mat src = m.isContinuous() ? m : m.clone();
  Image out(src.rows, src.cols);
  const float* p = src.ptr<float>();
  std::copy(p, p + out.size(), out.pixels().begin());
  return out;
}

}  // namespace

Image resize_bilinear(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("resize_bilinear: empty target");
  if (height == image.height() && width == image.width()) return image;
  cv::Mat dst;
  cv::resize(to_mat_f32(image), dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_mat_f32(dst);
}

Image crop(const Image& image, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > image.height() || left + width > image.width()) {
    throw std::invalid_argument("crop: window outside image");
  }
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    const float* src = &image.pixels()[(static_cast<std::size_t>(top + y) * image.width() + left) *
                                       Image::kChannels];
    std::copy(src, src + static_cast<std::size_t>(width) * Image::kChannels,
              &out.pixels()[static_cast<std::size_t>(y) * width * Image::kChannels]);
  }
  return out;
}

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  // Same formula as quantize_8bit so a stored image reloads bit-identically.
  Image out(rgb.rows, rgb.cols);
  const auto* src = rgb.ptr<std::uint8_t>();
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  cv::Mat u8(image.height(), image.width(), CV_8UC3);
  auto px = image.pixels();
  auto* dst = u8.ptr<std::uint8_t>();
  for (std::size_t i = 0; i < px.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(px[i], 0.0f, 1.0f) * 255.0f));
  }
  cv::Mat bgr;
  cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image: " + path.string());
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  std::istringstream is(state);
  Rng rng;
  is >> rng;
  if (is.fail()) throw std::runtime_error("corrupt rng state");
  return rng;
}

}  // namespace s2b
