// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace s2b {

/// RGB image with interleaved float channels in [0, 1], row-major (H x W x 3).
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }
  std::size_t size() const { return pixels_.size(); }

  float& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Single-channel float map (grayscale, masks, attention grids).
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Plane() = default;
  Plane(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Round every pixel to the nearest 8-bit level; the form in which images are stored.
Image quantize_8bit(const Image& image);

/// Clamp every pixel into [0, 1].
void clamp_unit(Image& image);

/// Rec.601 luma.
Plane luma(const Image& image);

float max_abs_diff(const Image& a, const Image& b);
double mean_value(const Image& image);

/// Bilinear sample with symmetric (edge-duplicating) reflection outside the frame.
float sample_bilinear(const Image& image, double y, double x, int c);

/// Rotate about the image center by `degrees` (counter-clockwise), bilinear, reflective border.
Image rotate(const Image& image, double degrees);

/// Bilinear resize (OpenCV INTER_LINEAR semantics).
Image resize_bilinear(const Image& image, int height, int width);

Image crop(const Image& image, int top, int left, int height, int width);

Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit image; format follows the extension (png recommended).
void save_image(const Image& image, const std::filesystem::path& path);

/// Map a reflected coordinate into [0, n) using symmetric reflection ("abc|cba").
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace s2b
