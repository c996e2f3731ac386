// SPDX-License-Identifier: Apache-2.0
#include <stdexcept>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include "s2b/data_io.hpp"

namespace s2b {

void PreprocessConfig::validate() const {
  if (crop < 8 || resize < crop) {
    throw std::invalid_argument(fmt::format("preprocess needs 8 <= crop <= resize (crop {}, resize {})", crop, resize));
  }
}

CropWindow choose_crop(const PreprocessConfig& config, CropMode mode, Rng* rng) {
  config.validate();
  const int slack = config.resize - config.crop;
  if (mode == CropMode::eval_centercrop || slack == 0) return {slack / 2, slack / 2, config.crop};
  if (rng == nullptr) throw std::invalid_argument("random crop needs an rng");
  const int top = uniform_int(*rng, 0, slack);
  const int left = uniform_int(*rng, 0, slack);
  return {top, left, config.crop};
}

Image preprocess(const Image& image, const PreprocessConfig& config, CropMode mode, Rng* rng) {
  if (image.height() < 8 || image.width() < 8) {
    throw std::invalid_argument(fmt::format("image too small to preprocess: {}x{}", image.height(), image.width()));
  }
  const CropWindow w = choose_crop(config, mode, rng);
  Image resized = resize_bilinear(image, config.resize, config.resize);
  clamp_unit(resized);
  return crop(resized, w.top, w.left, w.size, w.size);
}

Mask preprocess_mask(const Mask& mask, const PreprocessConfig& config, const CropWindow& window) {
  if (mask.height < 1 || mask.width < 1) throw std::invalid_argument("empty mask");
  Mask out(window.size, window.size);
  for (int y = 0; y < window.size; ++y) {
    for (int x = 0; x < window.size; ++x) {
      const int sy = std::min(mask.height - 1, (window.top + y) * mask.height / config.resize);
      const int sx = std::min(mask.width - 1, (window.left + x) * mask.width / config.resize);
      out.at(y, x) = mask.at(sy, sx) > 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Mask load_mask(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("cannot read mask: " + path.string());
  Mask out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) out.at(y, x) = m.at<std::uint8_t>(y, x) >= 128 ? 1.0f : 0.0f;
  }
  return out;
}

Image normalize_channels(const Image& image) {
  Image out = image;
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const std::size_t c = i % Image::kChannels;
    px[i] = (px[i] - kChannelMean[c]) / kChannelStd[c];
  }
  return out;
}

Image denormalize_channels(const Image& image) {
  Image out = image;
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const std::size_t c = i % Image::kChannels;
    px[i] = px[i] * kChannelStd[c] + kChannelMean[c];
  }
  return out;
}

}  // namespace s2b
