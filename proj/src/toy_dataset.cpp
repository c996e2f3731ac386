// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "s2b/analysis.hpp"
#include "s2b/data_io.hpp"

namespace s2b {

namespace {

constexpr double kBetaMin = 2.0;
constexpr double kBetaMax = 2.4;
constexpr double kSharedWeight = 0.8;
constexpr double kOwnWeight = 0.4;
constexpr double kContrastMin = 0.10;
constexpr double kContrastMax = 0.18;
constexpr double kArtifactMin = 0.01;
constexpr double kArtifactMax = 0.02;
constexpr double kArtifactChroma = 0.3;

cv::Mat white_noise(Rng& rng, int rows, int cols) {
  cv::Mat m(rows, cols, CV_64F);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m.at<double>(r, c) = dist(rng);
  }
  return m;
}

// White noise shaped to a 1/f^beta amplitude spectrum.
cv::Mat pink_field(Rng& rng, int size, double beta) {
  cv::Mat spec;
  cv::dft(white_noise(rng, size, size), spec, cv::DFT_COMPLEX_OUTPUT);
  for (int r = 0; r < size; ++r) {
    const double fy = (r <= (size - 1) / 2 ? r : r - size) / double(size);
    for (int c = 0; c < size; ++c) {
      const double fx = (c <= (size - 1) / 2 ? c : c - size) / double(size);
      double f = std::sqrt(fx * fx + fy * fy);
      if (f == 0.0) f = 1.0;
      spec.at<cv::Vec2d>(r, c) *= std::pow(f, -beta);
    }
  }
  cv::Mat out;
  cv::idft(spec, out, cv::DFT_SCALE | cv::DFT_REAL_OUTPUT);
  return out;
}

}  // namespace

Image make_toy_image(Rng& rng, int size, Label label) {
  if (size < 16 || size % 2 != 0) throw std::invalid_argument("toy image size must be even and >= 16");
  const double beta = uniform(rng, kBetaMin, kBetaMax);
  const cv::Mat base = pink_field(rng, size, beta);
  std::array<cv::Mat, 3> ch;
  for (auto& c : ch) c = kSharedWeight * base + kOwnWeight * pink_field(rng, size, beta);

  double sum = 0.0, sq = 0.0;
  for (const auto& c : ch) {
    sum += cv::sum(c)[0];
    sq += c.dot(c);
  }
  const double n = 3.0 * size * size;
  const double mean = sum / n;
  const double stddev = std::sqrt(std::max(sq / n - mean * mean, 1e-30));
  const double contrast = uniform(rng, kContrastMin, kContrastMax);
  const double level = uniform(rng, 0.4, 0.6);
  std::array<double, 3> offset{};
  for (double& o : offset) o = uniform(rng, -0.05, 0.05);

  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = static_cast<float>((ch[c].at<double>(y, x) - mean) / stddev * contrast + level + offset[c]);
      }
    }
  }

  if (label == Label::fake) {
    // Half-resolution detail, nearest-neighbour upsampled: 2x2 blocks with hard edges.
    const int half = size / 2;
    const cv::Mat shared = white_noise(rng, half, half);
    std::array<cv::Mat, 3> own;
    for (auto& o : own) o = white_noise(rng, half, half);
    double s2 = 0.0, s1 = 0.0;
    std::array<cv::Mat, 3> layer;
    for (int c = 0; c < 3; ++c) {
      layer[c] = shared + kArtifactChroma * own[c];
      s1 += cv::sum(layer[c])[0];
      s2 += layer[c].dot(layer[c]);
    }
    const double m = 3.0 * half * half;
    const double sd = std::sqrt(s2 / m - (s1 / m) * (s1 / m));
    const double amp = uniform(rng, kArtifactMin, kArtifactMax);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) {
          img.at(y, x, c) += static_cast<float>(amp * layer[c].at<double>(y / 2, x / 2) / sd);
        }
      }
    }
  }
  return quantize_8bit(img);
}

ToyDatasetInfo generate_toy_dataset(int n_per_class, std::uint64_t seed, const std::filesystem::path& out_dir,
                                    int image_size) {
  if (n_per_class < 10) throw std::invalid_argument("generate_toy_dataset: n_per_class must be >= 10");
  std::filesystem::create_directories(out_dir / "images");
  std::vector<ManifestEntry> entries;
  std::vector<Image> real, fake;
  int index = 0;
  for (const Label label : {Label::real, Label::fake}) {
    for (int i = 0; i < n_per_class; ++i, ++index) {
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(index));
      Image img = make_toy_image(rng, image_size, label);
      const std::string id = fmt::format("{}_{:05d}", to_string(label), i);
      const auto path = std::filesystem::absolute(out_dir / "images" / (id + ".png")).lexically_normal();
      save_image(img, path);
      entries.push_back({id, path, label, label == Label::real ? "toy-natural" : "toy-upsampler", std::nullopt,
                         std::nullopt, std::nullopt});
      (label == Label::real ? real : fake).push_back(std::move(img));
    }
  }
  ToyDatasetInfo info;
  info.manifest = out_dir / "manifest.jsonl";
  info.n_per_class = n_per_class;
  info.image_size = image_size;
  info.spectrum_gap = spectrum_gap(real, fake, 0.25, 0.5);
  write_manifest(entries, info.manifest);

  nlohmann::json j;
  j["n_per_class"] = n_per_class;
  j["image_size"] = image_size;
  j["seed"] = seed;
  j["spectrum_gap_band"] = {0.25, 0.5};
  j["spectrum_gap"] = info.spectrum_gap;
  j["manifest_sha256"] = manifest_hash(info.manifest);
  write_file_atomic(out_dir / "toy_info.json", j.dump(2) + "\n");
  if (info.spectrum_gap <= 0.3) {
    spdlog::warn("toy dataset spectrum gap {:.3f} is below the 0.3 construction target", info.spectrum_gap);
  } else {
    spdlog::info("toy dataset: {} per class, spectrum gap {:.3f}", n_per_class, info.spectrum_gap);
  }
  return info;
}

}  // namespace s2b
