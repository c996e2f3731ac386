// SPDX-License-Identifier: Apache-2.0
#include "s2b/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>

#include "s2b/data_io.hpp"

namespace s2b {

namespace {

double fft_frequency(int k, int n) { return (k <= (n - 1) / 2 ? k : k - n) / double(n); }

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::domain_error("cosine similarity of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace

RadialSpectrum radial_spectrum(const Image& image, int n_bins) {
  if (n_bins < 4) throw std::invalid_argument("radial_spectrum: n_bins must be >= 4");
  const int h = image.height();
  const int w = image.width();
  if (h < 8 || w < 8) throw std::invalid_argument("radial_spectrum: image must be at least 8x8");

  const Plane y = luma(image);
  cv::Mat g(h, w, CV_64F);
  double mean = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      g.at<double>(r, c) = y.at(r, c);
      mean += y.at(r, c);
    }
  }
  g -= mean / (double(h) * w);
  cv::Mat spec;
  cv::dft(g, spec, cv::DFT_COMPLEX_OUTPUT);

  std::vector<double> sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<long> count(static_cast<std::size_t>(n_bins), 0);
  const double norm = double(h) * w;
  for (int r = 0; r < h; ++r) {
    const double fy = fft_frequency(r, h);
    for (int c = 0; c < w; ++c) {
      const double fx = fft_frequency(c, w);
      const double rad = std::sqrt(fx * fx + fy * fy);
      if (rad > 0.5) continue;
      const int bin = std::min(n_bins - 1, static_cast<int>(std::floor(rad / 0.5 * n_bins)));
      const cv::Vec2d v = spec.at<cv::Vec2d>(r, c);
      sum[bin] += (v[0] * v[0] + v[1] * v[1]) / norm;
      ++count[bin];
    }
  }
  RadialSpectrum out;
  for (int b = 0; b < n_bins; ++b) {
    out.bin_centers.push_back((b + 0.5) * 0.5 / n_bins);
    const double power = count[b] > 0 ? sum[b] / double(count[b]) : 0.0;
    out.energy.push_back(std::log10(power + kSpectrumFloor));
  }
  return out;
}

double band_energy(const RadialSpectrum& spectrum, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi && hi <= 0.5)) throw std::invalid_argument("band must satisfy 0 <= lo < hi <= 0.5");
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < spectrum.bin_centers.size(); ++i) {
    if (spectrum.bin_centers[i] >= lo && spectrum.bin_centers[i] <= hi) {
      sum += spectrum.energy[i];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("band contains no spectrum bins");
  return sum / n;
}

double spectrum_gap(const std::vector<Image>& real, const std::vector<Image>& fake, double lo, double hi,
                    int n_bins) {
  if (real.empty() || fake.empty()) throw std::invalid_argument("spectrum_gap: image sets must be non-empty");
  auto mean_band = [&](const std::vector<Image>& set) {
    double s = 0.0;
    for (const Image& im : set) s += band_energy(radial_spectrum(im, n_bins), lo, hi);
    return s / double(set.size());
  };
  return mean_band(fake) - mean_band(real);
}

RadialSpectrum mean_spectrum(const std::vector<Image>& images, int n_bins) {
  if (images.empty()) throw std::invalid_argument("mean_spectrum: no images");
  RadialSpectrum acc = radial_spectrum(images.front(), n_bins);
  for (std::size_t i = 1; i < images.size(); ++i) {
    const RadialSpectrum s = radial_spectrum(images[i], n_bins);
    for (int b = 0; b < n_bins; ++b) acc.energy[b] += s.energy[b];
  }
  for (double& e : acc.energy) e /= double(images.size());
  return acc;
}

BlurKernel line_kernel(int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("line_kernel: size must be odd and >= 1");
  if (size == 1) return identity_kernel();
  return rasterize_psf(straight_trajectory(size - 1, 0.0), size, family_max_param(KernelFamily::motion_psf));
}

SimilarityCurve attention_similarity(const Encoder& encoder, const std::vector<Image>& images,
                                     const std::vector<int>& kernel_sizes) {
  if (!encoder.has_attention()) throw std::invalid_argument("attention_similarity: encoder exposes no attention");
  if (images.empty() || kernel_sizes.empty()) throw std::invalid_argument("attention_similarity: empty inputs");
  SimilarityCurve curve;
  curve.kernel_sizes = kernel_sizes;
  curve.similarity.assign(kernel_sizes.size(), 0.0);
  for (const Image& im : images) {
    const Eigen::VectorXd clean = encoder.encode(normalize_channels(im)).attention;
    for (std::size_t s = 0; s < kernel_sizes.size(); ++s) {
      const BlurKernel k = line_kernel(kernel_sizes[s]);
      const Image blurred = k.is_identity() ? im : quantize_8bit(convolve(im, k));
      curve.similarity[s] += cosine(clean, encoder.encode(normalize_channels(blurred)).attention);
    }
  }
  for (double& v : curve.similarity) v /= double(images.size());
  return curve;
}

Eigen::MatrixXd patch_similarity_matrix(const Encoder& encoder, const Image& image) {
  const Eigen::MatrixXd tokens = encoder.encode(normalize_channels(image)).patch_tokens;
  Eigen::MatrixXd unit(tokens.rows(), tokens.cols());
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) unit.row(r) = normalize(tokens.row(r).transpose()).transpose();
  Eigen::MatrixXd sim = unit * unit.transpose();
  sim = sim.cwiseMax(-1.0).cwiseMin(1.0);
  return sim;
}

}  // namespace s2b
