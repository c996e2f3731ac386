// SPDX-License-Identifier: Apache-2.0
#pragma once

// Diagnostics: radial power spectra, attention stability under blur, patch-token similarity.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "s2b/blur.hpp"
#include "s2b/image.hpp"
#include "s2b/model.hpp"

namespace s2b {

inline constexpr double kSpectrumFloor = 1e-12;

struct RadialSpectrum {
  std::vector<double> bin_centers;  // cycles/pixel, strictly increasing in (0, 0.5)
  std::vector<double> energy;       // log10(mean power in annulus + 1e-12)
};

/// Luma, mean removed, 2D DFT; |F|^2 / (H W) averaged over n_bins equal-width annuli of
/// radial frequency in [0, 0.5] (corner frequencies beyond 0.5 are ignored).
RadialSpectrum radial_spectrum(const Image& image, int n_bins);

/// Mean energy over bins whose centers lie in [lo, hi].
double band_energy(const RadialSpectrum& spectrum, double lo, double hi);

/// Mean in-band energy of `fake` minus that of `real`.
double spectrum_gap(const std::vector<Image>& real, const std::vector<Image>& fake, double lo, double hi,
                    int n_bins = 32);

/// Mean spectrum over a set of images (element-wise mean of the log energies).
RadialSpectrum mean_spectrum(const std::vector<Image>& images, int n_bins);

struct SimilarityCurve {
  std::vector<int> kernel_sizes;
  std::vector<double> similarity;
};

/// Horizontal straight-line motion PSF covering `size` pixels (size 1 is the identity).
BlurKernel line_kernel(int size);

/// For each kernel size: mean over images of the cosine similarity between the attention
/// map of the clean image and that of its line-blurred (8-bit) version. Images are
/// pixel-domain and already at the encoder's input size.
SimilarityCurve attention_similarity(const Encoder& encoder, const std::vector<Image>& images,
                                     const std::vector<int>& kernel_sizes);

/// Cosine similarity between all pairs of patch tokens of a pixel-domain image.
Eigen::MatrixXd patch_similarity_matrix(const Encoder& encoder, const Image& image);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart rendered to PNG; convenience output next to the JSON data.
void plot_lines(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<PlotSeries>& series);

/// Heatmap rendered to PNG; values are clamped to [lo, hi] before colour mapping.
void plot_heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& matrix, double lo = -1.0,
                  double hi = 1.0);

}  // namespace s2b
