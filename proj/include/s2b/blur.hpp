// SPDX-License-Identifier: Apache-2.0
#pragma once

// Motion-blur synthesis: camera-shake trajectories, PSF rasterization, parametric
// evaluation kernels, co-degradations and paired sharp/blurred sample synthesis.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2b/image.hpp"
#include "s2b/rng.hpp"

namespace s2b {

/// Binary region map (1 = blur). Same spatial size as the image it applies to.
using Mask = Plane;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Polyline camera path in pixel units. Invariants: length >= 0, the polyline's arc
/// length equals `length`, direction in [0, pi), a zero-length path has one point.
struct Trajectory {
  std::vector<Point2> points;
  double length = 0.0;
  double direction = 0.0;

  double arc_length() const;
};

enum class KernelFamily { motion_psf, defocus, gaussian, box, radial, bokeh, identity };

std::string_view to_string(KernelFamily family);
KernelFamily kernel_family_from_string(std::string_view name);

/// Largest admissible parameter per family; severity is param / max.
double family_max_param(KernelFamily family);

/// Square, odd-sized, non-negative, unit-mass convolution kernel.
struct BlurKernel {
  int size = 1;
  std::vector<double> weights{1.0};
  KernelFamily family = KernelFamily::identity;
  double severity = 0.0;

  double at(int row, int col) const { return weights[static_cast<std::size_t>(row) * size + col]; }
  double sum() const;
  bool is_identity() const;
};

BlurKernel identity_kernel();

/// Random walk of unit steps whose heading starts at U(0, pi) and receives Gaussian jitter
/// per step. Length ~ U(0, max_length).
Trajectory sample_trajectory(Rng& rng, double max_length, double jitter_std);

/// Same walk with a prescribed length (evaluation and analysis use fixed severities).
Trajectory trajectory_with_length(Rng& rng, double length, double jitter_std);

Trajectory straight_trajectory(double length, double direction);

/// Splat the path into a kernel_size window centered on the path's mass centroid.
/// Mass falling outside the window is dropped and the remainder renormalized.
BlurKernel rasterize_psf(const Trajectory& trajectory, int kernel_size, double max_length);

/// Smallest odd window that holds a path of the given length with a one-pixel margin.
int psf_window_for_length(double length);

/// gaussian/defocus: param = sigma; box: param = odd width; bokeh: param = radius.
/// Defocus is a uniform disc of radius 2*sigma.
BlurKernel parametric_kernel(KernelFamily family, double param, int kernel_size);

/// Smallest odd window that holds the parametric kernel without truncating meaningful mass.
int default_window(KernelFamily family, double param);

/// Per-channel 2D convolution, symmetric reflective borders, output clamped to [0, 1].
Image convolve(const Image& image, const BlurKernel& kernel);

/// Mean of 8 copies rotated about the center at angles evenly spaced in [-strength, strength] degrees.
Image radial_blur(const Image& image, double strength_deg);

/// Round trip through a baseline JPEG encoder at `quality` in [1, 100].
Image jpeg_degrade(const Image& image, int quality);

Image add_sensor_noise(const Image& image, double sigma, Rng& rng);

/// Bilinear down to floor(scale*H) x floor(scale*W), then bilinear back up.
Image down_up_sample(const Image& image, double scale);

enum class BlurMode { global, ccmba, mixed };

std::string_view to_string(BlurMode mode);
BlurMode blur_mode_from_string(std::string_view name);

struct BlurPolicy {
  double max_length = 15.0;
  double jitter_std = 0.05;
  double p_defocus = 0.3;
  double sigma_defocus_max = 2.5;
  double p_jpeg = 0.2;
  int jpeg_quality_min = 70;
  int jpeg_quality_max = 95;
  double p_noise = 0.2;
  double noise_sigma_min = 0.002;
  double noise_sigma_max = 0.01;
  double p_resample = 0.2;
  double scale_min = 0.5;
  double scale_max = 0.9;
  BlurMode mode = BlurMode::global;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct DegradationRecord {
  BlurKernel kernel = identity_kernel();
  double trajectory_length = 0.0;
  double trajectory_direction = 0.0;
  std::optional<double> defocus_sigma;
  std::optional<int> jpeg_quality;
  std::optional<double> noise_sigma;
  std::optional<double> resample_scale;
  BlurMode mode = BlurMode::global;

  /// Blur severity b in [0, 1] used by the ordinal contrastive objective.
  double severity() const { return kernel.severity; }
};

enum class Label { real = 0, fake = 1 };

std::string_view to_string(Label label);
Label label_from_string(std::string_view name);

struct PairedSample {
  Image sharp;
  Image blurred;
  Label label = Label::real;
  DegradationRecord degradation;
};

/// motion PSF (global, masked or coin-flip per policy.mode; `mask` defaults to a random
/// ellipse) -> defocus (p_defocus) -> down-up resample -> noise -> JPEG, each optional
/// stage drawn independently with its policy probability.
PairedSample synthesize_pair(const Image& image, Label label, const BlurPolicy& policy, Rng& rng,
                             const Mask* mask = nullptr);

inline constexpr int kFeatherWidth = 3;

/// Blurred pixels inside the mask, original pixels outside, blended linearly across the
/// innermost kFeatherWidth pixels of the masked region.
Image apply_ccmba(const Image& image, const Mask& mask, const BlurKernel& kernel);

/// Rotated random ellipse covering 20-60% of the frame.
Mask random_ellipse_mask(int height, int width, Rng& rng);

}  // namespace s2b
