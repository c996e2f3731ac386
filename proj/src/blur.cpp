// SPDX-License-Identifier: Apache-2.0
#include "s2b/blur.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace s2b {

namespace {

constexpr double kPi = std::numbers::pi;

void require_odd_size(int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("kernel size must be odd and >= 1, got " + std::to_string(kernel_size));
  }
}

void normalize_mass(BlurKernel& k) {
  const double s = k.sum();
  if (s <= 0.0) {
    std::fill(k.weights.begin(), k.weights.end(), 0.0);
    k.weights[k.weights.size() / 2] = 1.0;
    return;
  }
  for (double& w : k.weights) w /= s;
}

BlurKernel blank_kernel(int size, KernelFamily family, double severity) {
  BlurKernel k;
  k.size = size;
  k.weights.assign(static_cast<std::size_t>(size) * size, 0.0);
  k.family = family;
  k.severity = severity;
  return k;
}

BlurKernel disc_kernel(double radius, int kernel_size, KernelFamily family, double severity) {
  BlurKernel k = blank_kernel(kernel_size, family, severity);
  const int half = kernel_size / 2;
  for (int r = 0; r < kernel_size; ++r) {
    for (int c = 0; c < kernel_size; ++c) {
      const double dy = r - half;
      const double dx = c - half;
      if (dx * dx + dy * dy <= radius * radius) k.weights[static_cast<std::size_t>(r) * kernel_size + c] = 1.0;
    }
  }
  normalize_mass(k);
  return k;
}

cv::Mat to_u8_bgr(const Image& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3);
  auto px = image.pixels();
  auto* dst = rgb.ptr<std::uint8_t>();
  for (std::size_t i = 0; i < px.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(px[i], 0.0f, 1.0f) * 255.0f));
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_u8_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out(rgb.rows, rgb.cols);
  const auto* src = rgb.ptr<std::uint8_t>();
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

void require_pixel_domain(const Image& image) {
  for (float v : image.pixels()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::logic_error("blur synthesis expects [0,1] pixels (got a normalized or corrupt image)");
    }
  }
}

}  // namespace

double Trajectory::arc_length() const {
  double s = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    s += std::hypot(points[i].x - points[i - 1].x, points[i].y - points[i - 1].y);
  }
  return s;
}

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::motion_psf: return "motion";
    case KernelFamily::defocus: return "defocus";
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::box: return "box";
    case KernelFamily::radial: return "radial";
    case KernelFamily::bokeh: return "bokeh";
    case KernelFamily::identity: return "identity";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "motion" || name == "motion_psf") return KernelFamily::motion_psf;
  if (name == "defocus") return KernelFamily::defocus;
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "box") return KernelFamily::box;
  if (name == "radial") return KernelFamily::radial;
  if (name == "bokeh") return KernelFamily::bokeh;
  if (name == "identity") return KernelFamily::identity;
  throw std::invalid_argument("unknown blur family: " + std::string(name));
}

double family_max_param(KernelFamily family) {
  switch (family) {
    case KernelFamily::motion_psf: return 21.0;
    case KernelFamily::defocus: return 2.5;
    case KernelFamily::gaussian: return 5.0;
    case KernelFamily::box: return 15.0;
    case KernelFamily::radial: return 10.0;
    case KernelFamily::bokeh: return 10.0;
    case KernelFamily::identity: return 1.0;
  }
  return 1.0;
}

double BlurKernel::sum() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

bool BlurKernel::is_identity() const {
  const std::size_t center = weights.size() / 2;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (i == center ? weights[i] != 1.0 : weights[i] != 0.0) return false;
  }
  return true;
}

BlurKernel identity_kernel() { return BlurKernel{}; }

Trajectory trajectory_with_length(Rng& rng, double length, double jitter_std) {
  if (length < 0.0) throw std::invalid_argument("trajectory length must be >= 0");
  if (jitter_std < 0.0) throw std::invalid_argument("jitter_std must be >= 0");
  Trajectory t;
  t.length = length;
  t.direction = uniform(rng, 0.0, kPi);
  t.points.push_back({0.0, 0.0});
  double heading = t.direction;
  const int steps = static_cast<int>(std::ceil(length));
  for (int i = 0; i < steps; ++i) {
    const double step = std::min(1.0, length - i);
    if (i > 0 && jitter_std > 0.0) heading += normal(rng, 0.0, jitter_std);
    const Point2& last = t.points.back();
    t.points.push_back({last.x + step * std::cos(heading), last.y + step * std::sin(heading)});
  }
  return t;
}

Trajectory sample_trajectory(Rng& rng, double max_length, double jitter_std) {
  if (!(max_length > 0.0)) throw std::invalid_argument("max_length must be > 0");
  const double length = uniform(rng, 0.0, max_length);
  return trajectory_with_length(rng, length, jitter_std);
}

Trajectory straight_trajectory(double length, double direction) {
  if (length < 0.0) throw std::invalid_argument("trajectory length must be >= 0");
  Trajectory t;
  t.length = length;
  t.direction = std::fmod(std::fmod(direction, kPi) + kPi, kPi);
  t.points.push_back({0.0, 0.0});
  if (length > 0.0) t.points.push_back({length * std::cos(t.direction), length * std::sin(t.direction)});
  return t;
}

int psf_window_for_length(double length) {
  const int half = static_cast<int>(std::ceil(std::max(length, 0.0) / 2.0)) + 1;
  return 2 * half + 1;
}

BlurKernel rasterize_psf(const Trajectory& trajectory, int kernel_size, double max_length) {
  require_odd_size(kernel_size);
  if (trajectory.points.empty()) throw std::invalid_argument("rasterize_psf: empty trajectory");
  const double severity =
      max_length > 0.0 ? std::min(trajectory.length / max_length, 1.0) : 0.0;
  BlurKernel k = blank_kernel(kernel_size, KernelFamily::motion_psf, severity);
  const int half = kernel_size / 2;

  // Arc-length weighted samples; their centroid is moved to the kernel center so the
  // blur does not translate the image.
  struct Sample {
    double x, y, w;
  };
  std::vector<Sample> samples;
  const auto& pts = trajectory.points;
  if (pts.size() == 1) {
    samples.push_back({pts[0].x, pts[0].y, 1.0});
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    const double dy = pts[i].y - pts[i - 1].y;
    const double len = std::hypot(dx, dy);
    const int n = std::max(1, static_cast<int>(std::ceil(len * 16.0)));
    for (int s = 0; s < n; ++s) {
      const double t = (s + 0.5) / n;
      samples.push_back({pts[i - 1].x + t * dx, pts[i - 1].y + t * dy, len / n});
    }
  }
  double cx = 0.0, cy = 0.0, total = 0.0;
  for (const auto& s : samples) {
    cx += s.w * s.x;
    cy += s.w * s.y;
    total += s.w;
  }
  if (total <= 0.0) {
    // Degenerate polyline made of coincident points.
    samples.assign(1, {pts[0].x, pts[0].y, 1.0});
    cx = pts[0].x;
    cy = pts[0].y;
  } else {
    cx /= total;
    cy /= total;
  }

  for (const auto& s : samples) {
    const double gx = s.x - cx + half;
    const double gy = s.y - cy + half;
    const int x0 = static_cast<int>(std::floor(gx));
    const int y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0;
    const double fy = gy - y0;
    const std::array<std::pair<int, double>, 2> rows{{{y0, 1.0 - fy}, {y0 + 1, fy}}};
    const std::array<std::pair<int, double>, 2> cols{{{x0, 1.0 - fx}, {x0 + 1, fx}}};
    for (const auto& [r, wr] : rows) {
      for (const auto& [c, wc] : cols) {
        const double w = s.w * wr * wc;
        if (w == 0.0 || r < 0 || r >= kernel_size || c < 0 || c >= kernel_size) continue;
        k.weights[static_cast<std::size_t>(r) * kernel_size + c] += w;
      }
    }
  }
  normalize_mass(k);
  return k;
}

BlurKernel parametric_kernel(KernelFamily family, double param, int kernel_size) {
  require_odd_size(kernel_size);
  const double max_param = family_max_param(family);
  auto check_range = [&](double lo, bool inclusive_lo) {
    const bool ok = (inclusive_lo ? param >= lo : param > lo) && param <= max_param;
    if (!ok || !std::isfinite(param)) {
      throw std::invalid_argument(std::string(to_string(family)) + " parameter out of range: " +
                                  std::to_string(param));
    }
  };
  const int half = kernel_size / 2;
  switch (family) {
    case KernelFamily::identity: {
      BlurKernel k = blank_kernel(kernel_size, KernelFamily::identity, 0.0);
      k.weights[k.weights.size() / 2] = 1.0;
      return k;
    }
    case KernelFamily::gaussian: {
      check_range(0.0, false);
      BlurKernel k = blank_kernel(kernel_size, family, param / max_param);
      for (int r = 0; r < kernel_size; ++r) {
        for (int c = 0; c < kernel_size; ++c) {
          const double d2 = static_cast<double>((r - half) * (r - half) + (c - half) * (c - half));
          k.weights[static_cast<std::size_t>(r) * kernel_size + c] = std::exp(-d2 / (2.0 * param * param));
        }
      }
      normalize_mass(k);
      return k;
    }
    case KernelFamily::box: {
      check_range(1.0, true);
      const int width = static_cast<int>(std::lround(param));
      if (std::abs(param - width) > 1e-9 || width % 2 == 0) {
        throw std::invalid_argument("box width must be an odd integer");
      }
      if (width > kernel_size) throw std::invalid_argument("box width exceeds kernel window");
      BlurKernel k = blank_kernel(kernel_size, family, param / max_param);
      const int w_half = width / 2;
      for (int r = half - w_half; r <= half + w_half; ++r) {
        for (int c = half - w_half; c <= half + w_half; ++c) {
          k.weights[static_cast<std::size_t>(r) * kernel_size + c] = 1.0;
        }
      }
      normalize_mass(k);
      return k;
    }
    case KernelFamily::bokeh:
      check_range(1.0, true);
      return disc_kernel(param, kernel_size, family, param / max_param);
    case KernelFamily::defocus:
      check_range(0.0, false);
      return disc_kernel(2.0 * param, kernel_size, family, param / max_param);
    case KernelFamily::motion_psf:
      check_range(0.0, true);
      return rasterize_psf(straight_trajectory(param, 0.0), kernel_size, max_param);
    case KernelFamily::radial:
      throw std::invalid_argument("radial blur is spatially varying; use radial_blur()");
  }
  throw std::invalid_argument("unknown kernel family");
}

int default_window(KernelFamily family, double param) {
  switch (family) {
    case KernelFamily::gaussian: return 2 * static_cast<int>(std::ceil(3.0 * param)) + 1;
    case KernelFamily::defocus: return 2 * static_cast<int>(std::floor(2.0 * param)) + 1;
    case KernelFamily::bokeh: return 2 * static_cast<int>(std::floor(param)) + 1;
    case KernelFamily::box: return std::max(1, static_cast<int>(std::lround(param)));
    case KernelFamily::motion_psf: return psf_window_for_length(param);
    case KernelFamily::radial:
    case KernelFamily::identity: return 1;
  }
  return 1;
}

Image convolve(const Image& image, const BlurKernel& kernel) {
  require_odd_size(kernel.size);
  if (kernel.weights.size() != static_cast<std::size_t>(kernel.size) * kernel.size) {
    throw std::invalid_argument("convolve: kernel weights do not match its size");
  }
  if (image.empty()) throw std::invalid_argument("convolve: empty image");
  const int h = image.height();
  const int w = image.width();
  const int half = kernel.size / 2;
  constexpr int C = Image::kChannels;

  std::vector<double> acc(image.size(), 0.0);
  std::vector<int> col_index(static_cast<std::size_t>(w));
  const auto src = image.pixels();
  for (int r = 0; r < kernel.size; ++r) {
    for (int c = 0; c < kernel.size; ++c) {
      const double wt = kernel.at(r, c);
      if (wt == 0.0) continue;
      const int dy = r - half;
      const int dx = c - half;
      for (int x = 0; x < w; ++x) col_index[x] = reflect_index(x - dx, w);
      for (int y = 0; y < h; ++y) {
        const int sy = reflect_index(y - dy, h);
        const float* row = &src[static_cast<std::size_t>(sy) * w * C];
        double* out = &acc[static_cast<std::size_t>(y) * w * C];
        for (int x = 0; x < w; ++x) {
          const float* p = row + static_cast<std::size_t>(col_index[x]) * C;
          out[x * C + 0] += wt * p[0];
          out[x * C + 1] += wt * p[1];
          out[x * C + 2] += wt * p[2];
        }
      }
    }
  }
  Image out(h, w);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
  return out;
}

Image radial_blur(const Image& image, double strength_deg) {
  if (strength_deg < 0.0 || !std::isfinite(strength_deg)) {
    throw std::invalid_argument("radial_blur: strength must be >= 0");
  }
  if (strength_deg == 0.0) return image;
  constexpr int kCopies = 8;
  std::vector<double> acc(image.size(), 0.0);
  for (int i = 0; i < kCopies; ++i) {
    const double angle = -strength_deg + 2.0 * strength_deg * i / (kCopies - 1);
    const Image r = rotate(image, angle);
    auto px = r.pixels();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += px[j];
  }
  Image out(image.height(), image.width());
  auto dst = out.pixels();
  for (std::size_t j = 0; j < acc.size(); ++j) {
    dst[j] = static_cast<float>(std::clamp(acc[j] / kCopies, 0.0, 1.0));
  }
  return out;
}

Image jpeg_degrade(const Image& image, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must lie in [1, 100]");
  std::vector<std::uint8_t> buffer;
  if (!cv::imencode(".jpg", to_u8_bgr(image), buffer, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw std::runtime_error("jpeg encode failed");
  }
  return from_u8_bgr(cv::imdecode(buffer, cv::IMREAD_COLOR));
}

Image add_sensor_noise(const Image& image, double sigma, Rng& rng) {
  if (sigma < 0.0 || !std::isfinite(sigma)) throw std::invalid_argument("noise sigma must be >= 0");
  Image out = image;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (float& v : out.pixels()) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  return out;
}

Image down_up_sample(const Image& image, double scale) {
  if (!(scale > 0.0 && scale < 1.0)) throw std::invalid_argument("resample scale must lie in (0, 1)");
  const int h = std::max(1, static_cast<int>(std::floor(scale * image.height())));
  const int w = std::max(1, static_cast<int>(std::floor(scale * image.width())));
  Image up = resize_bilinear(resize_bilinear(image, h, w), image.height(), image.width());
  clamp_unit(up);
  return up;
}

std::string_view to_string(BlurMode mode) {
  switch (mode) {
    case BlurMode::global: return "global";
    case BlurMode::ccmba: return "ccmba";
    case BlurMode::mixed: return "mixed";
  }
  return "unknown";
}

BlurMode blur_mode_from_string(std::string_view name) {
  if (name == "global") return BlurMode::global;
  if (name == "ccmba") return BlurMode::ccmba;
  if (name == "mixed") return BlurMode::mixed;
  throw std::invalid_argument("unknown blur mode: " + std::string(name));
}

std::string_view to_string(Label label) { return label == Label::real ? "real" : "fake"; }

Label label_from_string(std::string_view name) {
  if (name == "real" || name == "0") return Label::real;
  if (name == "fake" || name == "1") return Label::fake;
  throw std::invalid_argument("unknown label: " + std::string(name));
}

void BlurPolicy::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("BlurPolicy: " + what); };
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  if (!(max_length > 0.0)) fail("L_max must be > 0");
  if (!(jitter_std >= 0.0)) fail("jitter_std must be >= 0");
  prob(p_defocus, "p_d");
  prob(p_jpeg, "p_jpeg");
  prob(p_noise, "p_noise");
  prob(p_resample, "p_resample");
  if (!(sigma_defocus_max >= 0.0 && sigma_defocus_max <= family_max_param(KernelFamily::defocus))) {
    fail("sigma_defocus_max must lie in [0, 2.5]");
  }
  if (jpeg_quality_min < 1 || jpeg_quality_max > 100 || jpeg_quality_min > jpeg_quality_max) {
    fail("q_range must be an ordered sub-range of [1, 100]");
  }
  if (!(noise_sigma_min >= 0.0 && noise_sigma_min <= noise_sigma_max)) fail("noise_range invalid");
  if (!(scale_min > 0.0 && scale_max < 1.0 && scale_min <= scale_max)) fail("scale_range must lie in (0, 1)");
}

PairedSample synthesize_pair(const Image& image, Label label, const BlurPolicy& policy, Rng& rng,
                             const Mask* mask) {
  policy.validate();
  require_pixel_domain(image);

  PairedSample out;
  out.sharp = image;
  out.label = label;
  DegradationRecord& rec = out.degradation;

  const Trajectory traj = sample_trajectory(rng, policy.max_length, policy.jitter_std);
  rec.kernel = rasterize_psf(traj, psf_window_for_length(traj.length), policy.max_length);
  rec.trajectory_length = traj.length;
  rec.trajectory_direction = traj.direction;

  BlurMode mode = policy.mode;
  if (mode == BlurMode::mixed) mode = bernoulli(rng, 0.5) ? BlurMode::ccmba : BlurMode::global;
  rec.mode = mode;
  Image blurred;
  if (mode == BlurMode::ccmba) {
    const Mask region = mask ? *mask : random_ellipse_mask(image.height(), image.width(), rng);
    blurred = apply_ccmba(image, region, rec.kernel);
  } else {
    blurred = convolve(image, rec.kernel);
  }

  if (bernoulli(rng, policy.p_defocus)) {
    const double sigma = uniform(rng, 0.0, policy.sigma_defocus_max);
    rec.defocus_sigma = sigma;
    if (sigma > 0.0) {
      blurred = convolve(blurred, parametric_kernel(KernelFamily::defocus, sigma,
                                                    default_window(KernelFamily::defocus, sigma)));
    }
  }
  if (bernoulli(rng, policy.p_resample)) {
    const double scale = uniform(rng, policy.scale_min, policy.scale_max);
    rec.resample_scale = scale;
    blurred = down_up_sample(blurred, scale);
  }
  if (bernoulli(rng, policy.p_noise)) {
    const double sigma = uniform(rng, policy.noise_sigma_min, policy.noise_sigma_max);
    rec.noise_sigma = sigma;
    blurred = add_sensor_noise(blurred, sigma, rng);
  }
  if (bernoulli(rng, policy.p_jpeg)) {
    const int q = uniform_int(rng, policy.jpeg_quality_min, policy.jpeg_quality_max);
    rec.jpeg_quality = q;
    blurred = jpeg_degrade(blurred, q);
  }
  out.blurred = std::move(blurred);
  return out;
}

Image apply_ccmba(const Image& image, const Mask& mask, const BlurKernel& kernel) {
  if (mask.height != image.height() || mask.width != image.width()) {
    throw std::invalid_argument("apply_ccmba: mask shape does not match image");
  }
  const Image blurred = convolve(image, kernel);
  cv::Mat binary(mask.height, mask.width, CV_8UC1);
  bool any_zero = false;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const bool inside = mask.at(y, x) > 0.5f;
      binary.at<std::uint8_t>(y, x) = inside ? 255 : 0;
      any_zero = any_zero || !inside;
    }
  }
  cv::Mat dist;
  if (any_zero) cv::distanceTransform(binary, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);

  Image out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      float alpha = 0.0f;
      if (binary.at<std::uint8_t>(y, x)) {
        alpha = any_zero ? std::min(1.0f, dist.at<float>(y, x) / static_cast<float>(kFeatherWidth)) : 1.0f;
      }
      for (int c = 0; c < Image::kChannels; ++c) {
        out.at(y, x, c) = alpha * blurred.at(y, x, c) + (1.0f - alpha) * image.at(y, x, c);
      }
    }
  }
  return out;
}

Mask random_ellipse_mask(int height, int width, Rng& rng) {
  // Works in frame-normalized coordinates so coverage is independent of aspect ratio;
  // the largest semi-axis stays below 0.5, keeping the ellipse inside the frame.
  const double coverage = uniform(rng, 0.2, 0.6);
  const double aspect = uniform(rng, 0.8, 1.25);
  const double theta = uniform(rng, 0.0, kPi);
  const double b = std::sqrt(coverage / (kPi * aspect));
  const double a = aspect * b;
  const double slack = std::max(0.0, 0.5 - std::max(a, b));
  const double cu = uniform(rng, -slack, slack);
  const double cv = uniform(rng, -slack, slack);
  const double cs = std::cos(theta), sn = std::sin(theta);
  Mask m(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width - 0.5 - cu;
      const double v = (y + 0.5) / height - 0.5 - cv;
      const double pu = cs * u + sn * v;
      const double pv = -sn * u + cs * v;
      if ((pu * pu) / (a * a) + (pv * pv) / (b * b) <= 1.0) m.at(y, x) = 1.0f;
    }
  }
  return m;
}

}  // namespace s2b
