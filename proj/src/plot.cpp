// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "s2b/analysis.hpp"

namespace s2b {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 150;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

const std::array<cv::Scalar, 6> kPalette{cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255),
                                          cv::Scalar(44, 160, 44),  cv::Scalar(40, 39, 214),
                                          cv::Scalar(189, 103, 148), cv::Scalar(75, 86, 140)};

void put_text(cv::Mat& img, const std::string& text, cv::Point at, double scale = 0.45) {
  cv::putText(img, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
}

}  // namespace

void plot_lines(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<PlotSeries>& series) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("plot series x/y length mismatch");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw std::invalid_argument("plot_lines: no data");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kWidth - kMarginLeft - kMarginRight;
  const int ph = kHeight - kMarginTop - kMarginBottom;
  auto to_px = [&](double x, double y) {
    return cv::Point(kMarginLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)),
                     kMarginTop + static_cast<int>(std::lround((y1 - y) / (y1 - y0) * ph)));
  };
  cv::rectangle(img, {kMarginLeft, kMarginTop}, {kMarginLeft + pw, kMarginTop + ph}, cv::Scalar(120, 120, 120));
  for (int t = 0; t <= 4; ++t) {
    const double yv = y0 + (y1 - y0) * t / 4.0;
    const double xv = x0 + (x1 - x0) * t / 4.0;
    put_text(img, fmt::format("{:.3g}", yv), to_px(x0, yv) + cv::Point(-62, 4), 0.4);
    put_text(img, fmt::format("{:.3g}", xv), to_px(xv, y0) + cv::Point(-12, 18), 0.4);
  }
  int baseline = 0;
  const cv::Size title_size = cv::getTextSize(title, cv::FONT_HERSHEY_SIMPLEX, 0.55, 1, &baseline);
  put_text(img, title, {kMarginLeft + (pw - title_size.width) / 2, 18}, 0.55);
  put_text(img, x_label, {kMarginLeft + pw / 2 - 40, kHeight - 10});
  put_text(img, y_label, {5, kMarginTop - 8});
  for (std::size_t i = 0; i < series.size(); ++i) {
    const cv::Scalar color = kPalette[i % kPalette.size()];
    const PlotSeries& s = series[i];
    for (std::size_t k = 1; k < s.x.size(); ++k) {
      cv::line(img, to_px(s.x[k - 1], s.y[k - 1]), to_px(s.x[k], s.y[k]), color, 2, cv::LINE_AA);
    }
    for (std::size_t k = 0; k < s.x.size(); ++k) cv::circle(img, to_px(s.x[k], s.y[k]), 3, color, cv::FILLED);
    const cv::Point legend(kMarginLeft + pw + 12, kMarginTop + 18 * static_cast<int>(i) + 10);
    cv::line(img, legend, legend + cv::Point(20, 0), color, 2);
    put_text(img, s.name, legend + cv::Point(26, 4), 0.4);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write plot " + path.string());
}

void plot_heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& matrix, double lo, double hi) {
  if (matrix.size() == 0) throw std::invalid_argument("plot_heatmap: empty matrix");
  if (!(hi > lo)) throw std::invalid_argument("plot_heatmap: empty colour range");
  cv::Mat gray(static_cast<int>(matrix.rows()), static_cast<int>(matrix.cols()), CV_8UC1);
  for (int r = 0; r < gray.rows; ++r) {
    for (int c = 0; c < gray.cols; ++c) {
      gray.at<std::uint8_t>(r, c) =
          static_cast<std::uint8_t>(std::lround((std::clamp(matrix(r, c), lo, hi) - lo) / (hi - lo) * 255.0));
    }
  }
  const int cell = std::max(1, 480 / std::max(gray.rows, gray.cols));
  cv::Mat big;
  cv::resize(gray, big, cv::Size(gray.cols * cell, gray.rows * cell), 0, 0, cv::INTER_NEAREST);
  cv::Mat color;
  cv::applyColorMap(big, color, cv::COLORMAP_VIRIDIS);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), color)) throw std::runtime_error("cannot write plot " + path.string());
}

}  // namespace s2b
