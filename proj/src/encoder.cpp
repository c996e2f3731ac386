// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "s2b/hash.hpp"
#include "s2b/model.hpp"

namespace s2b {

namespace {

constexpr int kFrequencies = 8;
constexpr int kOrientations = 4;
constexpr double kMinFrequency = 0.04;
constexpr double kMaxFrequency = 0.45;
constexpr double kEnergyFloor = 1e-6;
constexpr double kLayerNormEps = 1e-5;
constexpr double kEmbedStd = 0.02;
constexpr std::array<double, 3> kLumaWeights{0.299, 0.587, 0.114};

Eigen::MatrixXd gaussian_matrix(Rng& rng, int rows, int cols, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

// Row-wise layer norm without affine parameters.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

void hash_matrix(Sha256& h, const Eigen::MatrixXd& m) {
  h.update_values(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

}  // namespace

void EncoderConfig::validate() const {
  if (patch < 4) throw std::invalid_argument("encoder patch must be >= 4");
  if (image_size < patch || image_size % patch != 0) {
    throw std::invalid_argument(fmt::format("encoder image_size {} must be a positive multiple of patch {}",
                                            image_size, patch));
  }
  if (embed_dim < 4 || heads < 1 || embed_dim % heads != 0) {
    throw std::invalid_argument("encoder embed_dim must be divisible by heads");
  }
  if (depth < 1) throw std::invalid_argument("encoder depth must be >= 1");
}

ToyViT::ToyViT(const EncoderConfig& config) : config_(config) {
  config_.validate();
  const int p = config_.patch;
  const int d = config_.embed_dim;
  grid_ = config_.image_size / p;

  const int pairs = kFrequencies * kOrientations;
  filters_.resize(2 * pairs, p * p);
  const double center = (p - 1) / 2.0;
  int row = 0;
  for (int fi = 0; fi < kFrequencies; ++fi) {
    const double f = kMinFrequency * std::pow(kMaxFrequency / kMinFrequency, fi / double(kFrequencies - 1));
    const double sigma = std::min(p / 4.0, 1.2 / f);
    for (int oi = 0; oi < kOrientations; ++oi) {
      const double theta = oi * std::numbers::pi / kOrientations;
      for (const double phase : {0.0, std::numbers::pi / 2.0}) {
        Eigen::VectorXd k(p * p);
        for (int y = 0; y < p; ++y) {
          for (int x = 0; x < p; ++x) {
            const double dx = x - center;
            const double dy = y - center;
            const double u = dx * std::cos(theta) + dy * std::sin(theta);
            const double env = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k(y * p + x) = env * std::cos(2.0 * std::numbers::pi * f * u + phase);
          }
        }
        k.array() -= k.mean();
        k /= k.norm();
        filters_.row(row++) = k.transpose();
      }
    }
  }

  Rng rng = make_rng(config_.seed, 0);
  mix_ = gaussian_matrix(rng, d, pairs, 1.0 / std::sqrt(double(pairs)));
  cls_ = gaussian_matrix(rng, d, 1, kEmbedStd).col(0);
  pos_ = gaussian_matrix(rng, 1 + grid_ * grid_, d, kEmbedStd);
  const double s = 1.0 / std::sqrt(double(d));
  for (int b = 0; b < config_.depth; ++b) {
    Block blk;
    blk.qkv = gaussian_matrix(rng, 3 * d, d, s);
    blk.out = gaussian_matrix(rng, d, d, s);
    blk.fc1 = gaussian_matrix(rng, 4 * d, d, s);
    blk.fc2 = gaussian_matrix(rng, d, 4 * d, 1.0 / std::sqrt(4.0 * d));
    blocks_.push_back(std::move(blk));
  }
}

std::string ToyViT::id() const {
  return fmt::format("toyvit-d{}-p{}-L{}-h{}-r{}-s{}", config_.embed_dim, config_.patch, config_.depth,
                     config_.heads, config_.image_size, config_.seed);
}

EncoderOutput ToyViT::encode(const Image& normalized) const {
  if (normalized.height() != config_.image_size || normalized.width() != config_.image_size) {
    throw std::invalid_argument(fmt::format("encoder {} expects {}x{} input, got {}x{}", id(), config_.image_size,
                                            config_.image_size, normalized.height(), normalized.width()));
  }
  const int p = config_.patch;
  const int d = config_.embed_dim;
  const int n_patches = grid_ * grid_;
  const int pairs = static_cast<int>(mix_.cols());

  Eigen::MatrixXd tokens(1 + n_patches, d);
  tokens.row(0) = cls_.transpose();
  Eigen::VectorXd patch(p * p);
  for (int gy = 0; gy < grid_; ++gy) {
    for (int gx = 0; gx < grid_; ++gx) {
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          double v = 0.0;
          for (int c = 0; c < Image::kChannels; ++c) v += kLumaWeights[c] * normalized.at(gy * p + y, gx * p + x, c);
          patch(y * p + x) = v;
        }
      }
      const Eigen::VectorXd resp = filters_ * patch;
      Eigen::VectorXd log_energy(pairs);
      for (int j = 0; j < pairs; ++j) {
        log_energy(j) = std::log(resp(2 * j) * resp(2 * j) + resp(2 * j + 1) * resp(2 * j + 1) + kEnergyFloor);
      }
      tokens.row(1 + gy * grid_ + gx) = (mix_ * log_energy).transpose();
    }
  }
  tokens += pos_;

  const int heads = config_.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  const int n_tok = 1 + n_patches;
  Eigen::VectorXd attention = Eigen::VectorXd::Zero(n_patches);
  for (const Block& blk : blocks_) {
    const Eigen::MatrixXd h = layer_norm(tokens);
    const Eigen::MatrixXd qkv = h * blk.qkv.transpose();
    Eigen::MatrixXd mixed(n_tok, d);
    attention.setZero();
    for (int hd = 0; hd < heads; ++hd) {
      const auto q = qkv.middleCols(hd * dh, dh);
      const auto k = qkv.middleCols(d + hd * dh, dh);
      const auto v = qkv.middleCols(2 * d + hd * dh, dh);
      Eigen::MatrixXd logits = (q * k.transpose()) * scale;
      for (int r = 0; r < n_tok; ++r) {
        const double m = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - m).exp();
        logits.row(r) /= logits.row(r).sum();
      }
      mixed.middleCols(hd * dh, dh) = logits * v;
      attention += logits.row(0).tail(n_patches).transpose();
    }
    attention /= heads;
    tokens += mixed * blk.out.transpose();
    Eigen::MatrixXd hidden = layer_norm(tokens) * blk.fc1.transpose();
    hidden = hidden.unaryExpr([](double x) { return gelu(x); });
    tokens += hidden * blk.fc2.transpose();
  }
  tokens = layer_norm(tokens);

  EncoderOutput out;
  out.pooled = tokens.row(0).transpose();
  out.patch_tokens = tokens.bottomRows(n_patches);
  out.attention = attention;
  out.rows = grid_;
  out.cols = grid_;
  return out;
}

std::string ToyViT::weights_hash() const {
  Sha256 h;
  h.update(id());
  hash_matrix(h, filters_);
  hash_matrix(h, mix_);
  hash_matrix(h, cls_);
  hash_matrix(h, pos_);
  for (const Block& blk : blocks_) {
    hash_matrix(h, blk.qkv);
    hash_matrix(h, blk.out);
    hash_matrix(h, blk.fc1);
    hash_matrix(h, blk.fc2);
  }
  return h.hex_digest();
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config) { return std::make_unique<ToyViT>(config); }

}  // namespace s2b
