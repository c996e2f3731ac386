// SPDX-License-Identifier: Apache-2.0
#pragma once

// Frozen encoder abstraction and the teacher/student head stacks.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "s2b/image.hpp"
#include "s2b/rng.hpp"

namespace s2b {

struct EncoderOutput {
  Eigen::VectorXd pooled;        // d
  Eigen::MatrixXd patch_tokens;  // (rows*cols) x d, row-major patch order
  Eigen::VectorXd attention;     // rows*cols, class-token attention averaged over heads
  int rows = 0;
  int cols = 0;
};

/// A frozen feature extractor. Implementations are immutable after construction, so
/// `encode` is safe to call concurrently.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::string id() const = 0;
  virtual int embed_dim() const = 0;
  /// Square input resolution expected by `encode`.
  virtual int input_size() const = 0;
  virtual std::pair<int, int> patch_grid() const = 0;
  virtual bool has_attention() const { return true; }
  virtual bool frozen() const { return true; }

  /// `normalized` is a preprocessed, channel-normalized image of input_size x input_size.
  virtual EncoderOutput encode(const Image& normalized) const = 0;
  virtual std::string weights_hash() const = 0;
};

struct EncoderConfig {
  int image_size = 224;
  int patch = 16;
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Small vision transformer whose patch embedding is a fixed bank of quadrature Gabor
/// filters on luma (log local energy per band), followed by randomly initialized
/// pre-LN transformer blocks. All weights are a pure function of the config.
class ToyViT final : public Encoder {
 public:
  explicit ToyViT(const EncoderConfig& config);

  std::string id() const override;
  int embed_dim() const override { return config_.embed_dim; }
  int input_size() const override { return config_.image_size; }
  std::pair<int, int> patch_grid() const override { return {grid_, grid_}; }
  EncoderOutput encode(const Image& normalized) const override;
  std::string weights_hash() const override;

  const EncoderConfig& config() const { return config_; }

 private:
  struct Block {
    Eigen::MatrixXd qkv;  // 3d x d
    Eigen::MatrixXd out;  // d x d
    Eigen::MatrixXd fc1;  // 4d x d
    Eigen::MatrixXd fc2;  // d x 4d
  };

  EncoderConfig config_;
  int grid_ = 0;
  Eigen::MatrixXd filters_;  // (2*pairs) x (patch*patch); rows 2j, 2j+1 form a quadrature pair
  Eigen::MatrixXd mix_;      // d x pairs
  Eigen::VectorXd cls_;
  Eigen::MatrixXd pos_;  // (1 + grid^2) x d
  std::vector<Block> blocks_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config);

double gelu(double x);
double gelu_derivative(double x);

enum class Role { teacher, student };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct HeadParams {
  std::vector<Linear> projection;
  std::vector<Linear> classifier;

  /// Flat views over every weight and bias, in a fixed order.
  std::vector<std::span<double>> views();
  std::vector<std::span<const double>> views() const;
  HeadParams zeros_like() const;
};

struct HeadConfig {
  Role role = Role::teacher;
  int input_dim = 0;
  std::vector<int> projection_dims;  // output width of each projection layer; back() = k
  int classifier_hidden = 0;
  double dropout = 0.1;

  int feature_dim() const { return projection_dims.back(); }
  void validate() const;
};

/// Role defaults. For input_dim >= 512 the teacher uses max(2048, 4d) -> 1024 -> 512 and
/// the student 1024 -> 512; smaller encoders keep the ratios: teacher 4d -> 2d -> d,
/// student 2d -> d. The classifier hidden width is k/2.
HeadConfig default_head_config(Role role, int input_dim);

/// Projection head plus two-layer classifier for one role. Inputs are standardized by a
/// frozen per-dimension affine map before the first projection layer.
struct HeadStack {
  HeadConfig config;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  HeadParams params;
};

/// Gaussian weights with std 1/sqrt(fan_in), zero biases, identity standardizer.
HeadStack init_head_stack(const HeadConfig& config, Rng& rng);

/// Sets the standardizer from a sample of encoder features (rows = samples).
void fit_standardizer(HeadStack& stack, const Eigen::MatrixXd& features);

/// Cached activations of a batched forward pass (rows = samples).
struct HeadActivations {
  Eigen::MatrixXd z;  // N x k
  Eigen::MatrixXd u;  // N x 2
  std::vector<Eigen::MatrixXd> inputs;    // input of every layer, projection then classifier
  std::vector<Eigen::MatrixXd> preacts;   // pre-activation of every hidden layer
  std::vector<Eigen::MatrixXd> dropouts;  // scaled keep-masks, empty when not training
};

/// `dropout_rng` is required when train_mode is set.
HeadActivations head_forward(const HeadStack& stack, const Eigen::MatrixXd& features, bool train_mode,
                             Rng* dropout_rng = nullptr);

/// Parameter gradient given upstream gradients on z (N x k) and u (N x 2).
HeadParams head_backward(const HeadStack& stack, const HeadActivations& acts, const Eigen::MatrixXd& grad_z,
                         const Eigen::MatrixXd& grad_u);

std::pair<Eigen::VectorXd, Eigen::VectorXd> project_and_classify(const Eigen::VectorXd& h, const HeadStack& stack,
                                                                 bool train_mode, Rng* dropout_rng = nullptr);

/// z / ||z||. Throws std::domain_error on a zero (or non-finite) norm.
Eigen::VectorXd normalize(const Eigen::VectorXd& z);

std::string weights_hash(const HeadStack& stack);

}  // namespace s2b
