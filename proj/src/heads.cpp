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

constexpr double kStandardizerFloor = 1e-6;

Linear init_linear(int in, int out, Rng& rng) {
  Linear l;
  l.weight.resize(out, in);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(in)));
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) l.weight(r, c) = dist(rng);
  }
  l.bias = Eigen::VectorXd::Zero(out);
  return l;
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Linear& l) {
  Eigen::MatrixXd y = x * l.weight.transpose();
  y.rowwise() += l.bias.transpose();
  return y;
}

// Runs one MLP segment (hidden layers GELU + dropout, last layer linear), recording caches.
Eigen::MatrixXd run_segment(const std::vector<Linear>& layers, Eigen::MatrixXd x, double dropout, bool train,
                            Rng* rng, HeadActivations& acts) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    acts.inputs.push_back(x);
    Eigen::MatrixXd y = affine(x, layers[i]);
    if (i + 1 == layers.size()) return y;
    acts.preacts.push_back(y);
    y = y.unaryExpr([](double v) { return gelu(v); });
    if (train && dropout > 0.0) {
      Eigen::MatrixXd mask(y.rows(), y.cols());
      const double keep = 1.0 - dropout;
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        for (Eigen::Index c = 0; c < mask.cols(); ++c) mask(r, c) = bernoulli(*rng, keep) ? 1.0 / keep : 0.0;
      }
      y = y.cwiseProduct(mask);
      acts.dropouts.push_back(std::move(mask));
    } else {
      acts.dropouts.emplace_back();
    }
    x = std::move(y);
  }
  return x;
}

// Backpropagates through one segment; `hidden_offset` indexes its first hidden cache.
Eigen::MatrixXd backprop_segment(const std::vector<Linear>& layers, const HeadActivations& acts,
                                 std::size_t input_offset, std::size_t hidden_offset, Eigen::MatrixXd grad,
                                 std::vector<Linear>& out) {
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    if (ii + 1 < layers.size()) {
      const std::size_t hidx = hidden_offset + ii;
      if (acts.dropouts[hidx].size() > 0) grad = grad.cwiseProduct(acts.dropouts[hidx]);
      grad = grad.cwiseProduct(acts.preacts[hidx].unaryExpr([](double v) { return gelu_derivative(v); }));
    }
    const Eigen::MatrixXd& x = acts.inputs[input_offset + ii];
    out[ii].weight = grad.transpose() * x;
    out[ii].bias = grad.colwise().sum().transpose();
    grad = grad * layers[ii].weight;
  }
  return grad;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

std::string_view to_string(Role role) { return role == Role::teacher ? "teacher" : "student"; }

Role role_from_string(std::string_view name) {
  if (name == "teacher") return Role::teacher;
  if (name == "student") return Role::student;
  throw std::invalid_argument("unknown role: " + std::string(name));
}

std::vector<std::span<double>> HeadParams::views() {
  std::vector<std::span<double>> out;
  for (auto* seg : {&projection, &classifier}) {
    for (Linear& l : *seg) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
  }
  return out;
}

std::vector<std::span<const double>> HeadParams::views() const {
  std::vector<std::span<const double>> out;
  for (const auto* seg : {&projection, &classifier}) {
    for (const Linear& l : *seg) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
  }
  return out;
}

HeadParams HeadParams::zeros_like() const {
  HeadParams z = *this;
  for (auto* seg : {&z.projection, &z.classifier}) {
    for (Linear& l : *seg) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }
  return z;
}

void HeadConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("head input_dim must be >= 1");
  if (projection_dims.empty()) throw std::invalid_argument("head needs at least one projection layer");
  for (int dim : projection_dims) {
    if (dim < 1) throw std::invalid_argument("projection dims must be >= 1");
  }
  if (classifier_hidden < 1) throw std::invalid_argument("classifier hidden width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

HeadConfig default_head_config(Role role, int input_dim) {
  HeadConfig c;
  c.role = role;
  c.input_dim = input_dim;
  const int d = input_dim;
  if (role == Role::teacher) {
    c.projection_dims = d >= 512 ? std::vector<int>{std::max(2048, 4 * d), 1024, 512} : std::vector<int>{4 * d, 2 * d, d};
    c.dropout = 0.1;
  } else {
    c.projection_dims = d >= 512 ? std::vector<int>{1024, 512} : std::vector<int>{2 * d, d};
    c.dropout = 0.2;
  }
  c.classifier_hidden = std::max(1, c.feature_dim() / 2);
  return c;
}

HeadStack init_head_stack(const HeadConfig& config, Rng& rng) {
  config.validate();
  HeadStack s;
  s.config = config;
  s.input_mean = Eigen::VectorXd::Zero(config.input_dim);
  s.input_scale = Eigen::VectorXd::Ones(config.input_dim);
  int in = config.input_dim;
  for (int out : config.projection_dims) {
    s.params.projection.push_back(init_linear(in, out, rng));
    in = out;
  }
  s.params.classifier.push_back(init_linear(in, config.classifier_hidden, rng));
  s.params.classifier.push_back(init_linear(config.classifier_hidden, 2, rng));
  return s;
}

void fit_standardizer(HeadStack& stack, const Eigen::MatrixXd& features) {
  if (features.cols() != stack.config.input_dim || features.rows() < 2) {
    throw std::invalid_argument("fit_standardizer: need >= 2 rows of input_dim features");
  }
  stack.input_mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - stack.input_mean.transpose();
  const Eigen::VectorXd var = centered.array().square().colwise().sum().transpose() / double(features.rows() - 1);
  stack.input_scale = (var.array().sqrt() + kStandardizerFloor).inverse();
}

HeadActivations head_forward(const HeadStack& stack, const Eigen::MatrixXd& features, bool train_mode,
                             Rng* dropout_rng) {
  if (features.cols() != stack.config.input_dim) {
    throw std::invalid_argument(fmt::format("head expects {}-dim features, got {}", stack.config.input_dim,
                                            features.cols()));
  }
  if (train_mode && stack.config.dropout > 0.0 && dropout_rng == nullptr) {
    throw std::invalid_argument("head_forward: train mode needs a dropout rng");
  }
  HeadActivations acts;
  Eigen::MatrixXd x = (features.rowwise() - stack.input_mean.transpose()).array().rowwise() *
                      stack.input_scale.transpose().array();
  acts.z = run_segment(stack.params.projection, std::move(x), stack.config.dropout, train_mode, dropout_rng, acts);
  acts.u = run_segment(stack.params.classifier, acts.z, stack.config.dropout, train_mode, dropout_rng, acts);
  return acts;
}

HeadParams head_backward(const HeadStack& stack, const HeadActivations& acts, const Eigen::MatrixXd& grad_z,
                         const Eigen::MatrixXd& grad_u) {
  if (grad_z.rows() != acts.z.rows() || grad_z.cols() != acts.z.cols() || grad_u.rows() != acts.u.rows() ||
      grad_u.cols() != acts.u.cols()) {
    throw std::invalid_argument("head_backward: gradient shapes do not match activations");
  }
  HeadParams g = stack.params.zeros_like();
  const std::size_t n_proj = stack.params.projection.size();
  const std::size_t proj_hidden = n_proj - 1;
  Eigen::MatrixXd dz = backprop_segment(stack.params.classifier, acts, n_proj, proj_hidden, grad_u, g.classifier);
  dz += grad_z;
  backprop_segment(stack.params.projection, acts, 0, 0, std::move(dz), g.projection);
  return g;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> project_and_classify(const Eigen::VectorXd& h, const HeadStack& stack,
                                                                 bool train_mode, Rng* dropout_rng) {
  const HeadActivations acts = head_forward(stack, h.transpose(), train_mode, dropout_rng);
  return {acts.z.row(0).transpose(), acts.u.row(0).transpose()};
}

Eigen::VectorXd normalize(const Eigen::VectorXd& z) {
  const double n = z.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::domain_error("normalize: zero or non-finite vector");
  return z / n;
}

std::string weights_hash(const HeadStack& stack) {
  Sha256 h;
  h.update(to_string(stack.config.role));
  h.update_values(std::span<const double>(stack.input_mean.data(), static_cast<std::size_t>(stack.input_mean.size())));
  h.update_values(
      std::span<const double>(stack.input_scale.data(), static_cast<std::size_t>(stack.input_scale.size())));
  for (const auto& v : stack.params.views()) h.update_values(v);
  return h.hex_digest();
}

}  // namespace s2b
