// SPDX-License-Identifier: Apache-2.0
#include "s2b/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace s2b {

namespace {

// Stream ids below 2^32 are phase-global; per-sample streams put epoch + 1 in the high word.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

std::uint64_t sample_stream(int epoch, std::size_t index) {
  return (static_cast<std::uint64_t>(epoch + 1) << 32) | static_cast<std::uint64_t>(index);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, (static_cast<std::uint64_t>(epoch) << 8) | kShuffleStream);
  // Fisher-Yates with our own draws so the permutation does not depend on the library's
  // std::shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void require_both_classes(const TrainingSet& data) {
  if (data.entries.empty()) throw std::invalid_argument("training manifest is empty");
  bool has_real = false, has_fake = false;
  for (const auto& e : data.entries) (e.label == Label::real ? has_real : has_fake) = true;
  if (!has_real || !has_fake) throw std::invalid_argument("training manifest must contain both classes");
}

int argmax_row(const Eigen::MatrixXd& u, Eigen::Index r) { return u(r, 1) > u(r, 0) ? 1 : 0; }

struct SampleViews {
  Image sharp;
  Image blurred;
  double severity = 0.0;
};

SampleViews make_views(const TrainingSet& data, std::size_t index, const PhaseConfig& config, Phase phase,
                       const PreprocessConfig& pre, int epoch) {
  Rng rng = make_rng(config.seed, sample_stream(epoch, index));
  const CropWindow w = choose_crop(pre, CropMode::train_randomcrop, &rng);
  const Image& src = data.images[index];
  const Image cropped = crop(src, w.top, w.left, w.size, w.size);
  std::optional<Mask> mask;
  if (data.masks[index]) mask = preprocess_mask(*data.masks[index], pre, w);
  AugmentedViews v = augment(cropped, config.augmentation, phase, rng, mask ? &*mask : nullptr);
  return {std::move(v.sharp), std::move(v.blurred), v.severity};
}

Eigen::RowVectorXd pooled_of(const Encoder& encoder, const Image& pixels) {
  return encoder.encode(normalize_channels(pixels)).pooled.transpose();
}

void check_encoder(const Encoder& encoder, const PreprocessConfig& pre) {
  if (!encoder.frozen()) throw std::invalid_argument("training requires a frozen encoder");
  if (encoder.input_size() != pre.crop) {
    throw std::invalid_argument("preprocess crop must equal the encoder input size");
  }
}

nlohmann::json step_record(const char* phase, long step, int epoch, double lr, const LossBreakdown& loss,
                           double grad_norm, bool clipped) {
  return {{"phase", phase},
          {"step", step},
          {"epoch", epoch},
          {"lr", lr},
          {"loss", {{"cls", loss.cls}, {"feat", loss.feat}, {"kd", loss.kd}, {"ordcon", loss.ordcon}, {"total", loss.total}}},
          {"grad_norm", grad_norm},
          {"clipped", clipped}};
}

}  // namespace

PhaseConfig PhaseConfig::teacher_defaults() {
  PhaseConfig c;
  c.epochs = 4;
  c.base_lr = 1e-4;
  c.weight_decay = 1e-4;
  c.augmentation.blur_mode = AugmentBlur::none;
  c.loss_weights = LossWeights{};
  return c;
}

PhaseConfig PhaseConfig::student_defaults() {
  PhaseConfig c;
  c.epochs = 15;
  c.base_lr = 5e-5;
  c.weight_decay = 1e-4;
  c.augmentation.blur_mode = AugmentBlur::global;
  c.loss_weights = LossWeights{};
  return c;
}

void PhaseConfig::validate(Phase phase) const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(base_lr >= 0.0) || !(weight_decay >= 0.0)) throw std::invalid_argument("lr and weight decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (schedule != "cosine") throw std::invalid_argument("unsupported schedule '" + schedule + "' (only cosine)");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be > 0");
  augmentation.validate();
  loss_weights.validate();
  if (phase == Phase::teacher && augmentation.blur_mode != AugmentBlur::none) {
    throw std::invalid_argument("teacher phase must use blur_mode none");
  }
  if (phase == Phase::student && augmentation.blur_mode == AugmentBlur::none) {
    throw std::invalid_argument("student phase needs blur_mode global, ccmba or mixed");
  }
}

double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps < 1 || step < 0 || step > total_steps) throw std::out_of_range("cosine_lr: step out of range");
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps)));
}

AdamW::AdamW(const HeadParams& like, double weight_decay, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(HeadParams& params, const HeadParams& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  auto p = params.views();
  const auto g = grads.views();
  auto m = m_.views();
  auto v = v_.views();
  if (p.size() != g.size()) throw std::invalid_argument("AdamW: gradient structure mismatch");
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size() != g[t].size()) throw std::invalid_argument("AdamW: gradient shape mismatch");
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      m[t][i] = beta1_ * m[t][i] + (1.0 - beta1_) * g[t][i];
      v[t][i] = beta2_ * v[t][i] + (1.0 - beta2_) * g[t][i] * g[t][i];
      const double update = (m[t][i] / bc1) / (std::sqrt(v[t][i] / bc2) + eps_);
      p[t][i] -= lr * (update + weight_decay_ * p[t][i]);
    }
  }
}

double clip_grad_norm(HeadParams& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& v : std::as_const(grads).views()) {
    for (double x : v) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& v : grads.views()) {
      for (double& x : v) x *= s;
    }
  }
  return norm;
}

TrainingSet TrainingSet::load(const std::vector<ManifestEntry>& entries, const PreprocessConfig& preprocess) {
  preprocess.validate();
  TrainingSet set;
  set.entries = entries;
  for (const auto& e : entries) {
    const Image img = load_image(e.path);
    if (img.height() < 8 || img.width() < 8) throw std::invalid_argument("image too small: " + e.path.string());
    Image resized = resize_bilinear(img, preprocess.resize, preprocess.resize);
    clamp_unit(resized);
    set.images.push_back(std::move(resized));
    set.masks.push_back(e.mask_path ? std::optional<Mask>(load_mask(*e.mask_path)) : std::nullopt);
  }
  return set;
}

Eigen::MatrixXd encode_pooled(const Encoder& encoder, const std::vector<Image>& images) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), encoder.embed_dim());
  for (std::size_t i = 0; i < images.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pooled_of(encoder, images[i]);
  return out;
}

TrainResult train_teacher(const TrainingSet& data, const PhaseConfig& config, const Encoder& encoder,
                          const TrainOptions& options) {
  config.validate(Phase::teacher);
  require_both_classes(data);
  check_encoder(encoder, options.preprocess);

  Rng init_rng = make_rng(config.seed, kInitStream);
  TrainResult result;
  result.heads = init_head_stack(default_head_config(Role::teacher, encoder.embed_dim()), init_rng);
  {
    std::vector<Image> centered;
    centered.reserve(data.images.size());
    const CropWindow w = choose_crop(options.preprocess, CropMode::eval_centercrop, nullptr);
    for (const Image& im : data.images) centered.push_back(crop(im, w.top, w.left, w.size, w.size));
    fit_standardizer(result.heads, encode_pooled(encoder, centered));
  }

  const std::size_t n = data.entries.size();
  const long steps_per_epoch = static_cast<long>((n + config.batch_size - 1) / config.batch_size);
  const long total_steps = steps_per_epoch * config.epochs;
  AdamW opt(result.heads.params, config.weight_decay);
  Rng dropout_rng = make_rng(config.seed, kDropoutStream);
  long step = 0;
  long clipped_steps = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(config.seed, epoch, n);
    long correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd feats(b, encoder.embed_dim());
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const SampleViews v = make_views(data, idx, config, Phase::teacher, options.preprocess, epoch);
        feats.row(static_cast<Eigen::Index>(k - start)) = pooled_of(encoder, v.sharp);
        labels.push_back(static_cast<int>(data.entries[idx].label));
      }
      const HeadActivations acts = head_forward(result.heads, feats, true, &dropout_rng);
      Eigen::MatrixXd grad_u;
      LossBreakdown loss;
      loss.cls = focal_loss(acts.u, labels, config.loss_weights.alpha_focal, config.loss_weights.gamma_focal, &grad_u);
      loss.total = config.loss_weights.lambda_cls * loss.cls;
      grad_u *= config.loss_weights.lambda_cls;
      HeadParams grads = head_backward(result.heads, acts, Eigen::MatrixXd::Zero(acts.z.rows(), acts.z.cols()), grad_u);
      const double norm = clip_grad_norm(grads, config.grad_clip);
      const bool clipped = norm > config.grad_clip;
      if (clipped) {
        ++clipped_steps;
        spdlog::debug("teacher step {}: gradient norm {:.4g} clipped to {}", step, norm, config.grad_clip);
      }
      const double lr = cosine_lr(step, total_steps, config.base_lr);
      opt.step(result.heads.params, grads, lr);
      for (Eigen::Index r = 0; r < b; ++r) correct += argmax_row(acts.u, r) == labels[r];
      if (options.logger) options.logger(step_record("teacher", step, epoch, lr, loss, norm, clipped));
      ++step;
    }
    result.train_accuracy = double(correct) / double(n);
    spdlog::info("teacher epoch {}/{}: train accuracy {:.4f}", epoch + 1, config.epochs, result.train_accuracy);
  }
  if (clipped_steps > 0) spdlog::info("teacher: gradient clipping triggered on {} of {} steps", clipped_steps, step);
  result.steps = step;
  result.rng_state = serialize_rng(dropout_rng);
  return result;
}

TrainResult distill_student(const TrainingSet& data, const HeadStack& teacher, const PhaseConfig& config,
                            const Encoder& encoder, const TrainOptions& options) {
  config.validate(Phase::student);
  require_both_classes(data);
  check_encoder(encoder, options.preprocess);
  if (teacher.config.role != Role::teacher) throw std::invalid_argument("distill_student: checkpoint is not a teacher");
  if (teacher.config.input_dim != encoder.embed_dim()) {
    throw std::invalid_argument("distill_student: teacher was trained on a different encoder width");
  }

  Rng init_rng = make_rng(config.seed, kInitStream);
  TrainResult result;
  result.heads = init_head_stack(default_head_config(Role::student, encoder.embed_dim()), init_rng);
  if (result.heads.config.feature_dim() != teacher.config.feature_dim()) {
    throw std::invalid_argument("distill_student: teacher and student projection widths differ");
  }
  result.heads.input_mean = teacher.input_mean;
  result.heads.input_scale = teacher.input_scale;

  const std::size_t n = data.entries.size();
  const long steps_per_epoch = static_cast<long>((n + config.batch_size - 1) / config.batch_size);
  const long total_steps = steps_per_epoch * config.epochs;
  AdamW opt(result.heads.params, config.weight_decay);
  Rng dropout_rng = make_rng(config.seed, kDropoutStream);
  const LossWeights& w = config.loss_weights;
  long step = 0;
  long clipped_steps = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(config.seed, epoch, n);
    long correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      const int d = encoder.embed_dim();
      Eigen::MatrixXd feats(2 * b, d);  // sharp rows, then blurred rows
      Eigen::VectorXd levels = Eigen::VectorXd::Zero(2 * b);
      std::vector<int> labels;
      std::vector<std::string> sharp_ids, blurred_ids;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const auto r = static_cast<Eigen::Index>(k - start);
        const SampleViews v = make_views(data, idx, config, Phase::student, options.preprocess, epoch);
        feats.row(r) = pooled_of(encoder, v.sharp);
        feats.row(b + r) = pooled_of(encoder, v.blurred);
        levels(b + r) = v.severity;
        labels.push_back(static_cast<int>(data.entries[idx].label));
        sharp_ids.push_back(data.entries[idx].id);
        blurred_ids.push_back(data.entries[idx].id);
      }
      if (options.observer) options.observer(step, sharp_ids, blurred_ids);

      const HeadActivations t_acts = head_forward(teacher, feats.topRows(b), false);
      const HeadActivations s_acts = head_forward(result.heads, feats, true, &dropout_rng);

      LossInputs in;
      in.teacher_logits = t_acts.u;
      in.teacher_features = t_acts.z;
      in.student_logits = s_acts.u.bottomRows(b);
      in.student_features = s_acts.z.bottomRows(b);
      in.embeddings = s_acts.z;
      in.blur_levels = levels;
      in.labels = labels;
      in.anchors.resize(static_cast<std::size_t>(b));
      std::iota(in.anchors.begin(), in.anchors.end(), 0);
      LossGradients g;
      const LossBreakdown loss = total_loss(in, w, &g);

      Eigen::MatrixXd grad_u = Eigen::MatrixXd::Zero(2 * b, 2);
      grad_u.bottomRows(b) = g.student_logits;
      Eigen::MatrixXd grad_z = g.embeddings;
      grad_z.bottomRows(b) += g.student_features;
      HeadParams grads = head_backward(result.heads, s_acts, grad_z, grad_u);
      const double norm = clip_grad_norm(grads, config.grad_clip);
      const bool clipped = norm > config.grad_clip;
      if (clipped) {
        ++clipped_steps;
        spdlog::debug("student step {}: gradient norm {:.4g} clipped to {}", step, norm, config.grad_clip);
      }
      const double lr = cosine_lr(step, total_steps, config.base_lr);
      opt.step(result.heads.params, grads, lr);
      for (Eigen::Index r = 0; r < b; ++r) correct += argmax_row(s_acts.u, b + r) == labels[r];
      if (options.logger) options.logger(step_record("student", step, epoch, lr, loss, norm, clipped));
      ++step;
    }
    result.train_accuracy = double(correct) / double(n);
    spdlog::info("student epoch {}/{}: train accuracy {:.4f} (blurred views)", epoch + 1, config.epochs,
                 result.train_accuracy);
  }
  if (clipped_steps > 0) spdlog::info("student: gradient clipping triggered on {} of {} steps", clipped_steps, step);
  result.steps = step;
  result.rng_state = serialize_rng(dropout_rng);
  return result;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path_, std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open log " + path_.string());
}

void JsonlWriter::write(const nlohmann::json& record) {
  out_ << record.dump() << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("log write failed: " + path_.string());
}

StepLogger JsonlWriter::as_logger() {
  return [this](const nlohmann::json& r) { write(r); };
}

}  // namespace s2b
