// SPDX-License-Identifier: Apache-2.0
#pragma once

// Teacher fine-tuning on sharp views and student distillation on paired views.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "s2b/blur.hpp"
#include "s2b/data_io.hpp"
#include "s2b/losses.hpp"
#include "s2b/model.hpp"

namespace s2b {

enum class AugmentBlur { none, global, ccmba, mixed };

std::string_view to_string(AugmentBlur mode);
AugmentBlur augment_blur_from_string(std::string_view name);

struct AugmentPolicy {
  double brightness = 0.1;
  double contrast = 0.1;
  double saturation = 0.1;
  double hue = 0.05;  // fraction of the hue circle
  double rotation_deg = 5.0;
  double p_jpeg = 0.3;
  int jpeg_quality_min = 85;
  int jpeg_quality_max = 95;
  AugmentBlur blur_mode = AugmentBlur::none;
  /// Probability that a student sample gets a synthesized blurred view; otherwise its
  /// "blurred" view is the sharp view with severity 0.
  double p_blur = 0.5;
  BlurPolicy blur;

  void validate() const;
};

enum class Phase { teacher, student };

struct PhaseConfig {
  int epochs = 4;
  double base_lr = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 32;
  std::string schedule = "cosine";
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  AugmentPolicy augmentation;
  LossWeights loss_weights;

  static PhaseConfig teacher_defaults();
  static PhaseConfig student_defaults();
  void validate(Phase phase) const;
};

/// base_lr * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(long step, long total_steps, double base_lr);

/// Adam with decoupled weight decay, applied to every parameter.
class AdamW {
 public:
  AdamW(const HeadParams& like, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(HeadParams& params, const HeadParams& grads, double lr);
  long steps() const { return t_; }

 private:
  HeadParams m_;
  HeadParams v_;
  double weight_decay_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

/// Scales `grads` in place to global L2 norm <= max_norm; returns the norm before clipping.
double clip_grad_norm(HeadParams& grads, double max_norm);

struct AugmentedViews {
  Image sharp;
  Image blurred;          // equals `sharp` in the teacher phase or when no blur was drawn
  double severity = 0.0;  // blur level b of the blurred view
  std::optional<DegradationRecord> degradation;
};

/// Colour jitter, small rotation and occasional JPEG, quantized to 8 bits; in the student
/// phase the result additionally passes through pair synthesis with probability p_blur.
/// Throws if the policy's blur mode does not fit the phase.
AugmentedViews augment(const Image& image, const AugmentPolicy& policy, Phase phase, Rng& rng,
                       const Mask* mask = nullptr);

/// Receives one record per optimizer step.
using StepLogger = std::function<void(const nlohmann::json&)>;
/// Receives the manifest ids behind the sharp and blurred rows of every student batch.
using BatchObserver = std::function<void(long step, std::span<const std::string> sharp_ids,
                                         std::span<const std::string> blurred_ids)>;

struct TrainOptions {
  PreprocessConfig preprocess;
  StepLogger logger;
  BatchObserver observer;
};

struct TrainResult {
  HeadStack heads;
  double train_accuracy = 0.0;  // final epoch, train-mode predictions
  long steps = 0;
  std::string rng_state;        // dropout stream after the last step
};

/// Images of the manifest after square resize, cached in memory for the run.
struct TrainingSet {
  std::vector<ManifestEntry> entries;
  std::vector<Image> images;
  std::vector<std::optional<Mask>> masks;

  static TrainingSet load(const std::vector<ManifestEntry>& entries, const PreprocessConfig& preprocess);
};

/// Focal-loss fine-tuning of a fresh teacher head stack on sharp augmented views. The
/// head standardizer is fit on un-augmented center crops before the first step.
TrainResult train_teacher(const TrainingSet& data, const PhaseConfig& config, const Encoder& encoder,
                          const TrainOptions& options = {});

/// Distills a student from a frozen teacher. The student reuses the teacher's standardizer.
TrainResult distill_student(const TrainingSet& data, const HeadStack& teacher, const PhaseConfig& config,
                            const Encoder& encoder, const TrainOptions& options = {});

/// Pooled features of preprocessed pixel-domain images, one row per image.
Eigen::MatrixXd encode_pooled(const Encoder& encoder, const std::vector<Image>& images);

/// JSON-lines sink; the file is truncated on construction.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);
  void write(const nlohmann::json& record);
  StepLogger as_logger();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace s2b
