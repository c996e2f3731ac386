// SPDX-License-Identifier: Apache-2.0
#pragma once

// Accuracy under clean and blurred conditions, blur sweeps and report comparison.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2b/blur.hpp"
#include "s2b/data_io.hpp"
#include "s2b/model.hpp"

namespace s2b {

/// "clean" or "<family>:<param>", e.g. "motion:15", "gaussian:2", "radial:5", "identity".
struct Condition {
  bool clean = true;
  KernelFamily family = KernelFamily::identity;
  double param = 0.0;

  static Condition parse(const std::string& spec);
  std::string name() const;
  /// Severity of the condition in [0, 1] (0 for clean and identity).
  double severity() const;
};

/// Severity bucket label: [0,1/3) -> "low", [1/3,2/3) -> "medium", [2/3,1] -> "high".
std::string severity_bucket(double b);

struct Tally {
  long correct = 0;
  long n = 0;
  double accuracy() const { return n > 0 ? double(correct) / double(n) : 0.0; }
};

struct EvalReport {
  double overall_accuracy = 0.0;
  std::map<std::string, Tally> per_condition;
  std::map<std::string, Tally> per_class;
  /// Synthetic blur reports the condition's bucket; clean evaluation buckets manifest
  /// entries that carry severity_b annotations.
  std::map<std::string, Tally> per_severity_bucket;
  std::string config_fingerprint;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

struct EvalOptions {
  PreprocessConfig preprocess;
  std::uint64_t seed = 1234;
  std::string fingerprint;  // stamped into the report
};

/// Pixel-domain degradation applied to a preprocessed image for `condition`. Motion uses
/// a straight PSF whose direction is drawn from `rng`; every blurred result is re-quantized.
Image apply_condition(const Image& image, const Condition& condition, Rng& rng);

/// Argmax predictions of `heads` on the manifest under `condition`. Sample i draws its
/// blur parameters from stream i of options.seed.
EvalReport evaluate(const HeadStack& heads, const Encoder& encoder, const std::vector<ManifestEntry>& manifest,
                    const Condition& condition, const EvalOptions& options);

struct SweepAxis {
  KernelFamily family = KernelFamily::motion_psf;
  std::vector<double> params;
};

/// Parses "motion:5,10,15".
SweepAxis parse_sweep_axis(const std::string& spec);

struct SweepCell {
  Condition condition;
  EvalReport report;
};

std::vector<SweepCell> blur_sweep(const HeadStack& heads, const Encoder& encoder,
                                  const std::vector<ManifestEntry>& manifest, const std::vector<SweepAxis>& grid,
                                  const EvalOptions& options);

/// Rows are families, columns the union of parameters; cells without a run are empty.
std::string sweep_csv(const std::vector<SweepCell>& cells);

struct DeltaRow {
  std::string condition;
  double accuracy_a = 0.0;
  double accuracy_b = 0.0;
  double delta = 0.0;  // a - b
  long n_a = 0;
  long n_b = 0;
};

/// Throws when the two reports do not cover the same conditions.
std::vector<DeltaRow> compare_reports(const EvalReport& a, const EvalReport& b);

nlohmann::json deltas_to_json(const std::vector<DeltaRow>& rows);

}  // namespace s2b
