// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration (YAML on disk) and head-stack checkpoints (JSON on disk).

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2b/evaluation.hpp"
#include "s2b/model.hpp"
#include "s2b/training.hpp"

namespace s2b {

struct EvalConfig {
  std::uint64_t seed = 1234;
  std::vector<SweepAxis> grid{{KernelFamily::motion_psf, {5.0, 10.0, 15.0}}};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  EncoderConfig encoder;
  PreprocessConfig preprocess;
  BlurPolicy blur;
  PhaseConfig teacher = PhaseConfig::teacher_defaults();
  PhaseConfig student = PhaseConfig::student_defaults();
  EvalConfig eval;

  /// Phase configs with the run seed and the shared blur policy filled in.
  PhaseConfig teacher_phase() const;
  PhaseConfig student_phase() const;
  void validate() const;
};

/// Canonical JSON form; object keys are sorted, so equal configs serialize identically.
nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BlurPolicy& policy);
BlurPolicy blur_policy_from_json(const nlohmann::json& j, const BlurPolicy& defaults = {});
nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

/// Parses a YAML document into the generic JSON tree used by the loaders.
nlohmann::json yaml_to_json(const std::string& yaml_text);
std::string json_to_yaml(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_yaml(const RunConfig& config);

/// Applies "dotted.key=value" (value parsed as a YAML scalar or flow sequence).
void apply_override(RunConfig& config, const std::string& assignment);

/// SHA-256 of the canonical JSON form.
std::string config_fingerprint(const RunConfig& config);

/// Raised when a checkpoint does not match what the caller expects.
class FingerprintMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  HeadStack heads;
  EncoderConfig encoder;
  std::string encoder_id;
  std::string run_fingerprint;
  std::string rng_state;
  long steps = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

/// Hash of what makes a head stack usable: encoder id, role, layer dims and dropout.
std::string head_fingerprint(const HeadStack& heads, const std::string& encoder_id);

/// Atomic write; doubles are serialized with round-trip precision.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

struct CheckpointExpectation {
  std::string encoder_id;  // empty = accept any
  bool allow_mismatch = false;
};

/// Verifies the stored weight hash (corruption is always fatal) and the fingerprint
/// against `expect`; a mismatch throws FingerprintMismatch unless allow_mismatch is set,
/// in which case it is logged as a warning.
Checkpoint load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expect = {});

}  // namespace s2b
