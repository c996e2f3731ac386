// SPDX-License-Identifier: Apache-2.0
#pragma once

// Manifests, preprocessing and the synthetic toy dataset.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "s2b/blur.hpp"
#include "s2b/image.hpp"
#include "s2b/rng.hpp"

namespace s2b {

/// Environment variable naming the data cache root.
inline constexpr const char* kDataRootEnv = "S2B_DATA_ROOT";

/// $S2B_DATA_ROOT, or "./data" when unset.
std::filesystem::path data_root();

enum class BlurScenario { camera_shake, object_motion, low_light, none };

std::string_view to_string(BlurScenario scenario);
BlurScenario blur_scenario_from_string(std::string_view name);

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  Label label = Label::real;
  std::string source;
  std::optional<BlurScenario> blur_scenario;
  std::optional<double> severity_b;  // present iff blur_scenario is
  std::optional<std::filesystem::path> mask_path;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Malformed manifest; `line` is 1-based, `field` empty for whole-line problems.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(int line, std::string field, const std::string& what);
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

/// JSON-lines manifest. Relative paths resolve against the manifest's directory. Blank
/// lines are skipped; ids must be unique.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, bool check_paths = true);

/// Paths under the manifest's directory are written relative to it.
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// SHA-256 of the manifest bytes.
std::string manifest_hash(const std::filesystem::path& path);

inline constexpr std::array<float, 3> kChannelMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd{0.229f, 0.224f, 0.225f};

struct PreprocessConfig {
  int resize = 256;
  int crop = 224;

  void validate() const;
};

enum class CropMode { train_randomcrop, eval_centercrop };

struct CropWindow {
  int top = 0;
  int left = 0;
  int size = 0;
};

/// Center window in eval mode; uniformly random placement in train mode (needs rng).
CropWindow choose_crop(const PreprocessConfig& config, CropMode mode, Rng* rng);

/// Square resize to config.resize then crop to config.crop. Output stays in [0, 1].
Image preprocess(const Image& image, const PreprocessConfig& config, CropMode mode, Rng* rng = nullptr);

/// Nearest-neighbour resize of a mask to `size` x `size` followed by the same crop.
Mask preprocess_mask(const Mask& mask, const PreprocessConfig& config, const CropWindow& window);

Mask load_mask(const std::filesystem::path& path);

/// (x - mean) / std per channel. Only the encoder consumes normalized images.
Image normalize_channels(const Image& image);
Image denormalize_channels(const Image& image);

/// One toy image: a 1/f^beta colour texture; fakes add a nearest-neighbour 2x upsampled
/// noise layer whose block edges carry excess mid/high-frequency energy. Quantized to 8 bits.
Image make_toy_image(Rng& rng, int size, Label label);

struct ToyDatasetInfo {
  std::filesystem::path manifest;
  int n_per_class = 0;
  int image_size = 0;
  double spectrum_gap = 0.0;  // fake minus real, band [0.25, 0.5]
};

/// Writes n_per_class real and fake PNGs plus manifest.jsonl under out_dir. Sample i
/// draws from stream i of `seed`, so the output does not depend on generation order.
ToyDatasetInfo generate_toy_dataset(int n_per_class, std::uint64_t seed, const std::filesystem::path& out_dir,
                                    int image_size = 112);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace s2b
