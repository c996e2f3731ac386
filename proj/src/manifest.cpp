// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "s2b/data_io.hpp"
#include "s2b/hash.hpp"

namespace s2b {

namespace fs = std::filesystem;
using nlohmann::json;

ManifestError::ManifestError(int line, std::string field, const std::string& what)
    : std::runtime_error(field.empty() ? fmt::format("manifest line {}: {}", line, what)
                                       : fmt::format("manifest line {}, field '{}': {}", line, field, what)),
      line_(line),
      field_(std::move(field)) {}

fs::path data_root() {
  const char* env = std::getenv(kDataRootEnv);
  return (env != nullptr && *env != '\0') ? fs::path(env) : fs::path("data");
}

std::string_view to_string(BlurScenario scenario) {
  switch (scenario) {
    case BlurScenario::camera_shake: return "camera_shake";
    case BlurScenario::object_motion: return "object_motion";
    case BlurScenario::low_light: return "low_light";
    case BlurScenario::none: return "none";
  }
  return "none";
}

BlurScenario blur_scenario_from_string(std::string_view name) {
  if (name == "camera_shake") return BlurScenario::camera_shake;
  if (name == "object_motion") return BlurScenario::object_motion;
  if (name == "low_light") return BlurScenario::low_light;
  if (name == "none") return BlurScenario::none;
  throw std::invalid_argument("unknown blur scenario: " + std::string(name));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::string required_string(const json& j, const char* field, int line) {
  if (!j.contains(field)) throw ManifestError(line, field, "missing required field");
  if (!j[field].is_string()) throw ManifestError(line, field, "must be a string");
  return j[field].get<std::string>();
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : (base / p).lexically_normal(); }

std::string relativize(const fs::path& base, const fs::path& p) {
  if (p.is_relative()) return p.generic_string();
  const fs::path rel = p.lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const fs::path& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ManifestError(line, "", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ManifestError(line, "", "entry must be a JSON object");

    ManifestEntry e;
    e.id = required_string(j, "id", line);
    if (e.id.empty()) throw ManifestError(line, "id", "must not be empty");
    e.path = resolve(base, required_string(j, "path", line));
    try {
      e.label = label_from_string(required_string(j, "label", line));
    } catch (const std::invalid_argument& err) {
      throw ManifestError(line, "label", err.what());
    }
    e.source = j.contains("source") && j["source"].is_string() ? j["source"].get<std::string>() : "unknown";
    if (j.contains("blur_scenario") && !j["blur_scenario"].is_null()) {
      try {
        e.blur_scenario = blur_scenario_from_string(j["blur_scenario"].get<std::string>());
      } catch (const std::exception& err) {
        throw ManifestError(line, "blur_scenario", err.what());
      }
    }
    if (j.contains("severity_b") && !j["severity_b"].is_null()) {
      if (!j["severity_b"].is_number()) throw ManifestError(line, "severity_b", "must be a number");
      const double b = j["severity_b"].get<double>();
      if (!(b >= 0.0 && b <= 1.0)) throw ManifestError(line, "severity_b", "must lie in [0, 1]");
      e.severity_b = b;
    }
    if (e.blur_scenario.has_value() != e.severity_b.has_value()) {
      throw ManifestError(line, e.severity_b ? "blur_scenario" : "severity_b",
                          "severity_b and blur_scenario must be given together");
    }
    if (j.contains("mask_path") && !j["mask_path"].is_null()) {
      if (!j["mask_path"].is_string()) throw ManifestError(line, "mask_path", "must be a string");
      e.mask_path = resolve(base, j["mask_path"].get<std::string>());
    }
    if (!seen.insert(e.id).second) throw ManifestError(line, "id", "duplicate id '" + e.id + "'");
    if (check_paths) {
      if (!fs::exists(e.path)) throw ManifestError(line, "path", "file not found: " + e.path.string());
      if (e.mask_path && !fs::exists(*e.mask_path)) {
        throw ManifestError(line, "mask_path", "file not found: " + e.mask_path->string());
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  std::string out;
  for (const ManifestEntry& e : entries) {
    json j;
    j["id"] = e.id;
    j["path"] = relativize(base, e.path);
    j["label"] = std::string(to_string(e.label));
    j["source"] = e.source;
    if (e.blur_scenario) j["blur_scenario"] = std::string(to_string(*e.blur_scenario));
    if (e.severity_b) j["severity_b"] = *e.severity_b;
    if (e.mask_path) j["mask_path"] = relativize(base, *e.mask_path);
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::string manifest_hash(const fs::path& path) { return sha256_hex(read_file(path)); }

}  // namespace s2b
