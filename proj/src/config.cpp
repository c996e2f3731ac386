// SPDX-License-Identifier: Apache-2.0
#include "s2b/config.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "s2b/hash.hpp"

namespace s2b {

using nlohmann::json;

namespace {

// Strict reader: every key of the object must be consumed, type errors name the key.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config section '" + path_ + "' must be a mapping");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + path_ + key + "': " + e.what());
    }
  }

  template <typename T>
  void get_pair(const char* key, T& lo, T& hi) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2) throw std::invalid_argument("config key '" + path_ + key + "' must be [lo, hi]");
    try {
      lo = v[0].get<T>();
      hi = v[1].get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + path_ + key + "': " + e.what());
    }
  }

  const json* section(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  std::string child(const char* key) const { return path_ + key + "."; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw std::invalid_argument("unknown config key '" + path_ + k + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json augment_json(const AugmentPolicy& a) {
  return {{"brightness", a.brightness},
          {"contrast", a.contrast},
          {"saturation", a.saturation},
          {"hue", a.hue},
          {"rotation_deg", a.rotation_deg},
          {"p_jpeg", a.p_jpeg},
          {"jpeg_q_range", {a.jpeg_quality_min, a.jpeg_quality_max}},
          {"blur_mode", std::string(to_string(a.blur_mode))},
          {"p_blur", a.p_blur}};
}

void read_augment(const json& j, const std::string& path, AugmentPolicy& a) {
  Reader r(j, path);
  r.get("brightness", a.brightness);
  r.get("contrast", a.contrast);
  r.get("saturation", a.saturation);
  r.get("hue", a.hue);
  r.get("rotation_deg", a.rotation_deg);
  r.get("p_jpeg", a.p_jpeg);
  r.get_pair("jpeg_q_range", a.jpeg_quality_min, a.jpeg_quality_max);
  std::string mode(to_string(a.blur_mode));
  r.get("blur_mode", mode);
  a.blur_mode = augment_blur_from_string(mode);
  r.get("p_blur", a.p_blur);
  r.finish();
}

json loss_json(const LossWeights& w) {
  return {{"lambda_cls", w.lambda_cls},
          {"lambda_feat", w.lambda_feat},
          {"lambda_kd", w.lambda_kd},
          {"lambda_ordcon", w.lambda_ordcon},
          {"temperature", w.temperature},
          {"tau", w.tau},
          {"alpha_focal", {w.alpha_focal[0], w.alpha_focal[1]}},
          {"gamma_focal", w.gamma_focal}};
}

void read_loss(const json& j, const std::string& path, LossWeights& w) {
  Reader r(j, path);
  r.get("lambda_cls", w.lambda_cls);
  r.get("lambda_feat", w.lambda_feat);
  r.get("lambda_kd", w.lambda_kd);
  r.get("lambda_ordcon", w.lambda_ordcon);
  r.get("temperature", w.temperature);
  r.get("tau", w.tau);
  if (const json* a = r.section("alpha_focal")) {
    if (a->is_number()) {
      w.alpha_focal = {a->get<double>(), a->get<double>()};
    } else if (a->is_array() && a->size() == 2) {
      w.alpha_focal = {(*a)[0].get<double>(), (*a)[1].get<double>()};
    } else {
      throw std::invalid_argument("config key '" + path + "alpha_focal' must be a number or [real, fake]");
    }
  }
  r.get("gamma_focal", w.gamma_focal);
  r.finish();
}

json phase_json(const PhaseConfig& p) {
  return {{"epochs", p.epochs},
          {"lr", p.base_lr},
          {"weight_decay", p.weight_decay},
          {"batch_size", p.batch_size},
          {"schedule", p.schedule},
          {"grad_clip", p.grad_clip},
          {"augment", augment_json(p.augmentation)},
          {"loss", loss_json(p.loss_weights)}};
}

void read_phase(const json& j, const std::string& path, PhaseConfig& p) {
  Reader r(j, path);
  r.get("epochs", p.epochs);
  r.get("lr", p.base_lr);
  r.get("weight_decay", p.weight_decay);
  r.get("batch_size", p.batch_size);
  r.get("schedule", p.schedule);
  r.get("grad_clip", p.grad_clip);
  if (const json* a = r.section("augment")) read_augment(*a, r.child("augment"), p.augmentation);
  if (const json* l = r.section("loss")) read_loss(*l, r.child("loss"), p.loss_weights);
  r.finish();
}

json scalar_from_yaml(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  static const std::regex integer(R"([-+]?[0-9]+)");
  static const std::regex real(R"([-+]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][-+]?[0-9]+)?)");
  if (std::regex_match(s, integer)) return std::stoll(s);
  if (std::regex_match(s, real)) return std::stod(s);
  return s;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_from_yaml(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

void emit(YAML::Emitter& out, const json& j) {
  if (j.is_object()) {
    out << YAML::BeginMap;
    for (const auto& [k, v] : j.items()) {
      out << YAML::Key << k << YAML::Value;
      emit(out, v);
    }
    out << YAML::EndMap;
  } else if (j.is_array()) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& v : j) emit(out, v);
    out << YAML::EndSeq;
  } else if (j.is_string()) {
    out << j.get<std::string>();
  } else if (j.is_null()) {
    out << YAML::Null;
  } else {
    out << j.dump();  // numbers and booleans keep their exact JSON spelling
  }
}

}  // namespace

json to_json(const BlurPolicy& p) {
  return {{"L_max", p.max_length},
          {"jitter_std", p.jitter_std},
          {"p_d", p.p_defocus},
          {"sigma_defocus_max", p.sigma_defocus_max},
          {"p_jpeg", p.p_jpeg},
          {"q_range", {p.jpeg_quality_min, p.jpeg_quality_max}},
          {"p_noise", p.p_noise},
          {"noise_range", {p.noise_sigma_min, p.noise_sigma_max}},
          {"p_resample", p.p_resample},
          {"scale_range", {p.scale_min, p.scale_max}},
          {"mode", std::string(to_string(p.mode))}};
}

BlurPolicy blur_policy_from_json(const json& j, const BlurPolicy& defaults) {
  BlurPolicy p = defaults;
  Reader r(j, "blur.");
  r.get("L_max", p.max_length);
  r.get("jitter_std", p.jitter_std);
  r.get("p_d", p.p_defocus);
  r.get("sigma_defocus_max", p.sigma_defocus_max);
  r.get("p_jpeg", p.p_jpeg);
  r.get_pair("q_range", p.jpeg_quality_min, p.jpeg_quality_max);
  r.get("p_noise", p.p_noise);
  r.get_pair("noise_range", p.noise_sigma_min, p.noise_sigma_max);
  r.get("p_resample", p.p_resample);
  r.get_pair("scale_range", p.scale_min, p.scale_max);
  std::string mode(to_string(p.mode));
  r.get("mode", mode);
  p.mode = blur_mode_from_string(mode);
  r.finish();
  return p;
}

json to_json(const EncoderConfig& c) {
  return {{"image_size", c.image_size}, {"patch", c.patch}, {"embed_dim", c.embed_dim},
          {"depth", c.depth},           {"heads", c.heads}, {"seed", c.seed}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  Reader r(j, "encoder.");
  r.get("image_size", c.image_size);
  r.get("patch", c.patch);
  r.get("embed_dim", c.embed_dim);
  r.get("depth", c.depth);
  r.get("heads", c.heads);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

PhaseConfig RunConfig::teacher_phase() const {
  PhaseConfig p = teacher;
  p.seed = seed;
  p.augmentation.blur = blur;
  return p;
}

PhaseConfig RunConfig::student_phase() const {
  PhaseConfig p = student;
  p.seed = seed;
  p.augmentation.blur = blur;
  return p;
}

void RunConfig::validate() const {
  encoder.validate();
  preprocess.validate();
  blur.validate();
  teacher_phase().validate(Phase::teacher);
  student_phase().validate(Phase::student);
  if (preprocess.crop != encoder.image_size) {
    throw std::invalid_argument("preprocess.crop must equal encoder.image_size");
  }
}

json to_json(const RunConfig& c) {
  json grid = json::object();
  for (const SweepAxis& a : c.eval.grid) grid[std::string(to_string(a.family))] = a.params;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"encoder", to_json(c.encoder)},
          {"preprocess", {{"resize", c.preprocess.resize}, {"crop", c.preprocess.crop}}},
          {"blur", to_json(c.blur)},
          {"teacher", phase_json(c.teacher)},
          {"student", phase_json(c.student)},
          {"eval", {{"seed", c.eval.seed}, {"grid", grid}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.is_null()) return c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  if (const json* e = r.section("encoder")) c.encoder = encoder_config_from_json(*e);
  if (const json* p = r.section("preprocess")) {
    Reader pr(*p, "preprocess.");
    pr.get("resize", c.preprocess.resize);
    pr.get("crop", c.preprocess.crop);
    pr.finish();
  }
  if (const json* b = r.section("blur")) c.blur = blur_policy_from_json(*b, c.blur);
  if (const json* t = r.section("teacher")) read_phase(*t, "teacher.", c.teacher);
  if (const json* s = r.section("student")) read_phase(*s, "student.", c.student);
  if (const json* e = r.section("eval")) {
    Reader er(*e, "eval.");
    er.get("seed", c.eval.seed);
    if (const json* g = er.section("grid")) {
      if (!g->is_object()) throw std::invalid_argument("eval.grid must map family -> [params]");
      c.eval.grid.clear();
      for (const auto& [fam, params] : g->items()) {
        c.eval.grid.push_back({kernel_family_from_string(fam), params.get<std::vector<double>>()});
      }
    }
    er.finish();
  }
  r.finish();
  return c;
}

json yaml_to_json(const std::string& yaml_text) {
  try {
    return node_to_json(YAML::Load(yaml_text));
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
}

std::string json_to_yaml(const json& j) {
  YAML::Emitter out;
  emit(out, j);
  return std::string(out.c_str()) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = run_config_from_json(yaml_to_json(ss.str()));
  return c;
}

std::string run_config_yaml(const RunConfig& config) { return json_to_yaml(to_json(config)); }

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  json j = to_json(config);
  json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!node->is_object() || !node->contains(part)) throw std::invalid_argument("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  *node = yaml_to_json(assignment.substr(eq + 1));
  config = run_config_from_json(j);
}

std::string config_fingerprint(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

}  // namespace s2b
