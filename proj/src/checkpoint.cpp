// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "s2b/config.hpp"
#include "s2b/hash.hpp"

namespace s2b {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "s2b-heads-v1";

json linear_json(const Linear& l) {
  std::vector<double> w(static_cast<std::size_t>(l.weight.size()));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w[static_cast<std::size_t>(r * l.weight.cols() + c)] = l.weight(r, c);
  }
  return {{"rows", l.weight.rows()},
          {"cols", l.weight.cols()},
          {"weight", w},
          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}};
}

Linear linear_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto w = j.at("weight").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (rows <= 0 || cols <= 0 || w.size() != static_cast<std::size_t>(rows * cols) ||
      b.size() != static_cast<std::size_t>(rows)) {
    throw std::runtime_error("checkpoint layer has inconsistent shape");
  }
  Linear l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    l.bias(r) = b[static_cast<std::size_t>(r)];
  }
  return l;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string head_fingerprint(const HeadStack& heads, const std::string& encoder_id) {
  const json basis = {{"encoder_id", encoder_id},
                      {"role", std::string(to_string(heads.config.role))},
                      {"input_dim", heads.config.input_dim},
                      {"projection_dims", heads.config.projection_dims},
                      {"classifier_hidden", heads.config.classifier_hidden},
                      {"dropout", heads.config.dropout}};
  return sha256_hex(basis.dump());
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const HeadStack& h = ck.heads;
  json proj = json::array();
  for (const Linear& l : h.params.projection) proj.push_back(linear_json(l));
  json cls = json::array();
  for (const Linear& l : h.params.classifier) cls.push_back(linear_json(l));
  const json j = {
      {"format", kFormat},
      {"role", std::string(to_string(h.config.role))},
      {"encoder", to_json(ck.encoder)},
      {"encoder_id", ck.encoder_id},
      {"head_config",
       {{"input_dim", h.config.input_dim},
        {"projection_dims", h.config.projection_dims},
        {"classifier_hidden", h.config.classifier_hidden},
        {"dropout", h.config.dropout}}},
      {"standardizer",
       {{"mean", std::vector<double>(h.input_mean.data(), h.input_mean.data() + h.input_mean.size())},
        {"scale", std::vector<double>(h.input_scale.data(), h.input_scale.data() + h.input_scale.size())}}},
      {"layers", {{"projection", proj}, {"classifier", cls}}},
      {"fingerprint", head_fingerprint(h, ck.encoder_id)},
      {"run_fingerprint", ck.run_fingerprint},
      {"rng_state", ck.rng_state},
      {"steps", ck.steps},
      {"metrics", ck.metrics},
      {"weights_sha256", weights_hash(h)}};
  write_file_atomic(path, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expect) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  Checkpoint ck;
  try {
    if (j.at("format").get<std::string>() != kFormat) throw std::runtime_error("unsupported checkpoint format");
    HeadStack& h = ck.heads;
    h.config.role = role_from_string(j.at("role").get<std::string>());
    const json& hc = j.at("head_config");
    h.config.input_dim = hc.at("input_dim").get<int>();
    h.config.projection_dims = hc.at("projection_dims").get<std::vector<int>>();
    h.config.classifier_hidden = hc.at("classifier_hidden").get<int>();
    h.config.dropout = hc.at("dropout").get<double>();
    h.config.validate();
    h.input_mean = vector_from_json(j.at("standardizer").at("mean"));
    h.input_scale = vector_from_json(j.at("standardizer").at("scale"));
    for (const json& l : j.at("layers").at("projection")) h.params.projection.push_back(linear_from_json(l));
    for (const json& l : j.at("layers").at("classifier")) h.params.classifier.push_back(linear_from_json(l));
    ck.encoder = encoder_config_from_json(j.at("encoder"));
    ck.encoder_id = j.at("encoder_id").get<std::string>();
    ck.run_fingerprint = j.value("run_fingerprint", "");
    ck.rng_state = j.value("rng_state", "");
    ck.steps = j.value("steps", 0L);
    ck.metrics = j.value("metrics", json::object());
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is malformed: " + e.what());
  }

  if (weights_hash(ck.heads) != j.at("weights_sha256").get<std::string>()) {
    throw std::runtime_error("checkpoint " + path.string() + " is corrupted: weight hash mismatch");
  }
  std::string problem;
  if (head_fingerprint(ck.heads, ck.encoder_id) != j.at("fingerprint").get<std::string>()) {
    problem = "stored fingerprint does not match the stored head configuration";
  } else if (!expect.encoder_id.empty() && expect.encoder_id != ck.encoder_id) {
    problem = "checkpoint was trained on encoder '" + ck.encoder_id + "' but '" + expect.encoder_id + "' is loaded";
  }
  if (!problem.empty()) {
    if (!expect.allow_mismatch) throw FingerprintMismatch(path.string() + ": " + problem);
    spdlog::warn("{}: {} (continuing because mismatches are allowed)", path.string(), problem);
  }
  return ck;
}

}  // namespace s2b
