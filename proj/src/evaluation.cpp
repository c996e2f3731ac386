// SPDX-License-Identifier: Apache-2.0
#include "s2b/evaluation.hpp"

#include <algorithm>
#include <numbers>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "s2b/hash.hpp"

namespace s2b {

namespace {

nlohmann::json tally_map_json(const std::map<std::string, Tally>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, t] : m) j[k] = {{"accuracy", t.accuracy()}, {"correct", t.correct}, {"n", t.n}};
  return j;
}

std::map<std::string, Tally> tally_map_from_json(const nlohmann::json& j) {
  std::map<std::string, Tally> m;
  for (const auto& [k, v] : j.items()) m[k] = Tally{v.at("correct").get<long>(), v.at("n").get<long>()};
  return m;
}

}  // namespace

Condition Condition::parse(const std::string& spec) {
  Condition c;
  if (spec == "clean") return c;
  c.clean = false;
  if (spec == "identity") return c;
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("unknown condition '" + spec + "'");
  c.family = kernel_family_from_string(spec.substr(0, colon));
  try {
    std::size_t used = 0;
    c.param = std::stod(spec.substr(colon + 1), &used);
    if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("condition '" + spec + "' has a malformed parameter");
  }
  const double max = family_max_param(c.family);
  switch (c.family) {
    case KernelFamily::motion_psf:
    case KernelFamily::radial:
      if (!(c.param >= 0.0 && c.param <= max)) throw std::invalid_argument("condition parameter out of range: " + spec);
      break;
    case KernelFamily::identity:
      break;
    default:
      parametric_kernel(c.family, c.param, default_window(c.family, c.param));  // range check
  }
  return c;
}

std::string Condition::name() const {
  if (clean) return "clean";
  if (family == KernelFamily::identity) return "identity";
  return fmt::format("{}:{}", to_string(family), param);
}

double Condition::severity() const {
  if (clean || family == KernelFamily::identity) return 0.0;
  return std::min(1.0, param / family_max_param(family));
}

std::string severity_bucket(double b) {
  if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("severity must lie in [0, 1]");
  if (b < 1.0 / 3.0) return "low";
  if (b < 2.0 / 3.0) return "medium";
  return "high";
}

nlohmann::json EvalReport::to_json() const {
  return {{"overall_accuracy", overall_accuracy},
          {"per_condition", tally_map_json(per_condition)},
          {"per_class", tally_map_json(per_class)},
          {"per_severity_bucket", tally_map_json(per_severity_bucket)},
          {"config_fingerprint", config_fingerprint}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.overall_accuracy = j.at("overall_accuracy").get<double>();
  r.per_condition = tally_map_from_json(j.at("per_condition"));
  r.per_class = tally_map_from_json(j.at("per_class"));
  r.per_severity_bucket = tally_map_from_json(j.value("per_severity_bucket", nlohmann::json::object()));
  r.config_fingerprint = j.value("config_fingerprint", "");
  return r;
}

Image apply_condition(const Image& image, const Condition& condition, Rng& rng) {
  if (condition.clean || condition.family == KernelFamily::identity) return image;
  switch (condition.family) {
    case KernelFamily::motion_psf: {
      const double direction = uniform(rng, 0.0, std::numbers::pi);
      const BlurKernel k = rasterize_psf(straight_trajectory(condition.param, direction),
                                         psf_window_for_length(condition.param), family_max_param(condition.family));
      return quantize_8bit(convolve(image, k));
    }
    case KernelFamily::radial:
      return quantize_8bit(radial_blur(image, condition.param));
    default:
      return quantize_8bit(convolve(
          image, parametric_kernel(condition.family, condition.param, default_window(condition.family, condition.param))));
  }
}

EvalReport evaluate(const HeadStack& heads, const Encoder& encoder, const std::vector<ManifestEntry>& manifest,
                    const Condition& condition, const EvalOptions& options) {
  if (manifest.empty()) throw std::invalid_argument("evaluate: empty manifest");
  if (heads.config.input_dim != encoder.embed_dim()) {
    throw std::invalid_argument("evaluate: head input width does not match the encoder");
  }
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(manifest.size()), encoder.embed_dim());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const Image pixels = preprocess(load_image(manifest[i].path), options.preprocess, CropMode::eval_centercrop);
    Rng rng = make_rng(options.seed, i);
    const Image degraded = apply_condition(pixels, condition, rng);
    feats.row(static_cast<Eigen::Index>(i)) = encoder.encode(normalize_channels(degraded)).pooled.transpose();
  }
  const HeadActivations acts = head_forward(heads, feats, false);

  EvalReport report;
  const std::string cname = condition.name();
  const bool synthetic = !(condition.clean || condition.family == KernelFamily::identity);
  long correct = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int pred = acts.u(r, 1) > acts.u(r, 0) ? 1 : 0;
    const bool ok = pred == static_cast<int>(manifest[i].label);
    correct += ok;
    auto bump = [ok](Tally& t) {
      t.correct += ok;
      ++t.n;
    };
    bump(report.per_condition[cname]);
    bump(report.per_class[std::string(to_string(manifest[i].label))]);
    if (synthetic) {
      bump(report.per_severity_bucket[severity_bucket(condition.severity())]);
    } else if (manifest[i].severity_b) {
      bump(report.per_severity_bucket[severity_bucket(*manifest[i].severity_b)]);
    }
  }
  report.overall_accuracy = double(correct) / double(manifest.size());
  if (!options.fingerprint.empty()) {
    report.config_fingerprint = options.fingerprint;
  } else {
    const nlohmann::json basis = {{"encoder", encoder.id()},
                                  {"heads", weights_hash(heads)},
                                  {"resize", options.preprocess.resize},
                                  {"crop", options.preprocess.crop},
                                  {"seed", options.seed}};
    report.config_fingerprint = sha256_hex(basis.dump());
  }
  return report;
}

SweepAxis parse_sweep_axis(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("sweep axis must look like family:p1,p2,...");
  SweepAxis axis;
  axis.family = kernel_family_from_string(spec.substr(0, colon));
  std::string rest = spec.substr(colon + 1);
  std::size_t pos = 0;
  while (pos <= rest.size()) {
    const auto comma = rest.find(',', pos);
    const std::string tok = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok.empty()) throw std::invalid_argument("empty parameter in sweep axis '" + spec + "'");
    axis.params.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return axis;
}

std::vector<SweepCell> blur_sweep(const HeadStack& heads, const Encoder& encoder,
                                  const std::vector<ManifestEntry>& manifest, const std::vector<SweepAxis>& grid,
                                  const EvalOptions& options) {
  if (grid.empty()) throw std::invalid_argument("blur_sweep: empty grid");
  std::vector<SweepCell> cells;
  for (const SweepAxis& axis : grid) {
    if (axis.params.empty()) throw std::invalid_argument("blur_sweep: family without parameters");
    for (double p : axis.params) {
      const Condition c = axis.family == KernelFamily::identity
                              ? Condition::parse("identity")
                              : Condition::parse(fmt::format("{}:{}", to_string(axis.family), p));
      cells.push_back({c, evaluate(heads, encoder, manifest, c, options)});
    }
  }
  return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::vector<std::string> families;
  std::set<double> params;
  std::map<std::pair<std::string, double>, double> value;
  for (const SweepCell& c : cells) {
    const std::string fam = c.condition.clean ? "clean" : std::string(to_string(c.condition.family));
    if (std::find(families.begin(), families.end(), fam) == families.end()) families.push_back(fam);
    params.insert(c.condition.param);
    value[{fam, c.condition.param}] = c.report.overall_accuracy;
  }
  std::string out = "family";
  for (double p : params) out += fmt::format(",{}", p);
  out += '\n';
  for (const std::string& fam : families) {
    out += fam;
    for (double p : params) {
      const auto it = value.find({fam, p});
      out += it == value.end() ? std::string(",") : fmt::format(",{:.6f}", it->second);
    }
    out += '\n';
  }
  return out;
}

std::vector<DeltaRow> compare_reports(const EvalReport& a, const EvalReport& b) {
  std::vector<DeltaRow> rows;
  if (a.per_condition.size() != b.per_condition.size()) {
    throw std::invalid_argument("compare_reports: condition grids differ");
  }
  for (const auto& [name, ta] : a.per_condition) {
    const auto it = b.per_condition.find(name);
    if (it == b.per_condition.end()) throw std::invalid_argument("compare_reports: condition '" + name + "' missing");
    const Tally& tb = it->second;
    rows.push_back({name, ta.accuracy(), tb.accuracy(), ta.accuracy() - tb.accuracy(), ta.n, tb.n});
  }
  return rows;
}

nlohmann::json deltas_to_json(const std::vector<DeltaRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const DeltaRow& r : rows) {
    j.push_back({{"condition", r.condition},
                 {"accuracy_a", r.accuracy_a},
                 {"accuracy_b", r.accuracy_b},
                 {"delta", r.delta},
                 {"n_a", r.n_a},
                 {"n_b", r.n_b}});
  }
  return j;
}

}  // namespace s2b
