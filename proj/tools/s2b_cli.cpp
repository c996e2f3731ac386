// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: dataset generation, pair synthesis, both training phases,
// evaluation, analyses and report comparison.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "s2b/analysis.hpp"
#include "s2b/config.hpp"
#include "s2b/evaluation.hpp"
#include "s2b/hash.hpp"
#include "s2b/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s2b;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args, bool seed_required) {
  cmd->add_option("--config", args.config_path, "YAML run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set student.epochs=5");
  auto* seed = cmd->add_option("--seed", args.seed, "Run seed (overrides the config)");
  if (seed_required) seed->required();
}

RunConfig resolve_config(const ConfigArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  for (const std::string& o : args.overrides) apply_override(cfg, o);
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

json to_json(const DegradationRecord& d) {
  json j = {{"family", std::string(to_string(d.kernel.family))},
            {"kernel_size", d.kernel.size},
            {"severity_b", d.severity()},
            {"trajectory_length", d.trajectory_length},
            {"trajectory_direction", d.trajectory_direction},
            {"mode", std::string(to_string(d.mode))}};
  j["defocus_sigma"] = d.defocus_sigma ? json(*d.defocus_sigma) : json(nullptr);
  j["jpeg_quality"] = d.jpeg_quality ? json(*d.jpeg_quality) : json(nullptr);
  j["noise_sigma"] = d.noise_sigma ? json(*d.noise_sigma) : json(nullptr);
  j["resample_scale"] = d.resample_scale ? json(*d.resample_scale) : json(nullptr);
  return j;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

struct LoadedModel {
  Checkpoint checkpoint;
  std::unique_ptr<Encoder> encoder;
  RunConfig config;  // the run that produced the checkpoint
};

LoadedModel load_model(const fs::path& path, bool allow_mismatch) {
  LoadedModel m;
  // Peek at the encoder config so the expected id comes from this build's encoder code.
  const json raw = read_json(path);
  m.encoder = make_encoder(encoder_config_from_json(raw.at("encoder")));
  m.checkpoint = load_checkpoint(path, {m.encoder->id(), allow_mismatch});
  if (m.checkpoint.metrics.contains("config")) m.config = run_config_from_json(m.checkpoint.metrics.at("config"));
  return m;
}

std::vector<Image> load_preprocessed(const std::vector<ManifestEntry>& entries, const PreprocessConfig& pp) {
  std::vector<Image> images;
  images.reserve(entries.size());
  for (const ManifestEntry& e : entries) images.push_back(preprocess(load_image(e.path), pp, CropMode::eval_centercrop));
  return images;
}

// ---- subcommands -------------------------------------------------------------------

int cmd_gen_toy(const fs::path& out, int n_per_class, std::uint64_t seed, int size) {
  const ToyDatasetInfo info = generate_toy_dataset(n_per_class, seed, out, size);
  fmt::print("manifest: {}\nspectrum_gap: {:.4f}\n", info.manifest.string(), info.spectrum_gap);
  return 0;
}

int cmd_synth_pairs(const fs::path& manifest_path, const fs::path& out, const std::string& policy_path,
                    std::uint64_t seed) {
  BlurPolicy policy;
  if (!policy_path.empty()) {
    const json doc = yaml_to_json(read_file(policy_path));
    policy = blur_policy_from_json(doc.contains("blur") ? doc.at("blur") : doc);
  }
  policy.validate();
  const auto entries = load_manifest(manifest_path);
  const std::string fingerprint = sha256_hex(
      json{{"policy", to_json(policy)}, {"seed", seed}, {"manifest", manifest_hash(manifest_path)}}.dump());
  fs::create_directories(out / "blurred");
  // Both paths in a sidecar record are relative to the sidecar's directory.
  std::string sidecar;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ManifestEntry& e = entries[i];
    Rng rng = make_rng(seed, i);
    std::optional<Mask> mask;
    if (e.mask_path) mask = load_mask(*e.mask_path);
    const PairedSample pair = synthesize_pair(load_image(e.path), e.label, policy, rng, mask ? &*mask : nullptr);
    const fs::path rel = fs::path("blurred") / (e.id + ".png");
    save_image(pair.blurred, out / rel);
    json rec = {{"id", e.id},
                {"sharp_path", fs::relative(e.path, out).generic_string()},
                {"blurred_path", rel.string()},
                {"label", std::string(to_string(e.label))},
                {"degradation", to_json(pair.degradation)},
                {"fingerprint", fingerprint}};
    sidecar += rec.dump() + "\n";
  }
  write_file_atomic(out / "pairs.jsonl", sidecar);
  spdlog::info("wrote {} pairs to {}", entries.size(), out.string());
  return 0;
}

int cmd_train_teacher(const fs::path& manifest_path, const fs::path& out, const ConfigArgs& args) {
  RunConfig cfg = resolve_config(args);
  fs::create_directories(out);
  const auto encoder = make_encoder(cfg.encoder);
  const auto entries = load_manifest(manifest_path);
  const TrainingSet data = TrainingSet::load(entries, cfg.preprocess);
  JsonlWriter log(out / "train_log.jsonl");
  TrainOptions opts{cfg.preprocess, log.as_logger(), {}};
  const std::string encoder_before = encoder->weights_hash();
  const TrainResult result = train_teacher(data, cfg.teacher_phase(), *encoder, opts);
  if (encoder->weights_hash() != encoder_before) throw std::logic_error("encoder weights changed during training");

  Checkpoint ck;
  ck.heads = result.heads;
  ck.encoder = cfg.encoder;
  ck.encoder_id = encoder->id();
  ck.run_fingerprint = config_fingerprint(cfg);
  ck.rng_state = result.rng_state;
  ck.steps = result.steps;
  ck.metrics = {{"phase", "teacher"},
                {"train_accuracy", result.train_accuracy},
                {"config", to_json(cfg)},
                {"manifest_sha256", manifest_hash(manifest_path)},
                {"encoder_weights_sha256", encoder_before}};
  save_checkpoint(ck, out / "teacher.ckpt.json");
  write_file_atomic(out / "config.yaml", run_config_yaml(cfg));
  fmt::print("teacher train accuracy: {:.4f}\n", result.train_accuracy);
  return 0;
}

int cmd_distill(const fs::path& manifest_path, const fs::path& teacher_path, const fs::path& out,
                const ConfigArgs& args, bool allow_mismatch) {
  RunConfig cfg = resolve_config(args);
  fs::create_directories(out);
  const auto encoder = make_encoder(cfg.encoder);
  const Checkpoint teacher = load_checkpoint(teacher_path, {encoder->id(), allow_mismatch});
  if (teacher.heads.config.role != Role::teacher) throw std::invalid_argument("--teacher must be a teacher checkpoint");
  const auto entries = load_manifest(manifest_path);
  const TrainingSet data = TrainingSet::load(entries, cfg.preprocess);
  JsonlWriter log(out / "train_log.jsonl");
  TrainOptions opts{cfg.preprocess, log.as_logger(), {}};

  const std::string encoder_before = encoder->weights_hash();
  const std::string teacher_before = weights_hash(teacher.heads);
  const TrainResult result = distill_student(data, teacher.heads, cfg.student_phase(), *encoder, opts);
  const std::string encoder_after = encoder->weights_hash();
  const std::string teacher_after = weights_hash(teacher.heads);
  if (encoder_after != encoder_before || teacher_after != teacher_before) {
    throw std::logic_error("frozen weights changed during distillation");
  }

  Checkpoint ck;
  ck.heads = result.heads;
  ck.encoder = cfg.encoder;
  ck.encoder_id = encoder->id();
  ck.run_fingerprint = config_fingerprint(cfg);
  ck.rng_state = result.rng_state;
  ck.steps = result.steps;
  ck.metrics = {{"phase", "student"},
                {"train_accuracy", result.train_accuracy},
                {"config", to_json(cfg)},
                {"manifest_sha256", manifest_hash(manifest_path)},
                {"teacher_checkpoint_sha256", sha256_hex(read_file(teacher_path))},
                {"encoder_weights_sha256_before", encoder_before},
                {"encoder_weights_sha256_after", encoder_after},
                {"teacher_weights_sha256_before", teacher_before},
                {"teacher_weights_sha256_after", teacher_after}};
  save_checkpoint(ck, out / "student.ckpt.json");
  write_file_atomic(out / "config.yaml", run_config_yaml(cfg));
  fmt::print("student train accuracy: {:.4f}\n", result.train_accuracy);
  return 0;
}

EvalOptions eval_options(const LoadedModel& m, const fs::path& manifest_path, std::uint64_t seed,
                         const std::string& what) {
  EvalOptions opts;
  opts.preprocess = m.config.preprocess;
  opts.seed = seed;
  opts.fingerprint = sha256_hex(json{{"run", m.checkpoint.run_fingerprint},
                                     {"heads", weights_hash(m.checkpoint.heads)},
                                     {"manifest", manifest_hash(manifest_path)},
                                     {"seed", seed},
                                     {"what", what}}
                                    .dump());
  return opts;
}

int cmd_evaluate(const fs::path& ckpt, const fs::path& manifest_path, const std::string& condition,
                 std::optional<std::uint64_t> seed, const fs::path& out, bool allow_mismatch) {
  const LoadedModel m = load_model(ckpt, allow_mismatch);
  const Condition c = Condition::parse(condition);
  const auto entries = load_manifest(manifest_path);
  const EvalReport r =
      evaluate(m.checkpoint.heads, *m.encoder, entries, c, eval_options(m, manifest_path, seed.value_or(m.config.eval.seed), c.name()));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, r.to_json());
  fmt::print("{}: accuracy {:.4f} (n={})\n", c.name(), r.overall_accuracy, entries.size());
  return 0;
}

json sweep_json(const std::vector<SweepCell>& cells) {
  json arr = json::array();
  for (const SweepCell& c : cells) {
    arr.push_back({{"condition", c.condition.name()}, {"severity_b", c.condition.severity()}, {"report", c.report.to_json()}});
  }
  return arr;
}

int cmd_blur_sweep(const fs::path& ckpt, const fs::path& manifest_path, const std::vector<std::string>& grid_specs,
                   std::optional<std::uint64_t> seed, const fs::path& out, bool include_clean, bool allow_mismatch) {
  const LoadedModel m = load_model(ckpt, allow_mismatch);
  std::vector<SweepAxis> grid;
  for (const std::string& s : grid_specs) grid.push_back(parse_sweep_axis(s));
  if (grid.empty()) grid = m.config.eval.grid;
  const auto entries = load_manifest(manifest_path);
  const std::uint64_t eval_seed = seed.value_or(m.config.eval.seed);
  const EvalOptions opts = eval_options(m, manifest_path, eval_seed, "sweep");
  std::vector<SweepCell> cells;
  if (include_clean) {
    const Condition clean;
    cells.push_back({clean, evaluate(m.checkpoint.heads, *m.encoder, entries, clean, opts)});
  }
  for (SweepCell& c : blur_sweep(m.checkpoint.heads, *m.encoder, entries, grid, opts)) cells.push_back(std::move(c));
  fs::create_directories(out);
  write_json(out / "sweep.json", {{"fingerprint", opts.fingerprint}, {"cells", sweep_json(cells)}});
  write_file_atomic(out / "sweep.csv", sweep_csv(cells));
  for (const SweepCell& c : cells) fmt::print("{:>14}: {:.4f}\n", c.condition.name(), c.report.overall_accuracy);
  return 0;
}

std::pair<std::vector<Image>, std::vector<Image>> split_by_label(const std::vector<ManifestEntry>& entries,
                                                                 const std::vector<Image>& images) {
  std::vector<Image> real, fake;
  for (std::size_t i = 0; i < entries.size(); ++i) (entries[i].label == Label::real ? real : fake).push_back(images[i]);
  return {real, fake};
}

json spectrum_json(const RadialSpectrum& s) { return {{"bin_centers", s.bin_centers}, {"energy", s.energy}}; }

int cmd_analyze(const std::string& kind, const fs::path& manifest_path, const std::string& ckpt, const fs::path& out,
                const ConfigArgs& args, double motion_length, const std::string& sizes_text, int index, int n_bins,
                bool allow_mismatch) {
  // The encoder and preprocessing come from the checkpoint's run when one is given.
  RunConfig cfg = resolve_config(args);
  std::unique_ptr<Encoder> encoder;
  if (!ckpt.empty()) {
    LoadedModel m = load_model(ckpt, allow_mismatch);
    encoder = std::move(m.encoder);
    cfg.preprocess = m.config.preprocess;
  } else {
    encoder = make_encoder(cfg.encoder);
  }
  const auto entries = load_manifest(manifest_path);
  const std::vector<Image> images = load_preprocessed(entries, cfg.preprocess);
  const std::string fingerprint = sha256_hex(json{{"kind", kind},
                                                  {"encoder", encoder->id()},
                                                  {"manifest", manifest_hash(manifest_path)},
                                                  {"preprocess", {cfg.preprocess.resize, cfg.preprocess.crop}},
                                                  {"seed", cfg.eval.seed}}
                                                 .dump());
  fs::create_directories(out);

  if (kind == "spectrum") {
    const auto [real, fake] = split_by_label(entries, images);
    const Condition motion = Condition::parse(fmt::format("motion:{}", motion_length));
    std::vector<Image> blurred(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      Rng rng = make_rng(cfg.eval.seed, i);
      blurred[i] = apply_condition(images[i], motion, rng);
    }
    const auto [real_b, fake_b] = split_by_label(entries, blurred);
    const double gap_sharp = spectrum_gap(real, fake, 0.25, 0.5, n_bins);
    const double gap_blur = spectrum_gap(real_b, fake_b, 0.25, 0.5, n_bins);
    const RadialSpectrum sr = mean_spectrum(real, n_bins), sf = mean_spectrum(fake, n_bins);
    const RadialSpectrum br = mean_spectrum(real_b, n_bins), bf = mean_spectrum(fake_b, n_bins);
    write_json(out / "spectrum.json", {{"fingerprint", fingerprint},
                                       {"band", {0.25, 0.5}},
                                       {"motion_length", motion_length},
                                       {"gap_sharp", gap_sharp},
                                       {"gap_blurred", gap_blur},
                                       {"real_sharp", spectrum_json(sr)},
                                       {"fake_sharp", spectrum_json(sf)},
                                       {"real_blurred", spectrum_json(br)},
                                       {"fake_blurred", spectrum_json(bf)}});
    plot_lines(out / "spectrum.png", "radial spectrum", "frequency (cycles/px)", "log10 power",
               {{"real", sr.bin_centers, sr.energy},
                {"fake", sf.bin_centers, sf.energy},
                {fmt::format("real L={}", motion_length), br.bin_centers, br.energy},
                {fmt::format("fake L={}", motion_length), bf.bin_centers, bf.energy}});
    fmt::print("spectrum gap sharp {:.4f}, blurred {:.4f}\n", gap_sharp, gap_blur);
  } else if (kind == "attention") {
    const SimilarityCurve curve = attention_similarity(*encoder, images, parse_int_list(sizes_text));
    write_json(out / "attention.json",
               {{"fingerprint", fingerprint}, {"kernel_sizes", curve.kernel_sizes}, {"similarity", curve.similarity}});
    std::vector<double> xs(curve.kernel_sizes.begin(), curve.kernel_sizes.end());
    plot_lines(out / "attention.png", "attention similarity", "kernel size", "cosine similarity",
               {{"mean", xs, curve.similarity}});
    for (std::size_t i = 0; i < xs.size(); ++i) fmt::print("size {:>3}: {:.4f}\n", curve.kernel_sizes[i], curve.similarity[i]);
  } else if (kind == "patchsim") {
    if (index < 0 || static_cast<std::size_t>(index) >= images.size()) throw std::invalid_argument("--index out of range");
    const Image& clean = images[static_cast<std::size_t>(index)];
    const Image blurred = quantize_8bit(convolve(clean, line_kernel(static_cast<int>(motion_length))));
    const Eigen::MatrixXd a = patch_similarity_matrix(*encoder, clean);
    const Eigen::MatrixXd b = patch_similarity_matrix(*encoder, blurred);
    auto rows = [](const Eigen::MatrixXd& m) {
      json r = json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const Eigen::VectorXd row = m.row(i).transpose();
        r.push_back(std::vector<double>(row.data(), row.data() + row.size()));
      }
      return r;
    };
    write_json(out / "patchsim.json", {{"fingerprint", fingerprint},
                                       {"id", entries[static_cast<std::size_t>(index)].id},
                                       {"kernel_size", static_cast<int>(motion_length)},
                                       {"clean", rows(a)},
                                       {"blurred", rows(b)},
                                       {"mean_clean", a.mean()},
                                       {"mean_blurred", b.mean()}});
    // Shared colour range so the two maps are comparable.
    const double lo = std::min(a.minCoeff(), b.minCoeff());
    plot_heatmap(out / "patchsim_clean.png", a, lo, 1.0);
    plot_heatmap(out / "patchsim_blurred.png", b, lo, 1.0);
    fmt::print("mean patch similarity clean {:.4f}, blurred {:.4f}\n", a.mean(), b.mean());
  } else {
    throw std::invalid_argument("unknown analysis '" + kind + "'");
  }
  return 0;
}

// A compare input is either a single report or a sweep; both become condition -> report.
std::map<std::string, EvalReport> report_set(const json& j) {
  std::map<std::string, EvalReport> out;
  if (j.contains("cells")) {
    for (const json& c : j.at("cells")) out[c.at("condition").get<std::string>()] = EvalReport::from_json(c.at("report"));
  } else {
    const EvalReport r = EvalReport::from_json(j);
    out[r.per_condition.size() == 1 ? r.per_condition.begin()->first : "report"] = r;
  }
  return out;
}

int cmd_compare(const fs::path& a_path, const fs::path& b_path, const fs::path& out) {
  const auto a = report_set(read_json(a_path));
  const auto b = report_set(read_json(b_path));
  if (a.size() != b.size()) throw std::invalid_argument("compare: condition grids differ");
  std::vector<DeltaRow> rows;
  for (const auto& [name, ra] : a) {
    const auto it = b.find(name);
    if (it == b.end()) throw std::invalid_argument("compare: condition '" + name + "' missing from the second input");
    for (DeltaRow& r : compare_reports(ra, it->second)) rows.push_back(std::move(r));
  }
  const json j = {{"a", a_path.filename().string()}, {"b", b_path.filename().string()}, {"deltas", deltas_to_json(rows)}};
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(out, j);
    for (const DeltaRow& r : rows) fmt::print("{:>14}: {:.4f} - {:.4f} = {:+.4f}\n", r.condition, r.accuracy_a, r.accuracy_b, r.delta);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sharp-to-blur distillation toolkit for AI-generated image detection"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");
  bool allow_mismatch = false;

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Generate the synthetic real/fake texture dataset");
  std::string gen_out;
  int gen_n = 200, gen_size = 112;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory (default: $S2B_DATA_ROOT/toy)");
  gen->add_option("--n-per-class", gen_n, "Images per class")->check(CLI::Range(10, 1000000));
  gen->add_option("--size", gen_size, "Image side in pixels")->check(CLI::Range(8, 4096));
  gen->add_option("--seed", gen_seed, "Dataset seed")->required();

  // synth-pairs
  auto* synth = app.add_subcommand("synth-pairs", "Write blurred counterparts and a degradation sidecar");
  std::string synth_manifest, synth_out, synth_policy;
  std::uint64_t synth_seed = 0;
  synth->add_option("--manifest", synth_manifest)->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--policy", synth_policy, "YAML blur policy (or a run config with a blur section)")
      ->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_seed)->required();

  // train-teacher
  auto* teach = app.add_subcommand("train-teacher", "Fit the teacher heads on sharp views");
  std::string teach_manifest, teach_out;
  ConfigArgs teach_cfg;
  teach->add_option("--manifest", teach_manifest)->required()->check(CLI::ExistingFile);
  teach->add_option("--out", teach_out)->required();
  add_config_flags(teach, teach_cfg, true);

  // distill
  auto* dist = app.add_subcommand("distill", "Distill a student from a frozen teacher on paired views");
  std::string dist_manifest, dist_teacher, dist_out;
  ConfigArgs dist_cfg;
  dist->add_option("--manifest", dist_manifest)->required()->check(CLI::ExistingFile);
  dist->add_option("--teacher", dist_teacher)->required()->check(CLI::ExistingFile);
  dist->add_option("--out", dist_out)->required();
  add_config_flags(dist, dist_cfg, true);
  dist->add_flag("--allow-mismatch", allow_mismatch, "Continue when the checkpoint fingerprint does not match");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Accuracy of a checkpoint under one condition");
  std::string eval_ckpt, eval_manifest, eval_condition = "clean", eval_out;
  std::optional<std::uint64_t> eval_seed;
  eval->add_option("--ckpt", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", eval_manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--condition", eval_condition, "clean | identity | family:param (e.g. motion:15)");
  eval->add_option("--seed", eval_seed, "Evaluation seed (default: the run's eval.seed)");
  eval->add_option("--out", eval_out)->required();
  eval->add_flag("--allow-mismatch", allow_mismatch);

  // blur-sweep
  auto* sweep = app.add_subcommand("blur-sweep", "Evaluate a checkpoint over a blur grid");
  std::string sweep_ckpt, sweep_manifest, sweep_out;
  std::vector<std::string> sweep_grid;
  std::optional<std::uint64_t> sweep_seed;
  bool sweep_no_clean = false;
  sweep->add_option("--ckpt", sweep_ckpt)->required()->check(CLI::ExistingFile);
  sweep->add_option("--manifest", sweep_manifest)->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", sweep_grid, "family:p1,p2,... (repeatable; default: the run's eval.grid)");
  sweep->add_option("--seed", sweep_seed);
  sweep->add_option("--out", sweep_out)->required();
  sweep->add_flag("--no-clean", sweep_no_clean, "Skip the clean reference cell");
  sweep->add_flag("--allow-mismatch", allow_mismatch);

  // analyze
  auto* an = app.add_subcommand("analyze", "Spectrum, attention-similarity and patch-similarity analyses");
  std::string an_kind, an_manifest, an_ckpt, an_out, an_sizes = "1,5,9,13,17";
  double an_length = 15.0;
  int an_index = 0, an_bins = 32;
  ConfigArgs an_cfg;
  an->add_option("kind", an_kind)->required()->check(CLI::IsMember({"spectrum", "attention", "patchsim"}));
  an->add_option("--manifest", an_manifest)->required()->check(CLI::ExistingFile);
  an->add_option("--ckpt", an_ckpt, "Checkpoint whose encoder and preprocessing are used")->check(CLI::ExistingFile);
  an->add_option("--out", an_out)->required();
  an->add_option("--motion-length", an_length, "Blur length for spectrum and patchsim");
  an->add_option("--sizes", an_sizes, "Kernel sizes for the attention curve");
  an->add_option("--index", an_index, "Manifest row for patchsim");
  an->add_option("--bins", an_bins, "Radial spectrum bins")->check(CLI::Range(4, 4096));
  add_config_flags(an, an_cfg, false);
  an->add_flag("--allow-mismatch", allow_mismatch);

  // compare
  auto* cmp = app.add_subcommand("compare", "Per-condition accuracy deltas between two reports or sweeps");
  std::string cmp_a, cmp_b, cmp_out;
  cmp->add_option("a", cmp_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("b", cmp_b)->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", cmp_out);

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("s2b");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen) {
      const fs::path out = gen_out.empty() ? data_root() / "toy" : fs::path(gen_out);
      return cmd_gen_toy(out, gen_n, gen_seed, gen_size);
    }
    if (*synth) return cmd_synth_pairs(synth_manifest, synth_out, synth_policy, synth_seed);
    if (*teach) return cmd_train_teacher(teach_manifest, teach_out, teach_cfg);
    if (*dist) return cmd_distill(dist_manifest, dist_teacher, dist_out, dist_cfg, allow_mismatch);
    if (*eval) return cmd_evaluate(eval_ckpt, eval_manifest, eval_condition, eval_seed, eval_out, allow_mismatch);
    if (*sweep) {
      return cmd_blur_sweep(sweep_ckpt, sweep_manifest, sweep_grid, sweep_seed, sweep_out, !sweep_no_clean,
                            allow_mismatch);
    }
    if (*an) {
      return cmd_analyze(an_kind, an_manifest, an_ckpt, an_out, an_cfg, an_length, an_sizes, an_index, an_bins,
                         allow_mismatch);
    }
    if (*cmp) return cmd_compare(cmp_a, cmp_b, cmp_out);
  } catch (const FingerprintMismatch& e) {
    spdlog::error("{} (pass --allow-mismatch to continue anyway)", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
