// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. The desk-scale criteria drive the installed CLI.
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "s2b/blur.hpp"
#include "s2b/config.hpp"
#include "s2b/data_io.hpp"
#include "s2b/evaluation.hpp"
#include "s2b/hash.hpp"
#include "s2b/losses.hpp"
#include "s2b/model.hpp"
#include "s2b/training.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

namespace {

using namespace s2b;
namespace fs = std::filesystem;
using nlohmann::json;
using testing::flatten;
using testing::random_matrix;
using testing::to_rows;
using testing::unflatten;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---- shared helpers -------------------------------------------------------------------------------

std::vector<int> random_labels(std::mt19937_64& gen, int n) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int& v : y) v = static_cast<int>(gen() % 2);
  return y;
}

// Student batch layout: n sharp rows at severity 0 followed by n blurred rows.
LossInputs random_inputs(std::mt19937_64& gen, int n, int k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossInputs in;
  in.teacher_logits = random_matrix(gen, n, 2, 2.0);
  in.student_logits = random_matrix(gen, n, 2, 2.0);
  in.teacher_features = random_matrix(gen, n, k);
  in.student_features = random_matrix(gen, n, k);
  in.embeddings = random_matrix(gen, 2 * n, k);
  in.blur_levels = Eigen::VectorXd::Zero(2 * n);
  for (int i = n; i < 2 * n; ++i) in.blur_levels(i) = u(gen);
  in.labels = random_labels(gen, n);
  for (int i = 0; i < n; ++i) in.anchors.push_back(i);
  return in;
}

oracle::Grid kernel_grid(const BlurKernel& k) {
  oracle::Grid g(static_cast<std::size_t>(k.size), std::vector<double>(static_cast<std::size_t>(k.size)));
  for (int r = 0; r < k.size; ++r)
    for (int c = 0; c < k.size; ++c) g[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = k.at(r, c);
  return g;
}

BlurKernel random_kernel(Rng& rng) {
  switch (uniform_int(rng, 0, 5)) {
    case 0: {
      const Trajectory t = sample_trajectory(rng, 21.0, uniform(rng, 0.0, 0.3));
      return rasterize_psf(t, psf_window_for_length(t.length), 21.0);
    }
    case 1: {
      const double s = uniform(rng, 0.05, 2.5);
      return parametric_kernel(KernelFamily::defocus, s, default_window(KernelFamily::defocus, s));
    }
    case 2: {
      const double s = uniform(rng, 0.05, 5.0);
      return parametric_kernel(KernelFamily::gaussian, s, default_window(KernelFamily::gaussian, s));
    }
    case 3: {
      const double w = 2 * uniform_int(rng, 0, 7) + 1;
      return parametric_kernel(KernelFamily::box, w, default_window(KernelFamily::box, w));
    }
    case 4: {
      const double r = uniform(rng, 1.0, 10.0);
      return parametric_kernel(KernelFamily::bokeh, r, default_window(KernelFamily::bokeh, r));
    }
    default:
      return identity_kernel();
  }
}

json read_json_file(const fs::path& p) { return json::parse(read_file(p)); }

double cell_accuracy(const json& sweep, const std::string& condition) {
  for (const json& c : sweep.at("cells"))
    if (c.at("condition") == condition) return c.at("report").at("overall_accuracy").get<double>();
  throw std::runtime_error("sweep has no cell " + condition);
}

// Every regular file under `root`, keyed by relative path.
std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  return out;
}

// ---- criteria 1-3: library oracles ----------------------------------------------------------------

Outcome loss_oracles() {
  std::mt19937_64 gen(101);
  const LossWeights w;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 4);  // M = 2n <= 8
    const int k = 1 + static_cast<int>(gen() % 16);
    const LossInputs in = random_inputs(gen, n, k);
    const std::vector<double> b(in.blur_levels.data(), in.blur_levels.data() + in.blur_levels.size());
    std::vector<int> all(static_cast<std::size_t>(2 * n));
    for (int i = 0; i < 2 * n; ++i) all[static_cast<std::size_t>(i)] = i;
    const double diffs[] = {
        focal_loss(in.student_logits, in.labels, w.alpha_focal, w.gamma_focal) -
            oracle::focal(to_rows(in.student_logits), in.labels, w.alpha_focal, w.gamma_focal),
        feature_alignment_loss(in.student_features, in.teacher_features) -
            oracle::feature_alignment(to_rows(in.student_features), to_rows(in.teacher_features)),
        kd_loss(in.teacher_logits, in.student_logits, w.temperature) -
            oracle::kd(to_rows(in.teacher_logits), to_rows(in.student_logits), w.temperature),
        ordinal_contrastive_loss(in.embeddings, in.blur_levels, w.tau) -
            oracle::ordinal_contrastive(to_rows(in.embeddings), b, w.tau, all),
        ordinal_contrastive_loss(in.embeddings, in.blur_levels, w.tau, &in.anchors) -
            oracle::ordinal_contrastive(to_rows(in.embeddings), b, w.tau, in.anchors),
    };
    for (double d : diffs) worst = std::max(worst, std::isfinite(d) ? std::fabs(d) : INFINITY);
  }
  return {worst <= 1e-6, fmt::format("max |loss - oracle| = {:.3g} over 50 batches", worst)};
}

Outcome loss_gradients() {
  std::mt19937_64 gen(202);
  const LossWeights w;
  double worst = 0.0;
  auto track = [&](const Eigen::MatrixXd& analytic, const std::function<double(const std::vector<double>&)>& f,
                   const Eigen::MatrixXd& at) {
    worst = std::max(worst, oracle::relative_error(flatten(analytic), oracle::finite_difference(f, flatten(at), 1e-4)));
  };
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 3), k = 2 + static_cast<int>(gen() % 15);
    const LossInputs in = random_inputs(gen, n, k);
    Eigen::MatrixXd g, g2;

    focal_loss(in.student_logits, in.labels, w.alpha_focal, w.gamma_focal, &g);
    track(g, [&](const std::vector<double>& x) {
      return focal_loss(unflatten(x, n, 2), in.labels, w.alpha_focal, w.gamma_focal);
    }, in.student_logits);

    feature_alignment_loss(in.student_features, in.teacher_features, &g, &g2);
    track(g, [&](const std::vector<double>& x) {
      return feature_alignment_loss(unflatten(x, n, k), in.teacher_features);
    }, in.student_features);
    track(g2, [&](const std::vector<double>& x) {
      return feature_alignment_loss(in.student_features, unflatten(x, n, k));
    }, in.teacher_features);

    kd_loss(in.teacher_logits, in.student_logits, w.temperature, &g);
    track(g, [&](const std::vector<double>& x) { return kd_loss(in.teacher_logits, unflatten(x, n, 2), w.temperature); },
          in.student_logits);

    ordinal_contrastive_loss(in.embeddings, in.blur_levels, w.tau, &in.anchors, &g);
    track(g, [&](const std::vector<double>& x) {
      return ordinal_contrastive_loss(unflatten(x, 2 * n, k), in.blur_levels, w.tau, &in.anchors);
    }, in.embeddings);

    LossGradients grads;
    total_loss(in, w, &grads);
    auto total_wrt = [&](int which) {
      return [&, which](const std::vector<double>& x) {
        LossInputs c = in;
        if (which == 0) c.student_logits = unflatten(x, n, 2);
        if (which == 1) c.student_features = unflatten(x, n, k);
        if (which == 2) c.embeddings = unflatten(x, 2 * n, k);
        return total_loss(c, w).total;
      };
    };
    track(grads.student_logits, total_wrt(0), in.student_logits);
    track(grads.student_features, total_wrt(1), in.student_features);
    track(grads.embeddings, total_wrt(2), in.embeddings);
  }
  return {worst <= 1e-3, fmt::format("max relative error {:.3g} over 20 batches", worst)};
}

Outcome kernel_invariants() {
  Rng rng = make_rng(303, 0);
  double worst_sum = 0.0, worst_conv = 0.0;
  double min_weight = 0.0;
  std::mt19937_64 gen(303);
  for (int i = 0; i < 1000; ++i) {
    const BlurKernel k = random_kernel(rng);
    min_weight = std::min(min_weight, *std::min_element(k.weights.begin(), k.weights.end()));
    worst_sum = std::max(worst_sum, std::fabs(k.sum() - 1.0));
    if (i % 10 == 0) {
      const Image img = testing::random_image(gen, 8, 8);
      const Image out = convolve(img, k);
      for (int c = 0; c < 3; ++c) {
        const oracle::Grid ref = oracle::convolve(testing::channel(img, c), kernel_grid(k));
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            worst_conv = std::max(worst_conv, std::fabs(out.at(y, x, c) - ref[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]));
      }
    }
  }
  const bool pass = min_weight >= 0.0 && worst_sum <= 1e-6 && worst_conv <= 1e-6;
  return {pass, fmt::format("min weight {:.3g}, max |sum - 1| {:.3g}, max 8x8 conv error {:.3g}", min_weight, worst_sum,
                            worst_conv)};
}

// ---- CLI-driven criteria ----------------------------------------------------------------------------

class Cli {
 public:
  Cli(fs::path binary, fs::path log) : binary_(std::move(binary)), log_(std::move(log)) {}

  void operator()(const std::string& args) const {
    const std::string cmd = fmt::format("\"{}\" --log-level warn {} >>\"{}\" 2>&1", binary_.string(), args, log_.string());
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("command failed: " + args + " (see " + log_.string() + ")");
  }

 private:
  fs::path binary_;
  fs::path log_;
};

// One complete desk run under `root`. Paths handed to the CLI are absolute; every output
// that records a path stores it relative to its manifest, so two roots compare byte for byte.
void desk_run(const Cli& cli, const fs::path& root, const fs::path& config) {
  const std::string cfg = fmt::format("--config \"{}\" --seed 7", config.string());
  const auto p = [&](const char* rel) { return fmt::format("\"{}\"", (root / rel).string()); };
  cli(fmt::format("gen-toy --out {} --n-per-class 200 --seed 1", p("train")));
  cli(fmt::format("gen-toy --out {} --n-per-class 100 --seed 2", p("test")));
  cli(fmt::format("synth-pairs --manifest {} --out {} --policy \"{}\" --seed 3", p("test/manifest.jsonl"), p("pairs"),
                  config.string()));
  cli(fmt::format("train-teacher {} --manifest {} --out {}", cfg, p("train/manifest.jsonl"), p("teacher")));
  cli(fmt::format("distill {} --manifest {} --teacher {} --out {}", cfg, p("train/manifest.jsonl"),
                  p("teacher/teacher.ckpt.json"), p("student")));
  for (const char* who : {"teacher", "student"}) {
    const std::string ckpt = p(fmt::format("{0}/{0}.ckpt.json", who).c_str());
    cli(fmt::format("blur-sweep --ckpt {} --manifest {} --out {}", ckpt, p("test/manifest.jsonl"),
                    p(fmt::format("sweep_{}", who).c_str())));
    cli(fmt::format("evaluate --ckpt {} --manifest {} --condition motion:15 --out {}", ckpt, p("test/manifest.jsonl"),
                    p(fmt::format("eval_{}_motion15.json", who).c_str())));
  }
  cli(fmt::format("compare {} {} --out {}", p("sweep_teacher/sweep.json"), p("sweep_student/sweep.json"),
                  p("compare.json")));
  cli(fmt::format("analyze spectrum {} --manifest {} --motion-length 15 --out {}", cfg, p("train/manifest.jsonl"),
                  p("analysis_train")));
  for (const char* kind : {"attention", "patchsim"}) {
    cli(fmt::format("analyze {} --ckpt {} --manifest {} --out {}", kind, p("teacher/teacher.ckpt.json"),
                    p("test/manifest.jsonl"), p("analysis_test")));
  }
}

Outcome spectrum_lowpass(const fs::path& run) {
  const json s = read_json_file(run / "analysis_train" / "spectrum.json");
  const double sharp = s.at("gap_sharp"), blurred = s.at("gap_blurred");
  const double shrink = 1.0 - std::fabs(blurred) / std::fabs(sharp);
  return {sharp > 0.3 && shrink >= 0.5,
          fmt::format("gap sharp {:.4f}, after L=15 {:.4f}, shrink {:.1f}%", sharp, blurred, 100.0 * shrink)};
}

Outcome desk_comparison(const fs::path& run) {
  const json t = read_json_file(run / "sweep_teacher" / "sweep.json");
  const json s = read_json_file(run / "sweep_student" / "sweep.json");
  const double tc = cell_accuracy(t, "clean"), t15 = cell_accuracy(t, "motion:15");
  const double sc = cell_accuracy(s, "clean"), s15 = cell_accuracy(s, "motion:15");
  const double drop = 100.0 * (tc - t15), gain = 100.0 * (s15 - t15), clean_gap = 100.0 * std::fabs(sc - tc);
  return {drop >= 15.0 && gain >= 10.0 && clean_gap <= 5.0,
          fmt::format("teacher {:.3f} -> {:.3f} (drop {:.1f} pts); student {:.3f} -> {:.3f} (L=15 gain {:.1f} pts, "
                      "clean gap {:.1f} pts)",
                      tc, t15, drop, sc, s15, gain, clean_gap)};
}

Outcome attention_monotone(const fs::path& run) {
  const json a = read_json_file(run / "analysis_test" / "attention.json");
  const auto sizes = a.at("kernel_sizes").get<std::vector<int>>();
  const auto sim = a.at("similarity").get<std::vector<double>>();
  bool pass = sizes == std::vector<int>{1, 5, 9, 13, 17};
  double worst_rise = 0.0;
  for (std::size_t i = 1; i < sim.size(); ++i) worst_rise = std::max(worst_rise, sim[i] - sim[i - 1]);
  pass = pass && worst_rise <= 0.02;
  std::string curve;
  for (std::size_t i = 0; i < sim.size(); ++i) curve += fmt::format("{}{}:{:.4f}", i ? " " : "", sizes[i], sim[i]);
  return {pass, fmt::format("{} (largest rise {:.4f})", curve, worst_rise)};
}

Outcome freezing_and_determinism(const fs::path& run_a, const fs::path& run_b) {
  const json m = read_json_file(run_a / "student" / "student.ckpt.json").at("metrics");
  const bool frozen = m.at("encoder_weights_sha256_before") == m.at("encoder_weights_sha256_after") &&
                      m.at("teacher_weights_sha256_before") == m.at("teacher_weights_sha256_after") &&
                      m.at("teacher_checkpoint_sha256") == sha256_hex(read_file(run_a / "teacher" / "teacher.ckpt.json"));
  const auto a = tree_contents(run_a), b = tree_contents(run_b);
  std::vector<std::string> differing;
  for (const auto& [rel, bytes] : a) {
    const auto it = b.find(rel);
    if (it == b.end() || it->second != bytes) differing.push_back(rel);
  }
  for (const auto& [rel, bytes] : b)
    if (!a.count(rel)) differing.push_back(rel);
  std::string detail = fmt::format("frozen weights {}; {} output files compared, {} differ", frozen ? "unchanged" : "CHANGED",
                                   a.size(), differing.size());
  if (!differing.empty()) detail += " (first: " + differing.front() + ")";
  return {frozen && differing.empty() && !a.empty(), detail};
}

Outcome persistence(const fs::path& run, const fs::path& config_path, const fs::path& scratch) {
  const RunConfig cfg = load_run_config(config_path);
  const auto encoder = make_encoder(cfg.encoder);
  const auto test = load_manifest(run / "test" / "manifest.jsonl");
  std::vector<ManifestEntry> subset;
  int real = 0, fake = 0;
  for (const ManifestEntry& e : load_manifest(run / "train" / "manifest.jsonl")) {
    int& count = e.label == Label::real ? real : fake;
    if (count < 30) {
      subset.push_back(e);
      ++count;
    }
  }
  PhaseConfig phase = cfg.teacher_phase();
  phase.epochs = 2;
  const TrainResult trained = train_teacher(TrainingSet::load(subset, cfg.preprocess), phase, *encoder, {cfg.preprocess, {}, {}});
  const EvalOptions eo{cfg.preprocess, cfg.eval.seed, config_fingerprint(cfg)};

  Checkpoint ck;
  ck.heads = trained.heads;
  ck.encoder = cfg.encoder;
  ck.encoder_id = encoder->id();
  ck.run_fingerprint = config_fingerprint(cfg);
  fs::create_directories(scratch);
  save_checkpoint(ck, scratch / "roundtrip.ckpt.json");
  const Checkpoint loaded = load_checkpoint(scratch / "roundtrip.ckpt.json", {encoder->id(), false});

  bool pass = true;
  std::string detail;
  for (const char* cond : {"clean", "motion:15"}) {
    const EvalReport before = evaluate(trained.heads, *encoder, test, Condition::parse(cond), eo);
    const EvalReport after = evaluate(loaded.heads, *encoder, test, Condition::parse(cond), eo);
    pass = pass && before.to_json() == after.to_json();
    detail += fmt::format("{}{} {:.17g} vs {:.17g}", detail.empty() ? "" : "; ", cond, before.overall_accuracy,
                          after.overall_accuracy);
  }
  // A checkpoint written by one CLI process and evaluated by another reproduces its sweep cell.
  for (const char* who : {"teacher", "student"}) {
    const double sweep = cell_accuracy(read_json_file(run / fmt::format("sweep_{}", who) / "sweep.json"), "motion:15");
    const double single =
        read_json_file(run / fmt::format("eval_{}_motion15.json", who)).at("overall_accuracy").get<double>();
    pass = pass && sweep == single;
    detail += fmt::format("; CLI {} {:.17g} vs {:.17g}", who, sweep, single);
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "s2b_acceptance";
  const fs::path cli_path = S2B_CLI_PATH;
  const fs::path config = S2B_DESK_CONFIG;
  spdlog::set_level(spdlog::level::warn);
  fs::remove_all(work);
  fs::create_directories(work);
  const Cli cli(cli_path, work / "cli.log");

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fmt::print("{} [{}] {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail, secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "loss oracles", loss_oracles);
  report(2, "loss gradients", loss_gradients);
  report(3, "kernel invariants", kernel_invariants);

  const fs::path run_a = work / "run_a", run_b = work / "run_b";
  bool runs_ok = true;
  std::string run_error;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    desk_run(cli, run_a, config);
    desk_run(cli, run_b, config);
    fmt::print("desk runs finished in {:.1f}s (outputs under {})\n",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), work.string());
  } catch (const std::exception& e) {
    runs_ok = false;
    run_error = e.what();
  }
  auto needs_runs = [&](const std::function<Outcome()>& f) {
    return [&, f]() -> Outcome { return runs_ok ? f() : Outcome{false, "desk run failed: " + run_error}; };
  };

  report(4, "low-pass spectrum gap", needs_runs([&] { return spectrum_lowpass(run_a); }));
  report(5, "desk-scale teacher vs student", needs_runs([&] { return desk_comparison(run_a); }));
  report(6, "attention similarity monotone", needs_runs([&] { return attention_monotone(run_a); }));
  report(7, "freezing and determinism", needs_runs([&] { return freezing_and_determinism(run_a, run_b); }));
  report(8, "checkpoint persistence", needs_runs([&] { return persistence(run_a, config, work / "persistence"); }));

  fmt::print("{} of 8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
