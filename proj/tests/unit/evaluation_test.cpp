// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fmt/format.h>

#include "s2b/evaluation.hpp"
#include "s2b/training.hpp"
#include "support/stub_encoder.hpp"
#include "support/test_util.hpp"

namespace s2b {
namespace {

constexpr int kCrop = 32;

PreprocessConfig small_preprocess() {
  PreprocessConfig p;
  p.resize = 36;
  p.crop = kCrop;
  return p;
}

// Flat mid-gray real images and fake images with strong per-pixel grain. Blur removes the
// grain, so a teacher trained on sharp views degrades with blur strength.
std::vector<ManifestEntry> grain_manifest(const std::filesystem::path& dir, int n_per_class, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const Label label = i % 2 ? Label::fake : Label::real;
    std::uniform_real_distribution<float> grain(label == Label::fake ? -0.25f : -0.02f,
                                                label == Label::fake ? 0.25f : 0.02f);
    Image img(36, 36, 0.5f);
    for (float& v : img.pixels()) v += grain(gen);
    const auto path = dir / fmt::format("{:03d}.png", i);
    save_image(quantize_8bit(img), path);
    entries.push_back({fmt::format("s{}_{:03d}", seed, i), path, label, "grain", std::nullopt, std::nullopt,
                       std::nullopt});
  }
  write_manifest(entries, dir / "manifest.jsonl");
  return entries;
}

class Evaluation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto dir = testing::temp_dir("evaluation");
    std::filesystem::create_directories(dir / "train");
    std::filesystem::create_directories(dir / "test");
    train_ = new std::vector<ManifestEntry>(grain_manifest(dir / "train", 24, 1));
    test_ = new std::vector<ManifestEntry>(grain_manifest(dir / "test", 20, 2));
    enc_ = new testing::MeanEncoder(kCrop);
    PhaseConfig c = PhaseConfig::teacher_defaults();
    c.base_lr = 3e-3;
    c.batch_size = 8;
    c.seed = 3;
    const TrainResult r = train_teacher(TrainingSet::load(*train_, small_preprocess()), c, *enc_,
                                        {small_preprocess(), {}, {}});
    teacher_ = new HeadStack(r.heads);
    train_accuracy_ = r.train_accuracy;
  }
  static void TearDownTestSuite() {
    delete train_;
    delete test_;
    delete enc_;
    delete teacher_;
  }

  static EvalOptions options() { return {small_preprocess(), 77, "fp"}; }
  static EvalReport run(const std::string& condition, const std::vector<ManifestEntry>* m = nullptr) {
    return evaluate(*teacher_, *enc_, m ? *m : *test_, Condition::parse(condition), options());
  }

  static std::vector<ManifestEntry>* train_;
  static std::vector<ManifestEntry>* test_;
  static testing::MeanEncoder* enc_;
  static HeadStack* teacher_;
  static double train_accuracy_;
};
std::vector<ManifestEntry>* Evaluation::train_ = nullptr;
std::vector<ManifestEntry>* Evaluation::test_ = nullptr;
testing::MeanEncoder* Evaluation::enc_ = nullptr;
HeadStack* Evaluation::teacher_ = nullptr;
double Evaluation::train_accuracy_ = 0.0;

TEST_F(Evaluation, ConstantClassifierScoresHalf) {
  HeadStack constant = *teacher_;
  constant.params.classifier.back().weight.setZero();
  constant.params.classifier.back().bias << 1.0, 0.0;
  const EvalReport r = evaluate(constant, *enc_, *test_, Condition::parse("clean"), options());
  EXPECT_DOUBLE_EQ(r.overall_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class.at("real").accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(r.per_class.at("fake").accuracy(), 0.0);
}

TEST_F(Evaluation, RepeatableReports) {
  EXPECT_EQ(run("clean").to_json(), run("clean").to_json());
  EXPECT_EQ(run("motion:9").to_json(), run("motion:9").to_json());
  const EvalReport r = run("gaussian:1");
  EXPECT_EQ(EvalReport::from_json(r.to_json()).to_json(), r.to_json());
  EXPECT_EQ(r.config_fingerprint, "fp");
}

// Training-set accuracy here is the eval-mode pass, not the running train-mode figure.
TEST_F(Evaluation, HeldOutMatchesTraining) {
  EXPECT_LE(std::fabs(run("clean").overall_accuracy - run("clean", train_).overall_accuracy), 0.02);
  EXPECT_GT(train_accuracy_, 0.5);
}

TEST_F(Evaluation, LabelFlipComplementsAccuracy) {
  std::vector<ManifestEntry> flipped = *test_;
  for (auto& e : flipped) e.label = e.label == Label::real ? Label::fake : Label::real;
  for (const char* c : {"clean", "motion:15"}) {
    EXPECT_NEAR(run(c, &flipped).overall_accuracy, 1.0 - run(c).overall_accuracy, 1e-12) << c;
  }
}

TEST_F(Evaluation, OverallIsWeightedMeanOfBreakdowns) {
  for (const char* c : {"clean", "defocus:1.5", "radial:5"}) {
    const EvalReport r = run(c);
    long correct = 0, n = 0;
    for (const auto& [name, t] : r.per_class) {
      correct += t.correct;
      n += t.n;
    }
    EXPECT_EQ(n, static_cast<long>(test_->size()));
    EXPECT_DOUBLE_EQ(r.overall_accuracy, double(correct) / double(n));
    ASSERT_EQ(r.per_condition.size(), 1u);
    EXPECT_EQ(r.per_condition.begin()->first, Condition::parse(c).name());
    EXPECT_EQ(r.per_condition.begin()->second.correct, correct);
  }
}

TEST_F(Evaluation, StrongestBlurIsNoBetterThanWeakest) {
  for (const char* axis : {"motion:1,21", "gaussian:0.5,5", "box:3,15"}) {
    const auto cells = blur_sweep(*teacher_, *enc_, *test_, {parse_sweep_axis(axis)}, options());
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_LE(cells[1].report.overall_accuracy, cells[0].report.overall_accuracy) << axis;
  }
  EXPECT_LT(run("motion:21").overall_accuracy, run("clean").overall_accuracy);
}

TEST_F(Evaluation, IdentityCellEqualsClean) {
  SweepAxis id;
  id.family = KernelFamily::identity;
  id.params = {0.0};
  const auto cells = blur_sweep(*teacher_, *enc_, *test_, {id}, options());
  ASSERT_EQ(cells.size(), 1u);
  const EvalReport clean = run("clean");
  EXPECT_EQ(cells[0].report.overall_accuracy, clean.overall_accuracy);
  EXPECT_EQ(cells[0].report.per_class.at("fake").correct, clean.per_class.at("fake").correct);
  EXPECT_EQ(cells[0].report.per_class.at("real").correct, clean.per_class.at("real").correct);
}

TEST_F(Evaluation, Errors) {
  EXPECT_THROW(evaluate(*teacher_, *enc_, {}, Condition::parse("clean"), options()), std::invalid_argument);
  HeadStack wide = *teacher_;
  wide.config.input_dim = 64;
  EXPECT_THROW(evaluate(wide, *enc_, *test_, Condition::parse("clean"), options()), std::invalid_argument);
  EXPECT_THROW(blur_sweep(*teacher_, *enc_, *test_, {}, options()), std::invalid_argument);
}

TEST_F(Evaluation, SweepCsvLayout) {
  const auto cells =
      blur_sweep(*teacher_, *enc_, *test_, {parse_sweep_axis("motion:5,10"), parse_sweep_axis("box:5")}, options());
  const std::string csv = sweep_csv(cells);
  std::istringstream in(csv);
  std::string header, motion, box;
  std::getline(in, header);
  std::getline(in, motion);
  std::getline(in, box);
  EXPECT_EQ(header, "family,5,10");
  EXPECT_EQ(motion, fmt::format("motion,{:.6f},{:.6f}", cells[0].report.overall_accuracy,
                                cells[1].report.overall_accuracy));
  EXPECT_EQ(box, fmt::format("box,{:.6f},", cells[2].report.overall_accuracy));
}

// ---- conditions ---------------------------------------------------------------------------------

TEST(Condition, ParseAndName) {
  EXPECT_TRUE(Condition::parse("clean").clean);
  const Condition m = Condition::parse("motion:15");
  EXPECT_FALSE(m.clean);
  EXPECT_EQ(m.family, KernelFamily::motion_psf);
  EXPECT_EQ(m.param, 15.0);
  EXPECT_EQ(Condition::parse(m.name()).name(), m.name());
  EXPECT_EQ(Condition::parse("identity").severity(), 0.0);
  EXPECT_EQ(Condition::parse("clean").severity(), 0.0);
  EXPECT_NEAR(Condition::parse("motion:21").severity(), 1.0, 1e-12);
  EXPECT_LT(Condition::parse("gaussian:1").severity(), Condition::parse("gaussian:3").severity());
  for (const char* bad : {"blurry", "motion", "motion:abc", "motion:5x", "motion:-1", "sharpen:2", "gaussian:0"}) {
    EXPECT_THROW(Condition::parse(bad), std::invalid_argument) << bad;
  }
}

TEST(Condition, SeverityBuckets) {
  EXPECT_EQ(severity_bucket(0.0), "low");
  EXPECT_EQ(severity_bucket(0.33), "low");
  EXPECT_EQ(severity_bucket(1.0 / 3.0), "medium");
  EXPECT_EQ(severity_bucket(0.66), "medium");
  EXPECT_EQ(severity_bucket(2.0 / 3.0), "high");
  EXPECT_EQ(severity_bucket(1.0), "high");
  EXPECT_THROW(severity_bucket(1.5), std::invalid_argument);
}

TEST(Condition, ApplyIsDeterministicPerStream) {
  std::mt19937_64 gen(4);
  const Image img = quantize_8bit(testing::random_image(gen, 24, 24));
  Rng a = make_rng(5, 3), b = make_rng(5, 3);
  EXPECT_EQ(apply_condition(img, Condition::parse("motion:9"), a), apply_condition(img, Condition::parse("motion:9"), b));
  Rng c = make_rng(5, 4);
  EXPECT_EQ(apply_condition(img, Condition::parse("clean"), c), img);
  EXPECT_EQ(apply_condition(img, Condition::parse("identity"), c), img);
}

TEST(SweepAxis, Parse) {
  const SweepAxis a = parse_sweep_axis("motion:5,10,15");
  EXPECT_EQ(a.family, KernelFamily::motion_psf);
  EXPECT_EQ(a.params, (std::vector<double>{5, 10, 15}));
  EXPECT_THROW(parse_sweep_axis("motion"), std::invalid_argument);
  EXPECT_THROW(parse_sweep_axis("motion:5,,10"), std::invalid_argument);
}

// ---- comparison ---------------------------------------------------------------------------------

EvalReport report(std::initializer_list<std::tuple<std::string, long, long>> cells) {
  EvalReport r;
  long c = 0, n = 0;
  for (const auto& [name, correct, total] : cells) {
    r.per_condition[name] = {correct, total};
    c += correct;
    n += total;
  }
  r.overall_accuracy = double(c) / double(n);
  return r;
}

TEST(CompareReports, Identities) {
  const EvalReport a = report({{"clean", 90, 100}, {"motion:15", 60, 100}});
  const EvalReport b = report({{"clean", 95, 100}, {"motion:15", 80, 100}});
  for (const DeltaRow& r : compare_reports(a, a)) EXPECT_EQ(r.delta, 0.0);
  const auto ab = compare_reports(a, b);
  const auto ba = compare_reports(b, a);
  ASSERT_EQ(ab.size(), 2u);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    EXPECT_EQ(ab[i].condition, ba[i].condition);
    EXPECT_EQ(ab[i].delta, -ba[i].delta);
  }
  EXPECT_EQ(ab[0].condition, "clean");
  EXPECT_NEAR(ab[0].delta, 0.90 - 0.95, 1e-15);
  EXPECT_NEAR(ab[1].delta, 0.60 - 0.80, 1e-15);
  const auto j = deltas_to_json(ab);
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["condition"], "motion:15");
}

TEST(CompareReports, GridMismatch) {
  const EvalReport a = report({{"clean", 90, 100}});
  EXPECT_THROW(compare_reports(a, report({{"motion:15", 60, 100}})), std::invalid_argument);
  EXPECT_THROW(compare_reports(a, report({{"clean", 9, 10}, {"motion:5", 6, 10}})), std::invalid_argument);
}

}  // namespace
}  // namespace s2b
