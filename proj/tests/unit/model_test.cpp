// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "s2b/data_io.hpp"
#include "s2b/model.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

namespace s2b {
namespace {

EncoderConfig small_encoder(int size = 64) {
  EncoderConfig c;
  c.image_size = size;
  c.patch = 16;
  c.embed_dim = 32;
  c.depth = 2;
  c.heads = 4;
  c.seed = 3;
  return c;
}

Image encoder_input(std::uint64_t seed, int size) {
  Rng rng = make_rng(seed, 0);
  return normalize_channels(make_toy_image(rng, size, Label::real));
}

HeadConfig small_heads(Role role, double dropout) {
  HeadConfig c;
  c.role = role;
  c.input_dim = 6;
  c.projection_dims = {8, 5};
  c.classifier_hidden = 3;
  c.dropout = dropout;
  return c;
}

// ---- encoder --------------------------------------------------------------------------

TEST(Encoder, DeterministicAndNonDegenerate) {
  const auto enc = make_encoder(small_encoder());
  const Image x = encoder_input(1, 64);
  const EncoderOutput a = enc->encode(x);
  const EncoderOutput b = enc->encode(x);
  EXPECT_EQ(a.pooled, b.pooled);
  EXPECT_EQ(a.patch_tokens, b.patch_tokens);
  EXPECT_EQ(a.attention, b.attention);
  EXPECT_GT(a.pooled.norm(), 0.0);
  EXPECT_EQ(a.pooled.size(), enc->embed_dim());
  EXPECT_TRUE(enc->frozen());
}

TEST(Encoder, SameConfigSameWeights) {
  const auto a = make_encoder(small_encoder());
  const auto b = make_encoder(small_encoder());
  EXPECT_EQ(a->weights_hash(), b->weights_hash());
  EXPECT_EQ(a->id(), b->id());
  EncoderConfig other = small_encoder();
  other.seed = 4;
  EXPECT_NE(make_encoder(other)->weights_hash(), a->weights_hash());
}

TEST(Encoder, PatchGridFor224) {
  EncoderConfig c = small_encoder(224);
  const auto enc = make_encoder(c);
  EXPECT_EQ(enc->patch_grid(), std::make_pair(14, 14));
  const EncoderOutput out = enc->encode(encoder_input(2, 224));
  EXPECT_EQ(out.rows, 14);
  EXPECT_EQ(out.cols, 14);
  EXPECT_EQ(out.patch_tokens.rows(), 196);
  EXPECT_EQ(out.patch_tokens.cols(), c.embed_dim);
  EXPECT_EQ(out.attention.size(), 196);
}

TEST(Encoder, AttentionIsADistribution) {
  const auto enc = make_encoder(small_encoder());
  const EncoderOutput out = enc->encode(encoder_input(3, 64));
  EXPECT_GE(out.attention.minCoeff(), 0.0);
  // Class-token attention also lands on the class token itself, so patches sum to at most 1.
  EXPECT_LE(out.attention.sum(), 1.0 + 1e-9);
  EXPECT_GT(out.attention.sum(), 0.0);
}

TEST(Encoder, RejectsResolutionMismatch) {
  const auto enc = make_encoder(small_encoder());
  EXPECT_THROW(enc->encode(encoder_input(4, 32)), std::invalid_argument);
}

TEST(Encoder, RejectsBadConfig) {
  EncoderConfig c = small_encoder();
  c.image_size = 70;
  EXPECT_THROW(make_encoder(c), std::invalid_argument);
  c = small_encoder();
  c.heads = 5;
  EXPECT_THROW(make_encoder(c), std::invalid_argument);
  c = small_encoder();
  c.depth = 0;
  EXPECT_THROW(make_encoder(c), std::invalid_argument);
}

// ---- heads ----------------------------------------------------------------------------------

TEST(HeadConfig, RoleDefaults) {
  const HeadConfig t = default_head_config(Role::teacher, 4096);
  EXPECT_EQ(t.projection_dims, (std::vector<int>{16384, 1024, 512}));
  EXPECT_DOUBLE_EQ(t.dropout, 0.1);
  EXPECT_EQ(default_head_config(Role::teacher, 512).projection_dims, (std::vector<int>{2048, 1024, 512}));
  const HeadConfig s = default_head_config(Role::student, 768);
  EXPECT_EQ(s.projection_dims, (std::vector<int>{1024, 512}));
  EXPECT_DOUBLE_EQ(s.dropout, 0.2);
  EXPECT_EQ(default_head_config(Role::teacher, 64).projection_dims, (std::vector<int>{256, 128, 64}));
  EXPECT_EQ(default_head_config(Role::student, 64).projection_dims, (std::vector<int>{128, 64}));
  EXPECT_EQ(default_head_config(Role::student, 64).classifier_hidden, 32);
}

TEST(HeadConfig, Validation) {
  HeadConfig c = small_heads(Role::teacher, 0.1);
  c.projection_dims.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_heads(Role::teacher, 1.0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(role_from_string("assistant"), std::invalid_argument);
  EXPECT_EQ(role_from_string(to_string(Role::student)), Role::student);
}

TEST(ProjectAndClassify, ShapesAndDeterminism) {
  Rng init = make_rng(5, 0);
  const HeadStack stack = init_head_stack(small_heads(Role::teacher, 0.1), init);
  std::mt19937_64 gen(5);
  const Eigen::VectorXd h = testing::random_matrix(gen, 6, 1);
  const auto [z1, u1] = project_and_classify(h, stack, false);
  const auto [z2, u2] = project_and_classify(h, stack, false);
  EXPECT_EQ(z1.size(), 5);
  EXPECT_EQ(u1.size(), 2);
  EXPECT_EQ(z1, z2);
  EXPECT_EQ(u1, u2);
  EXPECT_THROW(project_and_classify(Eigen::VectorXd::Ones(7), stack, false), std::invalid_argument);
  EXPECT_THROW(project_and_classify(h, stack, true, nullptr), std::invalid_argument);
}

TEST(ProjectAndClassify, ZeroFinalLayerGivesBias) {
  Rng init = make_rng(6, 0);
  HeadStack stack = init_head_stack(small_heads(Role::student, 0.2), init);
  Linear& last = stack.params.classifier.back();
  last.weight.setZero();
  last.bias << 0.25, -1.5;
  std::mt19937_64 gen(6);
  for (int i = 0; i < 10; ++i) {
    const auto [z, u] = project_and_classify(testing::random_matrix(gen, 6, 1, 10.0), stack, false);
    EXPECT_EQ(u, last.bias);
  }
}

TEST(ProjectAndClassify, FiniteOverInputRange) {
  Rng init = make_rng(7, 0);
  const HeadStack stack = init_head_stack(default_head_config(Role::teacher, 64), init);
  std::mt19937_64 gen(7);
  for (double scale : {1e-6, 1.0, 10.0, 100.0, 1000.0}) {
    for (int i = 0; i < 20; ++i) {
      Eigen::VectorXd h = testing::random_matrix(gen, 64, 1);
      h *= scale / h.norm();
      const auto [z, u] = project_and_classify(h, stack, false);
      EXPECT_TRUE(z.allFinite());
      EXPECT_TRUE(u.allFinite());
    }
  }
}

TEST(ProjectAndClassify, DropoutOnlyInTrainMode) {
  Rng init = make_rng(8, 0);
  const HeadStack stack = init_head_stack(small_heads(Role::student, 0.5), init);
  const Eigen::VectorXd h = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  Rng a = make_rng(9, 0), b = make_rng(9, 0), c = make_rng(10, 0);
  const auto ta = project_and_classify(h, stack, true, &a);
  const auto tb = project_and_classify(h, stack, true, &b);
  EXPECT_EQ(ta.first, tb.first);
  bool differs = false;
  for (int i = 0; i < 10 && !differs; ++i) differs = project_and_classify(h, stack, true, &c).first != ta.first;
  EXPECT_TRUE(differs);
}

TEST(Standardizer, FitsMeanAndScale) {
  Rng init = make_rng(11, 0);
  HeadStack stack = init_head_stack(small_heads(Role::teacher, 0.1), init);
  std::mt19937_64 gen(11);
  Eigen::MatrixXd f = testing::random_matrix(gen, 200, 6, 3.0);
  f.col(2).array() += 5.0;
  fit_standardizer(stack, f);
  const Eigen::MatrixXd x = (f.rowwise() - stack.input_mean.transpose()).array().rowwise() *
                            stack.input_scale.transpose().array();
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR(x.col(j).mean(), 0.0, 1e-9);
    const double var = (x.col(j).array() - x.col(j).mean()).square().sum() / (f.rows() - 1);  // sample variance
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-4);
  }
  EXPECT_THROW(fit_standardizer(stack, f.topRows(1)), std::invalid_argument);
}

// Scalar probe L = <Gz, z> + <Gu, u>; head_backward(Gz, Gu) must be its parameter gradient.
void check_backward(bool train_mode) {
  std::mt19937_64 gen(train_mode ? 12 : 13);
  for (int trial = 0; trial < 10; ++trial) {
    Rng init = make_rng(12, static_cast<std::uint64_t>(trial));
    HeadStack stack = init_head_stack(small_heads(Role::teacher, 0.3), init);
    fit_standardizer(stack, testing::random_matrix(gen, 20, 6, 2.0));
    const Eigen::MatrixXd h = testing::random_matrix(gen, 4, 6);
    const Eigen::MatrixXd gz = testing::random_matrix(gen, 4, 5);
    const Eigen::MatrixXd gu = testing::random_matrix(gen, 4, 2);
    auto probe = [&](const HeadStack& s) {
      Rng drop = make_rng(99, static_cast<std::uint64_t>(trial));
      const HeadActivations a = head_forward(s, h, train_mode, &drop);
      return (gz.array() * a.z.array()).sum() + (gu.array() * a.u.array()).sum();
    };
    Rng drop = make_rng(99, static_cast<std::uint64_t>(trial));
    const HeadParams grad = head_backward(stack, head_forward(stack, h, train_mode, &drop), gz, gu);

    std::vector<double> analytic, flat;
    for (const auto& v : grad.views()) analytic.insert(analytic.end(), v.begin(), v.end());
    for (const auto& v : std::as_const(stack.params).views()) flat.insert(flat.end(), v.begin(), v.end());
    const auto numeric = oracle::finite_difference(
        [&](const std::vector<double>& x) {
          HeadStack s = stack;
          std::size_t i = 0;
          for (auto& v : s.params.views())
            for (double& w : v) w = x[i++];
          return probe(s);
        },
        flat);
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-5) << "trial " << trial;
  }
}

TEST(HeadBackward, MatchesFiniteDifferencesEval) { check_backward(false); }
TEST(HeadBackward, MatchesFiniteDifferencesWithDropout) { check_backward(true); }

TEST(HeadBackward, RejectsShapeMismatch) {
  Rng init = make_rng(14, 0);
  const HeadStack stack = init_head_stack(small_heads(Role::teacher, 0.1), init);
  const HeadActivations a = head_forward(stack, Eigen::MatrixXd::Ones(3, 6), false);
  EXPECT_THROW(head_backward(stack, a, Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(3, 2)),
               std::invalid_argument);
}

TEST(HeadHash, ChangesWithAnyWeight) {
  Rng init = make_rng(15, 0);
  HeadStack stack = init_head_stack(small_heads(Role::teacher, 0.1), init);
  const std::string before = weights_hash(stack);
  EXPECT_EQ(weights_hash(stack), before);
  stack.params.classifier[0].bias[1] += 1e-12;
  EXPECT_NE(weights_hash(stack), before);
}

// ---- normalize ------------------------------------------------------------------------------

TEST(Normalize, Examples) {
  const Eigen::VectorXd v = normalize(Eigen::Vector2d(3.0, 4.0));
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
  const Eigen::VectorXd e = Eigen::Vector3d(0.0, 1.0, 0.0);
  EXPECT_EQ(normalize(e), e);
  EXPECT_THROW(normalize(Eigen::VectorXd::Zero(4)), std::domain_error);
  Eigen::VectorXd nan = Eigen::VectorXd::Ones(3);
  nan[1] = std::nan("");
  EXPECT_THROW(normalize(nan), std::domain_error);
}

TEST(Normalize, UnitNormAndScaleInvariance) {
  std::mt19937_64 gen(16);
  std::uniform_real_distribution<double> c(1e-3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd z = testing::random_matrix(gen, 16, 1);
    const Eigen::VectorXd n = normalize(z);
    EXPECT_NEAR(n.norm(), 1.0, 1e-7);
    EXPECT_LT((normalize(c(gen) * z) - n).cwiseAbs().maxCoeff(), 1e-7);
  }
}

}  // namespace
}  // namespace s2b
