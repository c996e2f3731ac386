// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training objectives with analytic gradients. Every loss is a batch mean; gradient
// outputs are optional and, when requested, are resized to the shape of their input.

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace s2b {

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_feat = 0.5;
  double lambda_kd = 1.0;
  double lambda_ordcon = 0.5;
  double temperature = 2.0;
  double tau = 0.1;
  std::array<double, 2> alpha_focal{1.0, 1.0};
  double gamma_focal = 2.0;

  void validate() const;
};

/// mean_i  -alpha_c (1 - p_c)^gamma log p_c  with p = softmax(logits_i), c = labels[i].
double focal_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels, const std::array<double, 2>& alpha,
                  double gamma, Eigen::MatrixXd* grad_logits = nullptr);

/// 1 - mean_i cos(f_s[i], f_t[i]).
double feature_alignment_loss(const Eigen::MatrixXd& f_s, const Eigen::MatrixXd& f_t,
                              Eigen::MatrixXd* grad_fs = nullptr, Eigen::MatrixXd* grad_ft = nullptr);

/// T^2 * mean_i KL(softmax(u_t/T) || softmax(u_s/T)). The teacher side is a constant
/// reference, so only the student gradient exists.
double kd_loss(const Eigen::MatrixXd& u_teacher, const Eigen::MatrixXd& u_student, double temperature,
               Eigen::MatrixXd* grad_student = nullptr);

/// Severity-ordered contrastive loss over M embeddings (rows, normalized internally).
/// For anchor i and every j != i the term is
///   -log( exp(s_ij) / sum_{k != i : |b_i-b_k| >= |b_i-b_j|} exp(s_ik) ),  s = cos / tau,
/// averaged over j, then over anchors. `anchors` defaults to every row.
double ordinal_contrastive_loss(const Eigen::MatrixXd& embeddings, const Eigen::VectorXd& blur_levels, double tau,
                                const std::vector<int>* anchors = nullptr, Eigen::MatrixXd* grad_embeddings = nullptr);

/// Inputs to the combined objective. Rows of `embeddings` are the student projections
/// (sharp views and blurred views), `blur_levels` their severities.
struct LossInputs {
  Eigen::MatrixXd teacher_logits;
  Eigen::MatrixXd student_logits;
  Eigen::MatrixXd teacher_features;
  Eigen::MatrixXd student_features;
  Eigen::MatrixXd embeddings;
  Eigen::VectorXd blur_levels;
  std::vector<int> labels;
  std::vector<int> anchors;  // empty = all rows
};

struct LossBreakdown {
  double cls = 0.0;
  double feat = 0.0;
  double kd = 0.0;
  double ordcon = 0.0;
  double total = 0.0;
};

struct LossGradients {
  Eigen::MatrixXd student_logits;
  Eigen::MatrixXd student_features;
  Eigen::MatrixXd embeddings;
};

/// Weighted sum of the four terms. Every term is evaluated and reported regardless of its
/// weight; the ordinal term may be omitted (fewer than two embeddings) only when its
/// weight is zero.
LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights, LossGradients* grads = nullptr);

}  // namespace s2b
