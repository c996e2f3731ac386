// SPDX-License-Identifier: Apache-2.0
#include "s2b/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace s2b {

namespace {

void require_two_columns(const Eigen::MatrixXd& logits, const char* what) {
  if (logits.rows() < 1 || logits.cols() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected N x 2 logits with N >= 1");
  }
}

// Row-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

double log_sum_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

void LossWeights::validate() const {
  for (double l : {lambda_cls, lambda_feat, lambda_kd, lambda_ordcon, gamma_focal, alpha_focal[0], alpha_focal[1]}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature T must be > 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("contrastive tau must be > 0");
}

double focal_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels, const std::array<double, 2>& alpha,
                  double gamma, Eigen::MatrixXd* grad_logits) {
  require_two_columns(logits, "focal_loss");
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw std::invalid_argument("focal_loss: label count does not match logits");
  }
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  const Eigen::Index n = logits.rows();
  const Eigen::MatrixXd logp = log_softmax(logits);
  if (grad_logits) grad_logits->setZero(n, 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = labels[i];
    if (c != 0 && c != 1) throw std::invalid_argument("focal_loss: labels must be 0 or 1");
    const double log_p = logp(i, c);
    const double p = std::exp(log_p);
    const double q = std::exp(logp(i, 1 - c));  // 1 - p without cancellation
    const double a = alpha[c];
    total += -a * std::pow(q, gamma) * log_p;
    if (grad_logits) {
      // d/dp of the per-sample loss times p, so that d/du_j = g * (delta_cj - p_j).
      const double focus = (gamma > 0.0 && q > 0.0) ? gamma * std::pow(q, gamma - 1.0) * p * log_p : 0.0;
      const double g = a * (focus - std::pow(q, gamma)) / double(n);
      (*grad_logits)(i, c) += g * (1.0 - p);
      (*grad_logits)(i, 1 - c) += g * (-q);
    }
  }
  return total / double(n);
}

double feature_alignment_loss(const Eigen::MatrixXd& f_s, const Eigen::MatrixXd& f_t, Eigen::MatrixXd* grad_fs,
                              Eigen::MatrixXd* grad_ft) {
  if (f_s.rows() < 1 || f_s.rows() != f_t.rows() || f_s.cols() != f_t.cols()) {
    throw std::invalid_argument("feature_alignment_loss: feature shapes must match and be non-empty");
  }
  const Eigen::Index n = f_s.rows();
  if (grad_fs) grad_fs->setZero(n, f_s.cols());
  if (grad_ft) grad_ft->setZero(n, f_t.cols());
  double sum_cos = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ns = f_s.row(i).norm();
    const double nt = f_t.row(i).norm();
    if (!(ns > 0.0) || !(nt > 0.0)) throw std::domain_error("feature_alignment_loss: zero-norm feature row");
    const Eigen::RowVectorXd s_hat = f_s.row(i) / ns;
    const Eigen::RowVectorXd t_hat = f_t.row(i) / nt;
    const double cos = s_hat.dot(t_hat);
    sum_cos += cos;
    if (grad_fs) grad_fs->row(i) = -(t_hat - cos * s_hat) / (ns * double(n));
    if (grad_ft) grad_ft->row(i) = -(s_hat - cos * t_hat) / (nt * double(n));
  }
  return 1.0 - sum_cos / double(n);
}

double kd_loss(const Eigen::MatrixXd& u_teacher, const Eigen::MatrixXd& u_student, double temperature,
               Eigen::MatrixXd* grad_student) {
  if (!(temperature > 0.0)) throw std::invalid_argument("kd_loss: temperature must be > 0");
  require_two_columns(u_teacher, "kd_loss");
  if (u_teacher.rows() != u_student.rows() || u_student.cols() != 2) {
    throw std::invalid_argument("kd_loss: teacher and student logits must have the same shape");
  }
  const Eigen::Index n = u_teacher.rows();
  const Eigen::MatrixXd log_pt = log_softmax(u_teacher / temperature);
  const Eigen::MatrixXd log_ps = log_softmax(u_student / temperature);
  const Eigen::MatrixXd pt = log_pt.array().exp();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) {
      if (pt(i, c) > 0.0) kl += pt(i, c) * (log_pt(i, c) - log_ps(i, c));
    }
  }
  if (grad_student) {
    *grad_student = (log_ps.array().exp() - pt.array()).matrix() * (temperature / double(n));
  }
  // Clamp rounding noise; KL is non-negative by construction.
  return std::max(0.0, temperature * temperature * kl / double(n));
}

double ordinal_contrastive_loss(const Eigen::MatrixXd& embeddings, const Eigen::VectorXd& blur_levels, double tau,
                                const std::vector<int>* anchors, Eigen::MatrixXd* grad_embeddings) {
  const Eigen::Index m = embeddings.rows();
  if (m < 2) throw std::invalid_argument("ordinal_contrastive_loss: need at least two embeddings");
  if (blur_levels.size() != m) throw std::invalid_argument("ordinal_contrastive_loss: one blur level per row");
  if (!(tau > 0.0)) throw std::invalid_argument("ordinal_contrastive_loss: tau must be > 0");

  std::vector<int> all;
  if (anchors == nullptr || anchors->empty()) {
    all.resize(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    anchors = &all;
  }
  Eigen::VectorXd norms(m);
  Eigen::MatrixXd z_hat(m, embeddings.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    norms(r) = embeddings.row(r).norm();
    if (!(norms(r) > 0.0) || !std::isfinite(norms(r))) {
      throw std::domain_error("ordinal_contrastive_loss: zero-norm embedding");
    }
    z_hat.row(r) = embeddings.row(r) / norms(r);
  }
  const Eigen::MatrixXd sim = (z_hat * z_hat.transpose()) / tau;
  const double scale = 1.0 / (double(anchors->size()) * double(m - 1));

  Eigen::MatrixXd grad_sim = Eigen::MatrixXd::Zero(m, m);
  double total = 0.0;
  std::vector<int> order;
  for (int i : *anchors) {
    if (i < 0 || i >= m) throw std::invalid_argument("ordinal_contrastive_loss: anchor index out of range");
    order.clear();
    for (int k = 0; k < m; ++k) {
      if (k != i) order.push_back(k);
    }
    auto delta = [&](int k) { return std::abs(blur_levels(i) - blur_levels(k)); };
    // Largest severity gap first: the denominator of candidate j is the prefix of this
    // order that ends with the last candidate tied with j.
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return delta(a) > delta(b); });

    std::vector<std::size_t> group_end;   // exclusive end index of each tie group
    std::vector<double> group_lse;        // log-sum-exp over the prefix ending there
    std::vector<int> group_of(static_cast<std::size_t>(m), -1);
    double running = -INFINITY;
    for (std::size_t pos = 0; pos < order.size();) {
      std::size_t end = pos;
      while (end < order.size() && delta(order[end]) == delta(order[pos])) {
        running = log_sum_exp(running, sim(i, order[end]));
        group_of[order[end]] = static_cast<int>(group_end.size());
        ++end;
      }
      group_end.push_back(end);
      group_lse.push_back(running);
      pos = end;
    }
    for (int j : order) total += group_lse[group_of[j]] - sim(i, j);

    if (grad_embeddings) {
      // Candidate k sits in the denominator of every j whose group is at or after k's:
      // d/ds_ik = exp(s_ik) * sum_{g >= group(k)} count_g * exp(-lse_g) - 1.
      const std::size_t groups = group_end.size();
      std::vector<double> log_tail(groups + 1, -INFINITY);
      for (std::size_t g = groups; g-- > 0;) {
        const std::size_t begin = g == 0 ? 0 : group_end[g - 1];
        const double count = double(group_end[g] - begin);
        log_tail[g] = log_sum_exp(log_tail[g + 1], std::log(count) - group_lse[g]);
      }
      for (int k : order) grad_sim(i, k) += scale * (std::exp(sim(i, k) + log_tail[group_of[k]]) - 1.0);
    }
  }

  if (grad_embeddings) {
    // s_ik = z_i . z_k / tau touches both rows.
    const Eigen::MatrixXd grad_hat = ((grad_sim + grad_sim.transpose()) * z_hat) / tau;
    grad_embeddings->resize(m, embeddings.cols());
    for (Eigen::Index r = 0; r < m; ++r) {
      const double radial = z_hat.row(r).dot(grad_hat.row(r));
      grad_embeddings->row(r) = (grad_hat.row(r) - radial * z_hat.row(r)) / norms(r);
    }
  }
  return total * scale;
}

LossBreakdown total_loss(const LossInputs& in, const LossWeights& w, LossGradients* grads) {
  w.validate();
  LossBreakdown out;
  Eigen::MatrixXd g_cls, g_kd, g_feat, g_ord;
  const bool want = grads != nullptr;

  out.cls = focal_loss(in.student_logits, in.labels, w.alpha_focal, w.gamma_focal, want ? &g_cls : nullptr);
  out.kd = kd_loss(in.teacher_logits, in.student_logits, w.temperature, want ? &g_kd : nullptr);
  out.feat = feature_alignment_loss(in.student_features, in.teacher_features, want ? &g_feat : nullptr, nullptr);
  if (in.embeddings.rows() >= 2) {
    out.ordcon = ordinal_contrastive_loss(in.embeddings, in.blur_levels, w.tau, &in.anchors, want ? &g_ord : nullptr);
  } else if (w.lambda_ordcon > 0.0) {
    throw std::invalid_argument("total_loss: ordinal contrastive term needs at least two embeddings");
  }
  out.total = w.lambda_cls * out.cls + w.lambda_feat * out.feat + w.lambda_kd * out.kd + w.lambda_ordcon * out.ordcon;

  if (grads) {
    grads->student_logits = w.lambda_cls * g_cls + w.lambda_kd * g_kd;
    grads->student_features = w.lambda_feat * g_feat;
    if (g_ord.size() > 0) {
      grads->embeddings = w.lambda_ordcon * g_ord;
    } else {
      grads->embeddings = Eigen::MatrixXd::Zero(in.embeddings.rows(), in.embeddings.cols());
    }
  }
  return out;
}

}  // namespace s2b
