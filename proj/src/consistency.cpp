// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sess {

namespace {

std::size_t nearest_center(const Vec3& c, const ProposalSet& pool) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double d2 = squared_norm(pool[i].center - c);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

std::vector<double> clamp_renormalize(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) sum += (out[k] = std::clamp(p[k], kProbabilityFloor, 1.0));
  for (double& v : out) v /= sum;
  return out;
}

void check_grad(const OutputGradient* grad, const ProposalSet& student) {
  if (grad != nullptr && (grad->proposal_count() != student.size() || grad->class_count() != student.class_count))
    throw std::invalid_argument("consistency gradient shape does not match the student proposals");
}

// Sub-set of proposals kept by the objectness filter, with the original indices.
ProposalSet filter_by_objectness(const ProposalSet& set, double threshold, std::vector<std::size_t>& kept) {
  ProposalSet out;
  out.class_count = set.class_count;
  kept.clear();
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].objectness >= threshold) {
      out.proposals.push_back(set[i]);
      kept.push_back(i);
    }
  }
  return out;
}

}  // namespace

Alignment align(const ProposalSet& student, const ProposalSet& teacher) {
  Alignment a;
  if (student.empty() || teacher.empty()) return a;
  a.teacher_to_student.reserve(teacher.size());
  for (const auto& t : teacher.proposals) a.teacher_to_student.push_back(nearest_center(t.center, student));
  a.student_to_teacher.reserve(student.size());
  for (const auto& s : student.proposals) a.student_to_teacher.push_back(nearest_center(s.center, teacher));
  return a;
}

double center_loss(const ProposalSet& student, const ProposalSet& teacher, const Alignment& alignment,
                   OutputGradient* grad, double scale) {
  check_grad(grad, student);
  if (alignment.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(student.size() + teacher.size());
  double sum = 0.0;
  auto accumulate = [&](std::size_t s, std::size_t t) {
    const Vec3 diff = student[s].center - teacher[t].center;
    const double d = norm(diff);
    sum += d;
    if (grad != nullptr && d > 0.0) {
      double* g = grad->center(s);
      for (int k = 0; k < 3; ++k) g[k] += scale * inv * diff[k] / d;
    }
  };
  for (std::size_t s = 0; s < student.size(); ++s) accumulate(s, alignment.student_to_teacher[s]);
  for (std::size_t t = 0; t < teacher.size(); ++t) accumulate(alignment.teacher_to_student[t], t);
  return sum * inv;
}

double clamped_kl(const std::vector<double>& p, const std::vector<double>& q) {
  const auto a = clamp_renormalize(p);
  const auto b = clamp_renormalize(q);
  double kl = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) kl += a[k] * std::log(a[k] / b[k]);
  return kl;
}

double class_loss(const ProposalSet& student, const ProposalSet& teacher, const Alignment& alignment,
                  OutputGradient* grad, double scale) {
  check_grad(grad, student);
  if (alignment.empty()) return 0.0;
  const std::size_t K = static_cast<std::size_t>(student.class_count);
  const double inv = 1.0 / static_cast<double>(teacher.size());
  double sum = 0.0;
  std::vector<double> dq(K), dp(K);
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    const std::size_t s = alignment.teacher_to_student[t];
    const auto& p = student[s].class_probs;
    const auto q = clamp_renormalize(p);
    const auto r = clamp_renormalize(teacher[t].class_probs);
    for (std::size_t k = 0; k < K; ++k) sum += q[k] * std::log(q[k] / r[k]);
    if (grad == nullptr) continue;

    // KL -> renormalised q -> clamped c -> softmax probabilities -> logits.
    double c_sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) c_sum += std::clamp(p[k], kProbabilityFloor, 1.0);
    double q_dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      dq[k] = std::log(q[k] / r[k]) + 1.0;
      q_dot += q[k] * dq[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double dc = (dq[k] - q_dot) / c_sum;
      dp[k] = p[k] > kProbabilityFloor ? dc : 0.0;
    }
    double p_dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) p_dot += p[k] * dp[k];
    double* gz = grad->logits(s);
    for (std::size_t k = 0; k < K; ++k) gz[k] += scale * inv * p[k] * (dp[k] - p_dot);
  }
  return sum * inv;
}

double size_loss(const ProposalSet& student, const ProposalSet& teacher, const Alignment& alignment,
                 OutputGradient* grad, double scale) {
  check_grad(grad, student);
  if (alignment.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(teacher.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    const std::size_t s = alignment.teacher_to_student[t];
    const Vec3 diff = student[s].size - teacher[t].size;
    sum += squared_norm(diff);
    if (grad != nullptr) {
      double* g = grad->log_size(s);
      for (int k = 0; k < 3; ++k) g[k] += scale * inv * 2.0 * diff[k] * student[s].size[k];
    }
  }
  return sum * inv;
}

ConsistencyLoss total_consistency(const ProposalSet& student, const ProposalSet& teacher,
                                  const ConsistencyWeights& weights) {
  ConsistencyLoss out;
  out.grad = OutputGradient(student.size(), student.class_count);

  if (weights.objectness_filter > 0.0) {
    std::vector<std::size_t> s_kept, t_kept;
    const ProposalSet s_sub = filter_by_objectness(student, weights.objectness_filter, s_kept);
    const ProposalSet t_sub = filter_by_objectness(teacher, weights.objectness_filter, t_kept);
    ConsistencyWeights plain = weights;
    plain.objectness_filter = 0.0;
    ConsistencyLoss sub = total_consistency(s_sub, t_sub, plain);
    out.total = sub.total;
    out.center = sub.center;
    out.cls = sub.cls;
    out.size = sub.size;
    for (std::size_t i = 0; i < s_kept.size(); ++i) {
      const auto src = sub.grad.row(i);
      auto dst = out.grad.row(s_kept[i]);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
  }

  const Alignment a = align(student, teacher);
  OutputGradient* g = &out.grad;
  out.center = center_loss(student, teacher, a, weights.center != 0.0 ? g : nullptr, weights.center);
  out.cls = class_loss(student, teacher, a, weights.cls != 0.0 ? g : nullptr, weights.cls);
  out.size = size_loss(student, teacher, a, weights.size != 0.0 ? g : nullptr, weights.size);
  out.total = weights.center * out.center + weights.cls * out.cls + weights.size * out.size;
  return out;
}

}  // namespace sess
