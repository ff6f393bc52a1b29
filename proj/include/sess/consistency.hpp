// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "sess/proposals.hpp"

namespace sess {

/// Nearest-center matching in both directions. Not bijective in general.
struct Alignment {
  std::vector<std::size_t> teacher_to_student;
  std::vector<std::size_t> student_to_teacher;

  /// True when either side had no proposals; all losses are then 0.
  bool empty() const { return teacher_to_student.empty() || student_to_teacher.empty(); }
};

/// For each teacher center the nearest student center (and vice versa);
/// ties go to the lower index.
Alignment align(const ProposalSet& student, const ProposalSet& teacher);

struct ConsistencyWeights {
  double center = 1.0;
  double cls = 2.0;
  double size = 1.0;
  /// When > 0, only proposals with objectness >= this take part (off by default).
  double objectness_filter = 0.0;

  bool operator==(const ConsistencyWeights&) const = default;
};

/// Clamp floor applied to both distributions before the KL divergence.
inline constexpr double kProbabilityFloor = 1e-8;

/// Each loss optionally adds `scale` * d(loss)/d(student outputs) into `grad`.
/// Teacher proposals are constants.
double center_loss(const ProposalSet& student, const ProposalSet& teacher, const Alignment& alignment,
                   OutputGradient* grad = nullptr, double scale = 1.0);
double class_loss(const ProposalSet& student, const ProposalSet& teacher, const Alignment& alignment,
                  OutputGradient* grad = nullptr, double scale = 1.0);
double size_loss(const ProposalSet& student, const ProposalSet& teacher, const Alignment& alignment,
                 OutputGradient* grad = nullptr, double scale = 1.0);

/// KL(p || q) after clamping both to [floor, 1] and renormalising.
double clamped_kl(const std::vector<double>& p, const std::vector<double>& q);

struct ConsistencyLoss {
  double total = 0.0;
  double center = 0.0;
  double cls = 0.0;
  double size = 0.0;
  OutputGradient grad;  // w.r.t. the student outputs
};

/// lambda_center * L_center + lambda_class * L_class + lambda_size * L_size.
ConsistencyLoss total_consistency(const ProposalSet& student, const ProposalSet& teacher,
                                  const ConsistencyWeights& weights);

}  // namespace sess
