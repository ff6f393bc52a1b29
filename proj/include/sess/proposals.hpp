// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sess/geometry.hpp"

namespace sess {

/// One object hypothesis. The derived fields (size, class_probs, objectness)
/// are kept alongside the pre-activations they came from so losses can
/// differentiate with respect to the latter.
struct Proposal {
  Vec3 center{};
  Vec3 size{1.0, 1.0, 1.0};
  double heading = 0.0;
  std::vector<double> class_probs;
  double objectness = 0.5;

  Vec3 log_size{};
  std::vector<double> class_logits;
  double objectness_logit = 0.0;

  /// Index of the seed point (in the forwarded cloud) this proposal grew from.
  std::size_t seed_index = 0;
  Vec3 seed_xyz{};

  int predicted_class() const;
};

struct ProposalSet {
  int class_count = 0;
  std::vector<Proposal> proposals;

  std::size_t size() const { return proposals.size(); }
  bool empty() const { return proposals.empty(); }
  const Proposal& operator[](std::size_t i) const { return proposals[i]; }
  Proposal& operator[](std::size_t i) { return proposals[i]; }
};

/// Gradient of a scalar loss with respect to each proposal's head outputs,
/// packed per proposal as [center(3), log_size(3), class_logits(K), objectness_logit].
class OutputGradient {
 public:
  OutputGradient() = default;
  OutputGradient(std::size_t proposal_count, int class_count);

  static std::size_t stride_for(int class_count) { return 7 + static_cast<std::size_t>(class_count); }

  std::size_t proposal_count() const { return proposal_count_; }
  int class_count() const { return class_count_; }
  std::size_t stride() const { return stride_for(class_count_); }

  std::span<double> row(std::size_t j) { return {data_.data() + j * stride(), stride()}; }
  std::span<const double> row(std::size_t j) const { return {data_.data() + j * stride(), stride()}; }
  double* center(std::size_t j) { return data_.data() + j * stride(); }
  double* log_size(std::size_t j) { return data_.data() + j * stride() + 3; }
  double* logits(std::size_t j) { return data_.data() + j * stride() + 6; }
  double& objectness(std::size_t j) { return data_[j * stride() + 6 + class_count_]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// this += scale * other (shapes must match).
  void add_scaled(const OutputGradient& other, double scale);
  void scale(double s);

 private:
  std::size_t proposal_count_ = 0;
  int class_count_ = 0;
  std::vector<double> data_;
};

}  // namespace sess
