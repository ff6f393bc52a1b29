// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/proposals.hpp"

#include <algorithm>
#include <stdexcept>

namespace sess {

int Proposal::predicted_class() const {
  return static_cast<int>(std::max_element(class_probs.begin(), class_probs.end()) - class_probs.begin());
}

OutputGradient::OutputGradient(std::size_t proposal_count, int class_count)
    : proposal_count_(proposal_count),
      class_count_(class_count),
      data_(proposal_count * stride_for(class_count), 0.0) {}

void OutputGradient::add_scaled(const OutputGradient& other, double s) {
  if (other.proposal_count_ != proposal_count_ || other.class_count_ != class_count_)
    throw std::invalid_argument("OutputGradient shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
}

void OutputGradient::scale(double s) {
  for (double& v : data_) v *= s;
}

}  // namespace sess
