// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sess/geometry.hpp"
#include "sess/proposals.hpp"
#include "sess/random.hpp"

namespace sess {

struct LossWeights {
  double objectness = 0.5;
  double center = 1.0;
  double size = 1.0;
  double cls = 1.0;

  bool operator==(const LossWeights&) const = default;
};

/// Seed-and-vote detector:
///   backbone  per-point MLP 3 -> H -> H (ReLU), global max-pool g
///   seeds     farthest point sampling, proposal_count of them
///   grouping  per seed, MLP 3 -> H -> H (ReLU) on the offsets of up to
///             group_size neighbours within group_radius, max-pooled
///   head      [seed_xyz, seed feature, g] -> H (ReLU) -> [offset(3), log-size(3), logits(K), objectness]
/// With group_radius <= 0 the seed feature is the seed's own backbone feature.
struct DetectorConfig {
  int hidden_width = 32;
  int proposal_count = 16;
  int class_count = 4;
  /// Objectness target: predicted center within this distance of a GT center.
  double positive_radius = 0.3;
  double group_radius = 1.0;
  int group_size = 32;
  /// Seeds inside a GT box grown by this margin regress toward that box.
  double inside_margin = 0.05;
  LossWeights loss_weights;

  void validate() const;
  int head_input_width() const { return 3 + 2 * hidden_width; }
  int head_output_width() const { return 7 + class_count; }
  bool uses_grouping() const { return group_radius > 0.0; }

  bool operator==(const DetectorConfig&) const = default;
};

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  /// Rows of an input-major weight matrix; 0 for biases.
  std::size_t fan_in = 0;

  bool is_bias() const { return fan_in == 0; }
  bool operator==(const TensorSlot&) const = default;
};

/// Named partition of the flat parameter array.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const DetectorConfig& config);

  const std::vector<TensorSlot>& slots() const { return slots_; }
  std::size_t total() const { return total_; }
  const TensorSlot& slot(const std::string& name) const;
  bool contains(const std::string& name) const;

  /// Appends a slot at the current end.
  void add(TensorSlot slot);

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
};

struct ParamVector {
  ParamLayout layout;
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(ParamLayout l) : layout(std::move(l)), values(layout.total(), 0.0) {}

  std::size_t size() const { return values.size(); }
  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;

  bool operator==(const ParamVector&) const = default;
};

/// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0.
ParamVector init_params(const DetectorConfig& config, Rng& rng);

/// Greedy FPS from index 0; ties go to the lowest index. Requires count <= n.
std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t count);

/// First `limit` indices within `radius` of cloud[center], center first.
std::vector<std::size_t> ball_query(const PointCloud& cloud, std::size_t center, double radius, std::size_t limit);

/// Activations kept for the backward pass.
struct ForwardCache {
  PointCloud cloud;
  std::size_t hidden = 0;
  std::vector<double> backbone_hidden;  // n x H, post-ReLU
  std::vector<double> backbone_out;     // n x H, post-ReLU
  std::vector<double> global_feature;   // H
  std::vector<std::size_t> global_argmax;  // H point indices
  std::vector<std::size_t> seeds;
  std::vector<std::size_t> group_begin;   // seeds + 1 offsets into group_members
  std::vector<std::size_t> group_members; // point indices
  std::vector<double> local_hidden;       // members x H
  std::vector<double> local_out;          // members x H
  std::vector<std::size_t> local_argmax;  // seeds x H, absolute member slot
  std::vector<double> head_input;   // seeds x (3 + 2H)
  std::vector<double> head_hidden;  // seeds x H
};

struct ForwardResult {
  ProposalSet proposals;
  ForwardCache cache;
};

/// Requires cloud.size() >= proposal_count.
ForwardResult forward(const ParamVector& params, const PointCloud& cloud, const DetectorConfig& config);
ProposalSet predict(const ParamVector& params, const PointCloud& cloud, const DetectorConfig& config);

/// Adds d(loss)/d(params) into `grad` (same layout as params), given the
/// gradient of the loss with respect to the head outputs.
void backward_accumulate(const ParamVector& params, const ForwardCache& cache, const OutputGradient& output_grad,
                         const DetectorConfig& config, std::span<double> grad);
ParamVector backward(const ParamVector& params, const ForwardCache& cache, const OutputGradient& output_grad,
                     const DetectorConfig& config);

double smooth_l1(double x);
double smooth_l1_grad(double x);

struct SupervisedLoss {
  double total = 0.0;
  double objectness = 0.0;
  double center = 0.0;
  double size = 0.0;
  double cls = 0.0;
  std::size_t positives = 0;   // objectness targets equal to 1
  std::size_t regressed = 0;   // proposals in the regression support
  OutputGradient grad;
};

/// Which GT (if any) each proposal is tied to.
struct Assignment {
  static constexpr int kNone = -1;
  std::vector<int> nearest;     // nearest GT by predicted center (kNone without GTs)
  std::vector<bool> positive;   // predicted center within positive_radius of nearest
  std::vector<int> regress_to;  // GT the proposal regresses toward, or kNone
};

/// Objectness target: the proposal's predicted center lies within
/// positive_radius of its nearest GT center. Regression target: the GT box
/// (grown by inside_margin) containing the proposal's seed, nearest center
/// first; otherwise the nearest GT when the proposal is positive.
Assignment assign_targets(const ProposalSet& props, const std::vector<Box3D>& gts, const DetectorConfig& config);

/// w_obj * BCE(objectness) averaged over all proposals, plus over the
/// regression support: w_ctr * smoothL1(center - c*), w_size * smoothL1(log
/// size - log d*), w_cls * cross-entropy; each term averaged over its own support.
SupervisedLoss supervised_loss(const ProposalSet& props, const std::vector<Box3D>& gts, const DetectorConfig& config);

// ---- optimizer ----

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int decay_epoch = 80;
  double decay_factor = 0.1;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  bool operator==(const AdamState&) const = default;
};

/// Step-decayed learning rate for a 0-based epoch.
double learning_rate_at(const AdamConfig& config, int epoch);

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config);

// ---- checkpoints ----

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  DetectorConfig config;
  ParamVector params;
};

std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sess
