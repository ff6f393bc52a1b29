// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "sess/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sess {

namespace {

// Weights are stored input-major: w[d * n_out + c] connects input d to output c.
void dense_forward(const double* w, const double* b, const double* in, int n_in, int n_out, double* out) {
  for (int c = 0; c < n_out; ++c) out[c] = b[c];
  for (int d = 0; d < n_in; ++d) {
    const double x = in[d];
    const double* row = w + static_cast<std::size_t>(d) * n_out;
    for (int c = 0; c < n_out; ++c) out[c] += row[c] * x;
  }
}

void relu_inplace(double* v, int n) {
  for (int i = 0; i < n; ++i) v[i] = v[i] > 0.0 ? v[i] : 0.0;
}

// dW += in (x) dout, db += dout, din = W dout (din may be null).
void dense_backward(const double* w, const double* in, const double* dout, int n_in, int n_out, double* dw,
                    double* db, double* din) {
  for (int c = 0; c < n_out; ++c) db[c] += dout[c];
  for (int d = 0; d < n_in; ++d) {
    const double x = in[d];
    double* grow = dw + static_cast<std::size_t>(d) * n_out;
    for (int c = 0; c < n_out; ++c) grow[c] += x * dout[c];
  }
  if (din == nullptr) return;
  for (int d = 0; d < n_in; ++d) {
    const double* row = w + static_cast<std::size_t>(d) * n_out;
    double acc = 0.0;
    for (int c = 0; c < n_out; ++c) acc += row[c] * dout[c];
    din[d] = acc;
  }
}

// Views of a two-layer 3 -> H -> H ReLU perceptron inside a flat array.
struct Mlp {
  std::size_t w1, b1, w2, b2;
  int hidden;

  static Mlp at(const ParamLayout& layout, const std::string& prefix, int hidden) {
    return {layout.slot(prefix + ".w1").offset, layout.slot(prefix + ".b1").offset,
            layout.slot(prefix + ".w2").offset, layout.slot(prefix + ".b2").offset, hidden};
  }

  void forward(const double* p, const double* x, double* h, double* f) const {
    dense_forward(p + w1, p + b1, x, 3, hidden, h);
    relu_inplace(h, hidden);
    dense_forward(p + w2, p + b2, h, hidden, hidden, f);
    relu_inplace(f, hidden);
  }

  // df is the gradient w.r.t. the post-ReLU output f; scratch needs 3 * hidden.
  void backward(const double* p, const double* x, const double* h, const double* f, const double* df, double* g,
                double* scratch) const {
    double* da2 = scratch;
    double* dh = scratch + hidden;
    double* da1 = scratch + 2 * hidden;
    for (int c = 0; c < hidden; ++c) da2[c] = f[c] > 0.0 ? df[c] : 0.0;
    dense_backward(p + w2, h, da2, hidden, hidden, g + w2, g + b2, dh);
    for (int c = 0; c < hidden; ++c) da1[c] = h[c] > 0.0 ? dh[c] : 0.0;
    dense_backward(p + w1, x, da1, 3, hidden, g + w1, g + b1, nullptr);
  }
};

bool any_nonzero(const double* v, int n) {
  for (int i = 0; i < n; ++i)
    if (v[i] != 0.0) return true;
  return false;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

void DetectorConfig::validate() const {
  if (hidden_width < 4) throw std::invalid_argument("hidden_width must be >= 4");
  if (proposal_count < 1) throw std::invalid_argument("proposal_count must be >= 1");
  if (class_count < 2) throw std::invalid_argument("class_count must be >= 2");
  if (!(positive_radius > 0.0)) throw std::invalid_argument("positive_radius must be > 0");
  if (uses_grouping() && group_size < 1) throw std::invalid_argument("group_size must be >= 1");
  if (inside_margin < 0.0) throw std::invalid_argument("inside_margin must be >= 0");
}

ParamLayout::ParamLayout(const DetectorConfig& config) {
  const auto h = static_cast<std::size_t>(config.hidden_width);
  auto add_mlp = [&](const std::string& prefix) {
    add({prefix + ".w1", 0, 3 * h, 3});
    add({prefix + ".b1", 0, h, 0});
    add({prefix + ".w2", 0, h * h, h});
    add({prefix + ".b2", 0, h, 0});
  };
  add_mlp("backbone");
  if (config.uses_grouping()) add_mlp("local");
  const auto in = static_cast<std::size_t>(config.head_input_width());
  const auto out = static_cast<std::size_t>(config.head_output_width());
  add({"head.w1", 0, in * h, in});
  add({"head.b1", 0, h, 0});
  add({"head.w2", 0, h * out, h});
  add({"head.b2", 0, out, 0});
}

void ParamLayout::add(TensorSlot slot) {
  if (contains(slot.name)) throw std::invalid_argument("duplicate tensor '" + slot.name + "'");
  slot.offset = total_;
  total_ += slot.length;
  slots_.push_back(std::move(slot));
}

bool ParamLayout::contains(const std::string& name) const {
  return std::any_of(slots_.begin(), slots_.end(), [&](const TensorSlot& s) { return s.name == name; });
}

const TensorSlot& ParamLayout::slot(const std::string& name) const {
  for (const auto& s : slots_)
    if (s.name == name) return s;
  throw std::out_of_range("no tensor named '" + name + "'");
}

std::span<double> ParamVector::tensor(const std::string& name) {
  const auto& s = layout.slot(name);
  return {values.data() + s.offset, s.length};
}

std::span<const double> ParamVector::tensor(const std::string& name) const {
  const auto& s = layout.slot(name);
  return {values.data() + s.offset, s.length};
}

ParamVector init_params(const DetectorConfig& config, Rng& rng) {
  config.validate();
  ParamVector params{ParamLayout(config)};
  for (const auto& slot : params.layout.slots()) {
    if (slot.is_bias()) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(slot.fan_in));
    for (std::size_t i = 0; i < slot.length; ++i) params.values[slot.offset + i] = rng.uniform(-bound, bound);
  }
  return params;
}

std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t count) {
  const std::size_t n = cloud.size();
  if (count > n) throw std::invalid_argument("farthest_point_sampling: count exceeds point count");
  std::vector<std::size_t> chosen;
  if (count == 0) return chosen;
  chosen.reserve(count);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = 0;
  for (std::size_t k = 0; k < count; ++k) {
    chosen.push_back(current);
    const Vec3& c = cloud[current];
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = squared_norm(cloud[i] - c);
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return chosen;
}

std::vector<std::size_t> ball_query(const PointCloud& cloud, std::size_t center, double radius, std::size_t limit) {
  std::vector<std::size_t> members{center};
  const double r2 = radius * radius;
  const Vec3& c = cloud[center];
  for (std::size_t i = 0; i < cloud.size() && members.size() < limit; ++i) {
    if (i == center) continue;
    if (squared_norm(cloud[i] - c) <= r2) members.push_back(i);
  }
  return members;
}

ForwardResult forward(const ParamVector& params, const PointCloud& cloud, const DetectorConfig& config) {
  const int H = config.hidden_width;
  const auto h = static_cast<std::size_t>(H);
  const std::size_t n = cloud.size();
  const auto seeds_wanted = static_cast<std::size_t>(config.proposal_count);
  if (n == 0) throw std::invalid_argument("forward: empty point cloud");
  if (n < seeds_wanted) throw std::invalid_argument("forward: fewer points than proposals");
  if (params.layout.total() != params.values.size()) throw std::invalid_argument("forward: malformed parameters");

  const double* p = params.values.data();
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.cloud = cloud;
  cache.hidden = h;

  const Mlp backbone = Mlp::at(params.layout, "backbone", H);
  cache.backbone_hidden.assign(n * h, 0.0);
  cache.backbone_out.assign(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    backbone.forward(p, cloud[i].data(), &cache.backbone_hidden[i * h], &cache.backbone_out[i * h]);

  cache.global_feature.assign(h, -std::numeric_limits<double>::infinity());
  cache.global_argmax.assign(h, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* f = &cache.backbone_out[i * h];
    for (std::size_t c = 0; c < h; ++c) {
      if (f[c] > cache.global_feature[c]) {
        cache.global_feature[c] = f[c];
        cache.global_argmax[c] = i;
      }
    }
  }

  cache.seeds = farthest_point_sampling(cloud, seeds_wanted);
  const std::size_t S = cache.seeds.size();

  std::vector<double> seed_features(S * h);
  if (config.uses_grouping()) {
    const Mlp local = Mlp::at(params.layout, "local", H);
    cache.group_begin.assign(1, 0);
    for (std::size_t j = 0; j < S; ++j) {
      const auto members = ball_query(cloud, cache.seeds[j], config.group_radius,
                                      static_cast<std::size_t>(config.group_size));
      cache.group_members.insert(cache.group_members.end(), members.begin(), members.end());
      cache.group_begin.push_back(cache.group_members.size());
    }
    const std::size_t total_members = cache.group_members.size();
    cache.local_hidden.assign(total_members * h, 0.0);
    cache.local_out.assign(total_members * h, 0.0);
    cache.local_argmax.assign(S * h, 0);
    for (std::size_t j = 0; j < S; ++j) {
      const Vec3& s = cloud[cache.seeds[j]];
      double* feat = &seed_features[j * h];
      std::fill(feat, feat + h, -std::numeric_limits<double>::infinity());
      for (std::size_t m = cache.group_begin[j]; m < cache.group_begin[j + 1]; ++m) {
        const Vec3 rel = cloud[cache.group_members[m]] - s;
        double* f = &cache.local_out[m * h];
        local.forward(p, rel.data(), &cache.local_hidden[m * h], f);
        for (std::size_t c = 0; c < h; ++c) {
          if (f[c] > feat[c]) {
            feat[c] = f[c];
            cache.local_argmax[j * h + c] = m;
          }
        }
      }
    }
  } else {
    for (std::size_t j = 0; j < S; ++j)
      std::copy_n(&cache.backbone_out[cache.seeds[j] * h], h, &seed_features[j * h]);
  }

  const int in_w = config.head_input_width();
  const int out_w = config.head_output_width();
  const std::size_t w1 = params.layout.slot("head.w1").offset;
  const std::size_t b1 = params.layout.slot("head.b1").offset;
  const std::size_t w2 = params.layout.slot("head.w2").offset;
  const std::size_t b2 = params.layout.slot("head.b2").offset;
  cache.head_input.assign(S * in_w, 0.0);
  cache.head_hidden.assign(S * h, 0.0);
  std::vector<double> out(static_cast<std::size_t>(out_w));

  const int K = config.class_count;
  result.proposals.class_count = K;
  result.proposals.proposals.resize(S);
  for (std::size_t j = 0; j < S; ++j) {
    double* x = &cache.head_input[j * in_w];
    const Vec3& s = cloud[cache.seeds[j]];
    std::copy_n(s.data(), 3, x);
    std::copy_n(&seed_features[j * h], h, x + 3);
    std::copy_n(cache.global_feature.data(), h, x + 3 + h);
    double* u = &cache.head_hidden[j * h];
    dense_forward(p + w1, p + b1, x, in_w, H, u);
    relu_inplace(u, H);
    dense_forward(p + w2, p + b2, u, H, out_w, out.data());

    Proposal& prop = result.proposals.proposals[j];
    prop.seed_index = cache.seeds[j];
    prop.seed_xyz = s;
    prop.center = {s[0] + out[0], s[1] + out[1], s[2] + out[2]};
    prop.log_size = {out[3], out[4], out[5]};
    prop.size = {std::exp(out[3]), std::exp(out[4]), std::exp(out[5])};
    prop.heading = 0.0;
    prop.class_logits.assign(out.begin() + 6, out.begin() + 6 + K);
    const double zmax = *std::max_element(prop.class_logits.begin(), prop.class_logits.end());
    prop.class_probs.resize(K);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += (prop.class_probs[k] = std::exp(prop.class_logits[k] - zmax));
    for (double& q : prop.class_probs) q /= denom;
    prop.objectness_logit = out[6 + K];
    prop.objectness = sigmoid(prop.objectness_logit);
  }
  return result;
}

ProposalSet predict(const ParamVector& params, const PointCloud& cloud, const DetectorConfig& config) {
  return forward(params, cloud, config).proposals;
}

void backward_accumulate(const ParamVector& params, const ForwardCache& cache, const OutputGradient& output_grad,
                         const DetectorConfig& config, std::span<double> grad) {
  const int H = config.hidden_width;
  const auto h = static_cast<std::size_t>(H);
  const std::size_t S = cache.seeds.size();
  if (grad.size() != params.values.size()) throw std::invalid_argument("backward: gradient size mismatch");
  if (output_grad.proposal_count() != S || output_grad.class_count() != config.class_count)
    throw std::invalid_argument("backward: output gradient shape mismatch");

  const double* p = params.values.data();
  double* g = grad.data();
  const int in_w = config.head_input_width();
  const int out_w = config.head_output_width();
  const std::size_t w1 = params.layout.slot("head.w1").offset;
  const std::size_t b1 = params.layout.slot("head.b1").offset;
  const std::size_t w2 = params.layout.slot("head.w2").offset;
  const std::size_t b2 = params.layout.slot("head.b2").offset;

  std::vector<double> d_seed_feature(S * h, 0.0);
  std::vector<double> d_global(h, 0.0);
  std::vector<double> du(h), dx(static_cast<std::size_t>(in_w));
  for (std::size_t j = 0; j < S; ++j) {
    const auto dout = output_grad.row(j);
    if (!any_nonzero(dout.data(), out_w)) continue;
    const double* u = &cache.head_hidden[j * h];
    dense_backward(p + w2, u, dout.data(), H, out_w, g + w2, g + b2, du.data());
    for (std::size_t c = 0; c < h; ++c)
      if (!(u[c] > 0.0)) du[c] = 0.0;
    dense_backward(p + w1, &cache.head_input[j * in_w], du.data(), in_w, H, g + w1, g + b1, dx.data());
    for (std::size_t c = 0; c < h; ++c) {
      d_seed_feature[j * h + c] += dx[3 + c];
      d_global[c] += dx[3 + h + c];
    }
  }

  const std::size_t n = cache.cloud.size();
  std::vector<double> d_backbone(n * h, 0.0);
  std::vector<double> scratch(3 * h);

  if (config.uses_grouping()) {
    const Mlp local = Mlp::at(params.layout, "local", H);
    const std::size_t total_members = cache.group_members.size();
    std::vector<double> d_local(total_members * h, 0.0);
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t c = 0; c < h; ++c) d_local[cache.local_argmax[j * h + c] * h + c] += d_seed_feature[j * h + c];
    for (std::size_t j = 0; j < S; ++j) {
      const Vec3& s = cache.cloud[cache.seeds[j]];
      for (std::size_t m = cache.group_begin[j]; m < cache.group_begin[j + 1]; ++m) {
        if (!any_nonzero(&d_local[m * h], H)) continue;
        const Vec3 rel = cache.cloud[cache.group_members[m]] - s;
        local.backward(p, rel.data(), &cache.local_hidden[m * h], &cache.local_out[m * h], &d_local[m * h], g,
                       scratch.data());
      }
    }
  } else {
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t c = 0; c < h; ++c) d_backbone[cache.seeds[j] * h + c] += d_seed_feature[j * h + c];
  }

  for (std::size_t c = 0; c < h; ++c) d_backbone[cache.global_argmax[c] * h + c] += d_global[c];

  const Mlp backbone = Mlp::at(params.layout, "backbone", H);
  for (std::size_t i = 0; i < n; ++i) {
    if (!any_nonzero(&d_backbone[i * h], H)) continue;
    backbone.backward(p, cache.cloud[i].data(), &cache.backbone_hidden[i * h], &cache.backbone_out[i * h],
                      &d_backbone[i * h], g, scratch.data());
  }
}

ParamVector backward(const ParamVector& params, const ForwardCache& cache, const OutputGradient& output_grad,
                     const DetectorConfig& config) {
  ParamVector grad{params.layout};
  backward_accumulate(params, cache, output_grad, config, grad.values);
  return grad;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

Assignment assign_targets(const ProposalSet& props, const std::vector<Box3D>& gts, const DetectorConfig& config) {
  const std::size_t S = props.size();
  Assignment a;
  a.nearest.assign(S, Assignment::kNone);
  a.positive.assign(S, false);
  a.regress_to.assign(S, Assignment::kNone);
  if (gts.empty()) return a;

  for (std::size_t j = 0; j < S; ++j) {
    const Proposal& prop = props[j];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double d = distance(prop.center, gts[g].center);
      if (d < best) {
        best = d;
        a.nearest[j] = static_cast<int>(g);
      }
    }
    a.positive[j] = best < config.positive_radius;

    double best_seed = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (!box_contains(gts[g], prop.seed_xyz, config.inside_margin)) continue;
      const double d = distance(prop.seed_xyz, gts[g].center);
      if (d < best_seed) {
        best_seed = d;
        a.regress_to[j] = static_cast<int>(g);
      }
    }
    if (a.regress_to[j] == Assignment::kNone && a.positive[j]) a.regress_to[j] = a.nearest[j];
  }
  return a;
}

SupervisedLoss supervised_loss(const ProposalSet& props, const std::vector<Box3D>& gts, const DetectorConfig& config) {
  const std::size_t S = props.size();
  const int K = config.class_count;
  const LossWeights& w = config.loss_weights;
  SupervisedLoss loss;
  loss.grad = OutputGradient(S, K);
  if (S == 0) return loss;

  const Assignment a = assign_targets(props, gts, config);

  const double inv_s = 1.0 / static_cast<double>(S);
  for (std::size_t j = 0; j < S; ++j) {
    const double y = a.positive[j] ? 1.0 : 0.0;
    const double o = props[j].objectness_logit;
    loss.objectness += (softplus(o) - y * o) * inv_s;
    loss.grad.objectness(j) = w.objectness * (sigmoid(o) - y) * inv_s;
    if (a.positive[j]) ++loss.positives;
  }

  for (std::size_t j = 0; j < S; ++j)
    if (a.regress_to[j] != Assignment::kNone) ++loss.regressed;
  if (loss.regressed > 0) {
    const double inv_r = 1.0 / static_cast<double>(loss.regressed);
    for (std::size_t j = 0; j < S; ++j) {
      if (a.regress_to[j] == Assignment::kNone) continue;
      const Proposal& prop = props[j];
      const Box3D& gt = gts[static_cast<std::size_t>(a.regress_to[j])];
      double* gc = loss.grad.center(j);
      double* gs = loss.grad.log_size(j);
      for (int k = 0; k < 3; ++k) {
        const double dc = prop.center[k] - gt.center[k];
        loss.center += smooth_l1(dc) * inv_r;
        gc[k] = w.center * smooth_l1_grad(dc) * inv_r;
        const double ds = prop.log_size[k] - std::log(gt.size[k]);
        loss.size += smooth_l1(ds) * inv_r;
        gs[k] = w.size * smooth_l1_grad(ds) * inv_r;
      }
      // Cross-entropy through a stable log-softmax.
      const auto& z = prop.class_logits;
      const double zmax = *std::max_element(z.begin(), z.end());
      double denom = 0.0;
      for (double v : z) denom += std::exp(v - zmax);
      const double log_norm = zmax + std::log(denom);
      loss.cls += (log_norm - z[gt.class_id]) * inv_r;
      double* gz = loss.grad.logits(j);
      for (int k = 0; k < K; ++k)
        gz[k] = w.cls * (prop.class_probs[k] - (k == gt.class_id ? 1.0 : 0.0)) * inv_r;
    }
  }

  loss.total = w.objectness * loss.objectness + w.center * loss.center + w.size * loss.size + w.cls * loss.cls;
  return loss;
}

double learning_rate_at(const AdamConfig& config, int epoch) {
  return epoch >= config.decay_epoch ? config.learning_rate * config.decay_factor : config.learning_rate;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: moment size mismatch");
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / corr1;
    const double v_hat = state.v[i] / corr2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

}  // namespace sess
