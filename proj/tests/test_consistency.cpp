// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sess/consistency.hpp"

using namespace sess;
using namespace sess::testing;

namespace {

ProposalSet at_centers(const std::vector<Vec3>& centers, int classes = 2) {
  ProposalSet ps;
  ps.class_count = classes;
  for (const auto& c : centers) {
    Proposal p;
    p.center = c;
    p.class_probs.assign(static_cast<std::size_t>(classes), 1.0 / classes);
    p.class_logits.assign(static_cast<std::size_t>(classes), 0.0);
    ps.proposals.push_back(p);
  }
  return ps;
}

ProposalSet translated(ProposalSet ps, const Vec3& v) {
  for (auto& p : ps.proposals) {
    p.center = p.center + v;
    p.seed_xyz = p.seed_xyz + v;
  }
  return ps;
}

}  // namespace

TEST_CASE("alignment examples") {
  const ProposalSet a = at_centers({{0, 0, 0}, {5, 0, 0}});
  const Alignment self = align(a, a);
  CHECK(self.teacher_to_student == std::vector<std::size_t>{0, 1});
  CHECK(self.student_to_teacher == std::vector<std::size_t>{0, 1});

  const Alignment al = align(a, at_centers({{4, 0, 0}}));
  CHECK(al.teacher_to_student == std::vector<std::size_t>{1});
  CHECK(al.student_to_teacher == std::vector<std::size_t>{0, 0});

  const Alignment tie = align(at_centers({{-1, 0, 0}, {1, 0, 0}}), at_centers({{0, 0, 0}}));
  CHECK(tie.teacher_to_student == std::vector<std::size_t>{0});
  CHECK(align(at_centers({}), a).empty());
}

TEST_CASE("alignment matches the brute-force matcher") {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const ProposalSet s = random_proposals(rng, 1 + rng.index(6), 3, 1.0);
    const ProposalSet t = random_proposals(rng, 1 + rng.index(6), 3, 1.0);
    const Alignment a = align(s, t);
    CHECK(a.teacher_to_student == nearest_oracle(t, s));
    CHECK(a.student_to_teacher == nearest_oracle(s, t));
  }
}

TEST_CASE("center loss examples") {
  const ProposalSet one = at_centers({{0, 0, 0}});
  CHECK(center_loss(one, one, align(one, one)) == 0.0);
  const ProposalSet two_m = at_centers({{2, 0, 0}});
  CHECK(center_loss(one, two_m, align(one, two_m)) == doctest::Approx(2.0).epsilon(1e-15));
  const ProposalSet s = at_centers({{0, 0, 0}, {1, 0, 0}});
  CHECK(center_loss(s, one, align(s, one)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("class loss examples") {
  ProposalSet s = at_centers({{0, 0, 0}});
  ProposalSet t = at_centers({{0, 0, 0}});
  CHECK(class_loss(s, t, align(s, t)) == 0.0);
  t.proposals[0].class_probs = {0.9, 0.1};
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(class_loss(s, t, align(s, t)) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.5108).epsilon(1e-4));
  t.proposals[0].class_probs = {1.0, 0.0};
  const double clamped = class_loss(s, t, align(s, t));
  CHECK(std::isfinite(clamped));
  CHECK(clamped > 0.0);
  CHECK(clamped_kl({0.5, 0.5}, {1.0, 0.0}) == doctest::Approx(clamped));
}

TEST_CASE("size loss examples") {
  ProposalSet s = at_centers({{0, 0, 0}});
  ProposalSet t = at_centers({{0, 0, 0}});
  CHECK(size_loss(s, t, align(s, t)) == 0.0);
  s.proposals[0].size = {1, 1, 1};
  t.proposals[0].size = {1, 1, 4};
  CHECK(size_loss(s, t, align(s, t)) == doctest::Approx(9.0).epsilon(1e-15));
  ProposalSet s2 = at_centers({{0, 0, 0}, {10, 0, 0}});
  ProposalSet t2 = at_centers({{0, 0, 0}, {10, 0, 0}});
  s2.proposals[0].size = {1, 1, 1};
  t2.proposals[0].size = {1, 1, 4};
  s2.proposals[1].size = {1, 1, 1};
  t2.proposals[1].size = {1, 2, 1};
  CHECK(size_loss(s2, t2, align(s2, t2)) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("weighted total") {
  // center 1 (one pair 1 m apart), class 0, size 3 (squared norm 3).
  ProposalSet s = at_centers({{0, 0, 0}});
  ProposalSet t = at_centers({{1, 0, 0}});
  s.proposals[0].size = {1, 1, 1};
  t.proposals[0].size = {2, 2, 2};
  const ConsistencyLoss l = total_consistency(s, t, ConsistencyWeights{});
  CHECK(l.center == doctest::Approx(1.0));
  CHECK(l.size == doctest::Approx(3.0));
  CHECK(l.total == doctest::Approx(l.center + 2.0 * l.cls + l.size));

  const ConsistencyLoss off = total_consistency(s, t, ConsistencyWeights{0.0, 0.0, 0.0, 0.0});
  CHECK(off.total == 0.0);
  for (double g : off.grad.values()) CHECK(g == 0.0);
}

TEST_CASE("identical sets give zero loss and losses are non-negative") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const ProposalSet a = random_proposals(rng, 1 + rng.index(8), 4);
    const ConsistencyLoss self = total_consistency(a, a, ConsistencyWeights{3.0, 5.0, 7.0, 0.0});
    CHECK(self.center < 1e-12);
    CHECK(self.cls < 1e-12);
    CHECK(self.size < 1e-12);
    const ProposalSet b = random_proposals(rng, 1 + rng.index(8), 4);
    const ConsistencyLoss ab = total_consistency(a, b, ConsistencyWeights{});
    CHECK(ab.center >= 0.0);
    CHECK(ab.cls >= 0.0);
    CHECK(ab.size >= 0.0);
  }
}

TEST_CASE("joint translation leaves every loss unchanged") {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const ProposalSet a = random_proposals(rng, 1 + rng.index(6), 3);
    const ProposalSet b = random_proposals(rng, 1 + rng.index(6), 3);
    const Vec3 v{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const ConsistencyLoss before = total_consistency(a, b, ConsistencyWeights{});
    const ConsistencyLoss after = total_consistency(translated(a, v), translated(b, v), ConsistencyWeights{});
    CHECK(std::abs(before.center - after.center) < 1e-9);
    CHECK(std::abs(before.cls - after.cls) < 1e-9);
    CHECK(std::abs(before.size - after.size) < 1e-9);
  }
}

TEST_CASE("gradient covers student outputs only") {
  Rng rng(23);
  const ProposalSet s = random_proposals(rng, 5, 3);
  const ProposalSet t = random_proposals(rng, 7, 3);
  const ConsistencyLoss l = total_consistency(s, t, ConsistencyWeights{});
  CHECK(l.grad.proposal_count() == s.size());
  CHECK(l.grad.class_count() == 3);
}

TEST_CASE("objectness filter drops low-confidence proposals") {
  ProposalSet s = at_centers({{0, 0, 0}, {3, 0, 0}});
  ProposalSet t = at_centers({{0, 0, 0}});
  s.proposals[0].objectness = 0.9;
  s.proposals[1].objectness = 0.1;
  t.proposals[0].objectness = 0.9;
  ConsistencyWeights w;
  CHECK(total_consistency(s, t, w).center > 0.0);
  w.objectness_filter = 0.5;
  const ConsistencyLoss filtered = total_consistency(s, t, w);
  CHECK(filtered.center == 0.0);
  CHECK(filtered.grad.proposal_count() == 2);
}
